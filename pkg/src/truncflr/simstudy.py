"""Monte Carlo study: trigonometric covariate process, three truncated slopes.

Covariates are X_i = sum_{k<=25} Z_ik eta_k with Z_ik ~ N(0, exp(-(k-1)/4)).
Each slope is zero beyond theta0 and scaled so that Var(int b X) equals
snr * noise_sd^2 under the exact covariance of the process.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, TruncFLRError
from .numerics import CurveSet, Grid, inner_product, integrate_rows, trig_basis
from .tuning import TuningContext, TuningOptions, select_lambda

MODELS = (1, 2, 3)


@dataclass(frozen=True)
class SimConfig:
    model_id: int = 1
    n: int = 100
    G: int = 101
    n_components: int = 25
    decay: float = 0.25
    snr: float = 26.25
    noise_sd: float = 1.0
    theta0: float = 0.5
    a0: float = 0.0
    replicates: int = 400
    seed: int = 20140601

    def __post_init__(self):
        if self.model_id not in MODELS:
            raise DomainError(f"model_id must be one of {MODELS}, got {self.model_id}")
        for name in ("n", "G", "n_components", "replicates"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive")
        if not (self.decay > 0 and self.snr > 0 and self.noise_sd >= 0):
            raise DomainError("decay and snr must be positive, noise_sd non-negative")
        if not 0 < self.theta0 < 1:
            raise DomainError("theta0 must lie in (0, 1)")

    @property
    def grid(self):
        return Grid.uniform(self.G)

    def component_variances(self):
        k = np.arange(1, self.n_components + 1)
        return np.exp(-(k - 1) * self.decay)


def replicate_rng(seed, index):
    """Independent stream for replicate ``index`` of a study seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def basis_matrix(config, grid=None):
    grid = grid or config.grid
    return np.stack([trig_basis(k, grid) for k in range(1, config.n_components + 1)])


def gen_x(config, replicate_seed, grid=None):
    grid = grid or config.grid
    rng = _rng(replicate_seed)
    sd = np.sqrt(config.component_variances())
    Z = rng.standard_normal((config.n, config.n_components)) * sd
    return CurveSet(grid, Z @ basis_matrix(config, grid))


def analytic_covariance(config, grid=None):
    E = basis_matrix(config, grid)
    return (E.T * config.component_variances()) @ E


def slope_shape(model_id, grid, theta0=0.5):
    t = grid.points
    if model_id == 1:
        return np.where(t <= theta0 + 1e-12, 1.0, 0.0)
    inside = t < theta0 - 1e-12
    if model_id == 2:
        return np.where(inside, np.sin(2 * np.pi * t), 0.0)
    if model_id == 3:
        return np.where(inside, np.cos(2 * np.pi * t) + 1.0, 0.0)
    raise DomainError(f"unknown model {model_id}")


def signal_variance(b, config, grid=None):
    """Var(int b X) = sum_k v_k <b, eta_k>^2 by quadrature."""
    grid = grid or config.grid
    proj = basis_matrix(config, grid) @ (grid.weights * b)
    return float(np.sum(config.component_variances() * proj**2))


def model_slope(model_id, grid, config):
    """Slope shape of the model scaled to the configured signal-to-noise ratio."""
    shape = slope_shape(model_id, grid, config.theta0)
    v = signal_variance(shape, config, grid)
    if not v > 0:
        raise NumericalError(f"model {model_id} slope has zero signal variance")
    c = math.sqrt(config.snr * config.noise_sd**2 / v)
    return c * shape


def gen_y(curves, b0, a0, noise_sd, seed):
    rng = _rng(seed)
    signal = integrate_rows(curves.values, b0, curves.grid, 1.0)
    return a0 + signal + noise_sd * rng.standard_normal(curves.n)


def ise(b, b0, grid):
    d = np.asarray(b) - np.asarray(b0)
    return inner_product(d, d, grid)


# ---------------------------------------------------------------------------
# replicate runner

RECORD_FIELDS = (
    "replicate", "theta_a", "theta_b", "ise_a", "ise_b", "ise_notrunc",
    "m_a", "m_b", "lambda_a", "lambda_b",
)


def simulate_dataset(config, index):
    rng = replicate_rng(config.seed, index)
    grid = config.grid
    curves = gen_x(config, rng, grid)
    b0 = model_slope(config.model_id, grid, config)
    y = gen_y(curves, b0, config.a0, config.noise_sd, rng)
    return curves, y, b0


def run_replicate(config, index, options=None):
    options = options or TuningOptions()
    curves, y, b0 = simulate_dataset(config, index)
    grid = curves.grid
    ctx = TuningContext.build(curves, y, options)
    rep_a = select_lambda(curves, y, "A", options=options, context=ctx)
    rep_b = select_lambda(curves, y, "B", options=options, context=ctx)
    fa, fb = rep_a.fit, rep_b.fit
    return {
        "replicate": index,
        "theta_a": fa.theta_hat,
        "theta_b": fb.theta_hat,
        "ise_a": ise(fa.b_hat, b0, grid),
        "ise_b": ise(fb.b_hat, b0, grid),
        "ise_notrunc": ise(ctx.pilot.b_check, b0, grid),
        "m_a": int(rep_a.m_star),
        "m_b": int(ctx.pilot.m),
        "lambda_a": rep_a.lambda_star,
        "lambda_b": rep_b.lambda_star,
    }


def _safe_replicate(args):
    config, index, options = args
    try:
        return run_replicate(config, index, options), None
    except (TruncFLRError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return None, {"replicate": index, "error": f"{type(exc).__name__}: {exc}"}


def _summ(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return {"mean": float("nan"), "sd": float("nan"), "median": float("nan")}
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return {"mean": float(np.mean(x)), "sd": sd, "median": float(np.median(x))}


def summarize(records):
    cols = {k: [r[k] for r in records] for k in RECORD_FIELDS}
    return {
        "n_ok": len(records),
        "theta_a": _summ(cols["theta_a"]),
        "theta_b": _summ(cols["theta_b"]),
        "ise_a": _summ(cols["ise_a"]),
        "ise_b": _summ(cols["ise_b"]),
        "ise_notrunc": _summ(cols["ise_notrunc"]),
        "m_a": _summ(cols["m_a"]),
        "m_b": _summ(cols["m_b"]),
    }


@dataclass
class StudyReport:
    config: SimConfig
    options: TuningOptions
    records: list
    failures: list = field(default_factory=list)

    @property
    def summary(self):
        return summarize(self.records)

    def to_dict(self):
        return {
            "config": asdict(self.config),
            "options": self.options.to_dict(),
            "records": self.records,
            "failures": self.failures,
            "summary": self.summary,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def records_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=RECORD_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.records:
            w.writerow({k: repr(r[k]) if isinstance(r[k], float) else r[k] for k in RECORD_FIELDS})
        return buf.getvalue()


def run_study(config, options=None, threads=1):
    """Run every replicate; results are ordered by replicate index whatever ``threads`` is."""
    options = options or TuningOptions()
    jobs = [(config, i, options) for i in range(config.replicates)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(_safe_replicate, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        out = [_safe_replicate(j) for j in jobs]
    records = [r for r, _ in out if r is not None]
    failures = [f for _, f in out if f is not None]
    return StudyReport(config, options, records, failures)


def theta_table(reports):
    """Mean/sd of theta estimates per model, one row per model."""
    lines = [
        "            Method A            Method B",
        "         Mean     Std. Dev.   Mean     Std. Dev.",
    ]
    for rep in reports:
        s = rep.summary
        lines.append(
            f"Model {rep.config.model_id}  {s['theta_a']['mean']:.4f}   {s['theta_a']['sd']:.4f}      "
            f"{s['theta_b']['mean']:.4f}   {s['theta_b']['sd']:.4f}"
        )
    return "\n".join(lines) + "\n"


def ise_table(reports):
    """Mean and median integrated squared error per model and method."""
    out = []
    for title, stat in (("Mean Squared Error", "mean"), ("Median Squared Error", "median")):
        out.append(title)
        out.append("          Method A     Method B     No Trunc.")
        for rep in reports:
            s = rep.summary
            out.append(
                f"Model {rep.config.model_id}  {s['ise_a'][stat]:11.4f}  {s['ise_b'][stat]:11.4f}  "
                f"{s['ise_notrunc'][stat]:11.4f}"
            )
        out.append("")
    return "\n".join(out)
