"""Residual bootstrap for pointwise variability of a truncated slope estimate.

Each replicate adds resampled centred residuals to the fitted values and
re-runs the fit at the already chosen penalty: m is re-selected by BIC and
the truncation point is searched again unless ``freeze_theta`` is set.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, TruncFLRError
from .flm import DEFAULT_M_RANGE, bic_select_m, select_by_bic
from .fpca import eigensystem_cache
from .truncated import ThetaGrid, fit_method_a, fit_method_b, method_a_profile


@dataclass(frozen=True, eq=False)
class BootstrapBands:
    grid: object
    b_hat: np.ndarray
    pointwise_sd: np.ndarray
    B: int
    replicate_curves: np.ndarray | None = None
    thetas: np.ndarray | None = None
    ms: np.ndarray | None = None
    retries: int = 0

    @property
    def lower(self):
        return self.b_hat - 2.0 * self.pointwise_sd

    @property
    def upper(self):
        return self.b_hat + 2.0 * self.pointwise_sd

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "b_hat", "sd", "lower", "upper"])
        for row in zip(self.grid.points, self.b_hat, self.pointwise_sd, self.lower, self.upper):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def fitted_values(fit, curves):
    """a_hat + int_0^theta_hat b_hat X_i for a TruncatedFit."""
    w = curves.grid.restricted_weights(fit.theta_hat)
    return fit.a_hat + curves.values @ (w * fit.b_hat)


def centred_residuals(fit, curves, y):
    r = np.asarray(y, dtype=float) - fitted_values(fit, curves)
    return r - r.mean()


def _uniform_resample(rng, residuals):
    return residuals[rng.integers(0, residuals.size, residuals.size)]


@dataclass
class _Refitter:
    """Everything a replicate needs; the curves never change so eigensystems are shared."""

    curves: object
    method: str
    lam: float
    m_range: tuple
    theta_grid: ThetaGrid
    cache: dict
    bic_form: str
    penalty_power: float
    refit_b: bool

    def __call__(self, ystar):
        if self.method == "A":
            fits = {}
            for m in self.m_range:
                try:
                    prof = method_a_profile(self.curves, ystar, m, self.theta_grid, self.cache)
                    fits[m] = fit_method_a(self.curves, ystar, m, self.lam, self.theta_grid,
                                           penalty_power=self.penalty_power, profile=prof)
                except TruncFLRError as exc:
                    fits[m] = exc
            sel = select_by_bic(fits, self.curves.n, self.bic_form)
            return sel.fit, sel.m
        sel = bic_select_m(self.curves, ystar, self.m_range, self.bic_form, es=self.cache[1.0])
        f = fit_method_b(sel.fit, self.curves, ystar, self.lam, self.theta_grid,
                         self.penalty_power, refit=self.refit_b)
        return f, sel.m


def _replicate(args):
    refit, base, resid, seed, index, max_retries, resampler = args
    for attempt in range(max_retries + 1):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, attempt)))
        ystar = base + resampler(rng, resid)
        try:
            f, m = refit(ystar)
        except (TruncFLRError, np.linalg.LinAlgError):
            continue
        return f.b_hat, f.theta_hat, m, attempt
    raise NumericalError(f"bootstrap replicate {index} failed {max_retries + 1} times")


def residual_bootstrap(
    curves,
    y,
    fit,
    B=200,
    seed=0,
    m_range=DEFAULT_M_RANGE,
    theta_grid=None,
    freeze_theta=False,
    bic_form="standard",
    refit_b=False,
    max_retries=5,
    threads=1,
    retain=False,
    resampler=None,
):
    """Pointwise sd of b_hat over B residual-bootstrap refits at the fit's lambda.

    ``resampler(rng, residuals)`` may replace i.i.d. resampling with
    replacement (used to force degenerate draws in tests). Replicate r uses
    the stream SeedSequence(seed, spawn_key=(r, attempt)), so results do not
    depend on ``threads``.
    """
    if B < 2:
        raise DomainError(f"need B >= 2 bootstrap replicates, got {B}")
    if fit.method not in ("A", "B"):
        raise DomainError(f"unknown fit method {fit.method!r}")
    m_range = tuple(m_range)
    if freeze_theta:
        theta_grid = ThetaGrid([fit.theta_hat])
    elif theta_grid is None:
        theta_grid = ThetaGrid(fit.thetas)
    elif not isinstance(theta_grid, ThetaGrid):
        theta_grid = ThetaGrid(theta_grid)
    thetas = sorted(set(theta_grid) | {1.0})
    cache = eigensystem_cache(curves, thetas, max(m_range))
    refit = _Refitter(curves, fit.method, fit.lam, m_range, theta_grid, cache,
                      bic_form, fit.penalty_power, refit_b)
    base = fitted_values(fit, curves)
    resid = centred_residuals(fit, curves, y)
    jobs = [(refit, base, resid, seed, r, max_retries, resampler or _uniform_resample) for r in range(B)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(_replicate, jobs))
    else:
        out = [_replicate(j) for j in jobs]
    curves_b = np.stack([o[0] for o in out])
    sd = curves_b.std(axis=0, ddof=1)
    return BootstrapBands(
        grid=curves.grid,
        b_hat=np.asarray(fit.b_hat, dtype=float),
        pointwise_sd=sd,
        B=B,
        replicate_curves=curves_b if retain else None,
        thetas=np.array([o[1] for o in out]),
        ms=np.array([o[2] for o in out]),
        retries=int(sum(o[3] for o in out)),
    )
