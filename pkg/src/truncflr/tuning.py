"""Penalty selection through a parametric surrogate slope.

The recipe: fit a pilot PC regression (m by BIC) and its residual variance;
fit a three-parameter trigonometric slope truncated at some theta_bar
(``fit_bsimp``); compute, for every theta, the prediction risk S_Y and the
slope risk S_b that Method A or B would incur on noiseless surrogate data;
for every lambda take theta_lambda from S_Y + lambda theta^2 with a Laplace
variance V(lambda), and score lambda by the Gaussian average of S_b around
theta_lambda. For Method A the whole loop is repeated per m and m is chosen
by BIC on the real-data fits.

Several scalings in the recipe admit more than one reading; each is a field
of :class:`TuningOptions` (defaults documented there and in the README).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import IllConditionedError, InsufficientDataError, TruncFLRError
from .flm import DEFAULT_M_RANGE, bic_select_m, fit_pc_regression, select_by_bic
from .fpca import eigensystem, eigensystem_cache, max_components
from .numerics import integrate_rows, trapezoid_weights
from .truncated import (
    ThetaGrid,
    _feasible_m,
    fit_method_a,
    fit_method_b,
    method_a_profile,
    select_index,
)

CURVATURE_EPS = 1e-8


@dataclass(frozen=True)
class TuningOptions:
    """Knobs of the tuning pipeline.

    risk_scale: "mean" divides S_Y by n before adding lambda*theta^2, which
        matches the n*lambda*theta^2 penalty of the fitting objectives and the
        sigma^2/n factor in V(lambda); "sum" uses S_Y as is.
    tau_scale: "sum" takes the variance components tau_j as n times the
        covariance eigenvalues (sums of squared scores); "mean" takes them
        equal to the eigenvalues.
    sy_target: "noiseless" compares surrogate predictions with the noiseless
        surrogate responses, "observed" with the observed y.
    sb_b_eigs: eigenvalues paired with the full-domain eigenfunctions in the
        Method B slope risk: "truncated" (tau_j^theta) or "full" (tau_j^1).
    """

    m_range: tuple = tuple(DEFAULT_M_RANGE)
    bic_form: str = "standard"
    lambda_grid: tuple | None = None
    n_lambda: int = 25
    lambda_span: tuple = (1e-5, 1e2)
    theta_min: float = 0.05
    theta_max: float = 1.0
    bsimp_k: int = 1
    bsimp_terms: int = 2
    risk_scale: str = "mean"
    tau_scale: str = "sum"
    sy_target: str = "noiseless"
    sb_b_eigs: str = "truncated"
    penalty_power: float = 2.0
    refit_b: bool = False
    lambda_per_m: bool = False

    def to_dict(self):
        d = asdict(self)
        d["m_range"] = list(self.m_range)
        d["lambda_span"] = list(self.lambda_span)
        if self.lambda_grid is not None:
            d["lambda_grid"] = list(self.lambda_grid)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("m_range", "lambda_span", "lambda_grid"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    def with_(self, **kw):
        return replace(self, **kw)


def default_lambda_grid(y, options=None):
    options = options or TuningOptions()
    lo, hi = options.lambda_span
    v = float(np.var(np.asarray(y, dtype=float)))
    if not v > 0:
        v = 1.0
    return np.geomspace(lo, hi, options.n_lambda) * v


# ---------------------------------------------------------------------------
# parametric surrogate slope


@dataclass(frozen=True, eq=False)
class SimpleModel:
    """{c0 + c1 sin(2^k pi t) + c2 cos(2^k pi t)} on [0, theta_bar], zero after."""

    k: int
    c0: float
    c1: float
    c2: float
    theta_bar: float
    a: float
    curve: np.ndarray
    rss: float = float("nan")

    @property
    def coefficients(self):
        return np.array([self.c0, self.c1, self.c2])


def bsimp_basis(grid, k=1, n_terms=3):
    """Rows 1, sin(2^k pi t), cos(2^k pi t), keeping the first n_terms."""
    t = grid.points
    f = 2.0**k * np.pi
    rows = [np.ones_like(t), np.sin(f * t), np.cos(f * t)]
    return np.stack(rows[:n_terms])


def simple_curve(grid, k, coefs, theta_bar):
    c = np.zeros(3)
    c[: len(coefs)] = coefs
    body = bsimp_basis(grid, k, 3).T @ c
    return np.where(grid.points <= theta_bar + 1e-12, body, 0.0)


def fit_bsimp(curves, y, k=1, theta_grid=None, n_terms=3):
    """Profile least squares for (a, c, theta_bar) over the theta grid.

    For each candidate theta the model y ~ a + int_0^theta {c . basis} X is
    linear in (a, c); the theta with the smallest residual sum of squares wins
    (smallest theta among numerical ties).
    """
    y = np.asarray(y, dtype=float)
    n = curves.n
    if n < 5:
        raise InsufficientDataError(f"need n >= 5 to fit the surrogate slope, got {n}")
    if theta_grid is None:
        theta_grid = ThetaGrid.from_grid(curves.grid)
    basis = bsimp_basis(curves.grid, k, n_terms)
    grid = curves.grid
    results = []
    for th in theta_grid:
        w = grid.restricted_weights(th)
        D = np.column_stack([np.ones(n), curves.values @ (w * basis).T])
        coef, _, rank, sv = np.linalg.lstsq(D, y, rcond=None)
        if rank < D.shape[1] or sv[-1] < 1e-10 * sv[0]:
            continue
        r = y - D @ coef
        results.append((float(th), float(r @ r), coef))
    if not results:
        raise IllConditionedError("surrogate design singular at every theta")
    rss = np.array([r[1] for r in results])
    scale = float(np.sum(y**2)) + 1e-300
    best = int(np.flatnonzero(rss <= rss.min() + 1e-10 * scale)[0])
    th, r, coef = results[best]
    c = np.zeros(3)
    c[:n_terms] = coef[1:]
    curve = simple_curve(grid, k, c, th)
    curve.setflags(write=False)
    return SimpleModel(k, float(c[0]), float(c[1]), float(c[2]), th, float(coef[0]), curve, r)


def noiseless_responses(curves, bsimp, a_check):
    """a_check + int_I b_simp X_i."""
    return a_check + integrate_rows(curves.values, bsimp.curve, curves.grid, 1.0)


# ---------------------------------------------------------------------------
# surrogate risks


@dataclass
class RiskCurves:
    method: str
    thetas: np.ndarray
    S_Y: np.ndarray
    S_b: np.ndarray
    m: int
    m_used: np.ndarray


def _tau(eigenvalues, n, options):
    return eigenvalues * n if options.tau_scale == "sum" else eigenvalues


def _risk_a_at(curves, ystar, target, bsimp, sigma2, m, theta, es, options):
    fit = fit_pc_regression(curves, ystar, m, theta, es=es)
    pred = fit.a_check + integrate_rows(curves.values, fit.b_check, curves.grid, theta)
    S_Y = float(np.sum((target - pred) ** 2)) + sigma2 * (m + 1)
    diff = bsimp.curve - fit.b_check
    tau = _tau(fit.es.eigenvalues, curves.n, options)
    S_b = float(np.dot(curves.grid.weights * diff, diff)) + sigma2 * float(np.sum(1.0 / tau))
    return S_Y, S_b


def surrogate_risks_a(curves, bsimp, a_check, sigma2_hat, m, theta, es=None, options=None, y=None):
    """(S_Y^A, S_b^A) at one theta using the [0, theta] eigenbasis with m terms."""
    options = options or TuningOptions()
    if es is None:
        es = eigensystem(curves, theta, m)
    ystar = noiseless_responses(curves, bsimp, a_check)
    target = ystar if options.sy_target == "noiseless" else np.asarray(y, dtype=float)
    return _risk_a_at(curves, ystar, target, bsimp, sigma2_hat, m, theta, es, options)


def risk_curves_a(curves, bsimp, a_check, sigma2_hat, m, theta_grid, cache, options, y=None):
    ystar = noiseless_responses(curves, bsimp, a_check)
    target = ystar if options.sy_target == "noiseless" else np.asarray(y, dtype=float)
    rows = []
    for th in theta_grid:
        es = cache.get(float(th))
        mm = min(m, _feasible_m(es, m), curves.n - 2)
        if mm < 1:
            continue
        try:
            s_y, s_b = _risk_a_at(curves, ystar, target, bsimp, sigma2_hat, mm, th, es, options)
        except IllConditionedError:
            continue
        rows.append((th, s_y, s_b, mm))
    if not rows:
        raise TruncFLRError(f"no feasible theta for the Method A risk with m={m}")
    arr = np.array(rows)
    return RiskCurves("A", arr[:, 0], arr[:, 1], arr[:, 2], m, arr[:, 3].astype(int))


def _b_pieces(curves, bsimp, a_check, m, full_es, y, options):
    ystar = noiseless_responses(curves, bsimp, a_check)
    star = fit_pc_regression(curves, ystar, m, 1.0, es=full_es)
    target = ystar if options.sy_target == "noiseless" else np.asarray(y, dtype=float)
    return ystar, star, target


def _risk_b_at(curves, star, target, bsimp, sigma2, theta, tau_theta, options):
    grid = curves.grid
    es1 = star.es
    n = curves.n
    w = grid.restricted_weights(theta)
    pred = star.a_check + curves.values @ (w * star.b_check)
    dev = curves.values - es1.mean_curve
    proj = dev @ (w[:, None] * es1.eigenfunctions.T)
    tau1 = _tau(es1.eigenvalues, n, options)
    S_Y = float(np.sum((target - pred) ** 2)) + sigma2 * float(np.sum(np.sum(proj**2, axis=0) / tau1))
    trunc = np.where(grid.points <= theta + 1e-12, star.b_check, 0.0)
    diff = bsimp.curve - trunc
    part = (es1.eigenfunctions**2) @ w
    tau_b = tau1 if options.sb_b_eigs == "full" else tau_theta
    S_b = float(np.dot(grid.weights * diff, diff)) + sigma2 * float(np.sum(part / tau_b))
    return S_Y, S_b


def _tau_theta(es_theta, m, n, options):
    """Leading m truncated eigenvalues, repeating the smallest if fewer exist."""
    lam = np.asarray(es_theta.eigenvalues[:m], dtype=float)
    lam = lam[lam > 0]
    if lam.size == 0:
        return None
    if lam.size < m:
        lam = np.concatenate([lam, np.full(m - lam.size, lam[-1])])
    return _tau(lam, n, options)


def surrogate_risks_b(curves, bsimp, a_check, sigma2_hat, m, theta, full_es=None, es_theta=None, options=None, y=None):
    """(S_Y^B, S_b^B) at one theta from the untruncated surrogate fit with m terms."""
    options = options or TuningOptions()
    if full_es is None:
        full_es = eigensystem(curves, 1.0, m)
    _, star, target = _b_pieces(curves, bsimp, a_check, m, full_es, y, options)
    tau_theta = None
    if options.sb_b_eigs != "full":
        if es_theta is None:
            es_theta = eigensystem(curves, theta, min(m, max_components(curves, theta)))
        tau_theta = _tau_theta(es_theta, m, curves.n, options)
    return _risk_b_at(curves, star, target, bsimp, sigma2_hat, theta, tau_theta, options)


def risk_curves_b(curves, bsimp, a_check, sigma2_hat, m, theta_grid, cache, full_es, options, y=None):
    _, star, target = _b_pieces(curves, bsimp, a_check, m, full_es, y, options)
    rows = []
    for th in theta_grid:
        tau_theta = None
        if options.sb_b_eigs != "full":
            es = cache.get(float(th))
            tau_theta = None if es is None else _tau_theta(es, m, curves.n, options)
            if tau_theta is None:
                continue
        s_y, s_b = _risk_b_at(curves, star, target, bsimp, sigma2_hat, th, tau_theta, options)
        rows.append((th, s_y, s_b))
    arr = np.array(rows)
    return RiskCurves("B", arr[:, 0], arr[:, 1], arr[:, 2], m, np.full(len(rows), m))


# ---------------------------------------------------------------------------
# lambda scoring


def second_derivative(thetas, values, i):
    """Three-point second difference at index i (one-sided stencil at the ends)."""
    t = np.asarray(thetas, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 3:
        raise ValueError("need at least three theta points")
    j = min(max(i, 1), t.size - 2)
    h1 = t[j] - t[j - 1]
    h2 = t[j + 1] - t[j]
    return 2.0 * ((v[j + 1] - v[j]) / h2 - (v[j] - v[j - 1]) / h1) / (h1 + h2)


@dataclass(frozen=True)
class ThetaLambda:
    theta: float
    V: float
    curvature: float
    degenerate: bool
    index: int

    def __iter__(self):
        return iter((self.theta, self.V))


def theta_lambda_and_variance(thetas, risk, lam, sigma2, n, method="A", penalty_power=2.0):
    """theta_lambda from risk + lam*theta^p and V = (sigma2/n) S''/(S''+lam)^2.

    Method A takes the global minimiser, Method B the first local minimum.
    S'' is clamped below at CURVATURE_EPS; hitting the clamp sets ``degenerate``.
    """
    thetas = np.asarray(thetas, dtype=float)
    risk = np.asarray(risk, dtype=float)
    if thetas.size < 3:
        raise ValueError("risk curve needs at least three points")
    obj = risk + lam * thetas**penalty_power
    i = select_index(obj, "argmin" if method == "A" else "first_min")
    curv = second_derivative(thetas, risk, i)
    degenerate = not curv > CURVATURE_EPS
    if degenerate:
        curv = CURVATURE_EPS
    V = sigma2 / n * curv / (curv + lam) ** 2
    return ThetaLambda(float(thetas[i]), float(V), float(curv), degenerate, i)


def p_b(thetas, risk_b, theta_lambda, V):
    """Average of S_b under N(theta_lambda, V) restricted to the theta grid.

    Trapezoid weights on the theta grid times the normal density, renormalised
    to unit mass over [theta_min, theta_max].
    """
    if not V > 0:
        raise ValueError("V must be positive")
    t = np.asarray(thetas, dtype=float)
    s = np.asarray(risk_b, dtype=float)
    logd = -((t - theta_lambda) ** 2) / (2.0 * V)
    d = np.exp(logd - logd.max())
    w = trapezoid_weights(t) if t.size > 1 else np.ones(1)
    mass = w * d
    total = mass.sum()
    if not total > 0:
        k = int(np.argmin(np.abs(t - theta_lambda)))
        return float(s[k])
    return float(mass @ s / total)


# ---------------------------------------------------------------------------
# the full loop


@dataclass
class TuningReport:
    method: str
    m: int
    lambda_grid: np.ndarray
    theta_lambda: np.ndarray
    V: np.ndarray
    P_b: np.ndarray
    degenerate: np.ndarray
    lambda_star: float
    risk: RiskCurves
    sigma2_hat: float
    a_check: float
    pilot_m: int
    bsimp: SimpleModel
    bic_table: dict = field(default_factory=dict)
    m_star: int | None = None
    per_m: dict = field(default_factory=dict)
    fit: object = None

    def records(self):
        return [
            {"lambda": float(l), "theta_lambda": float(t), "V": float(v), "P_b": float(p), "degenerate": bool(d)}
            for l, t, v, p, d in zip(self.lambda_grid, self.theta_lambda, self.V, self.P_b, self.degenerate)
        ]


def score_lambdas(risk, lambda_grid, sigma2, n, options):
    """Per-lambda theta_lambda, V and P_b; returns arrays and the chosen index."""
    scale = n if options.risk_scale == "mean" else 1.0
    s_y = risk.S_Y / scale
    tl, V, P, deg = [], [], [], []
    for lam in lambda_grid:
        r = theta_lambda_and_variance(risk.thetas, s_y, lam, sigma2, n, risk.method, options.penalty_power)
        tl.append(r.theta)
        V.append(r.V)
        deg.append(r.degenerate)
        P.append(p_b(risk.thetas, risk.S_b, r.theta, r.V))
    P = np.array(P)
    best = int(np.argmin(P))
    return np.array(tl), np.array(V), P, np.array(deg), best


@dataclass
class TuningContext:
    """Data-level quantities shared by every (method, m) run on one dataset."""

    curves: object
    y: np.ndarray
    options: TuningOptions
    theta_grid: ThetaGrid
    cache: dict
    full_es: object
    pilot: object
    pilot_selection: object
    bsimp: SimpleModel
    lambda_grid: np.ndarray

    @classmethod
    def build(cls, curves, y, options=None, theta_grid=None, lambda_grid=None, pilot_m=None):
        options = options or TuningOptions()
        y = np.asarray(y, dtype=float)
        if theta_grid is None:
            theta_grid = ThetaGrid.from_grid(curves.grid, options.theta_min, options.theta_max)
        elif not isinstance(theta_grid, ThetaGrid):
            theta_grid = ThetaGrid(theta_grid)
        m_max = max(options.m_range)
        cache = eigensystem_cache(curves, theta_grid, m_max)
        full_es = cache.get(1.0)
        if full_es is None:
            full_es = eigensystem(curves, 1.0, min(m_max, max_components(curves, 1.0)))
        m_range = [pilot_m] if pilot_m is not None else options.m_range
        sel = bic_select_m(curves, y, m_range, options.bic_form, es=full_es)
        bsimp = fit_bsimp(curves, y, options.bsimp_k, theta_grid, options.bsimp_terms)
        if lambda_grid is None:
            lambda_grid = options.lambda_grid
        if lambda_grid is None:
            lambda_grid = default_lambda_grid(y, options)
        lambda_grid = np.asarray(lambda_grid, dtype=float)
        if lambda_grid.size == 0:
            raise ValueError("lambda grid is empty")
        return cls(curves, y, options, theta_grid, cache, full_es, sel.fit, sel, bsimp, lambda_grid)

    @property
    def sigma2_hat(self):
        return self.pilot.sigma2_hat

    @property
    def a_check(self):
        return self.pilot.a_check


def _report(ctx, risk, method, m):
    n = ctx.curves.n
    tl, V, P, deg, best = score_lambdas(risk, ctx.lambda_grid, ctx.sigma2_hat, n, ctx.options)
    return TuningReport(
        method=method, m=m, lambda_grid=ctx.lambda_grid, theta_lambda=tl, V=V, P_b=P,
        degenerate=deg, lambda_star=float(ctx.lambda_grid[best]), risk=risk,
        sigma2_hat=ctx.sigma2_hat, a_check=ctx.a_check, pilot_m=ctx.pilot.m, bsimp=ctx.bsimp,
    )


def tune_a_for_m(ctx, m):
    risk = risk_curves_a(ctx.curves, ctx.bsimp, ctx.a_check, ctx.sigma2_hat, m,
                         ctx.theta_grid, ctx.cache, ctx.options, ctx.y)
    return _report(ctx, risk, "A", m)


def tune_b(ctx):
    m = ctx.pilot.m
    full = ctx.full_es.top(m)
    risk = risk_curves_b(ctx.curves, ctx.bsimp, ctx.a_check, ctx.sigma2_hat, m,
                         ctx.theta_grid, ctx.cache, full, ctx.options, ctx.y)
    return _report(ctx, risk, "B", m)


def run_method_a(ctx, m_range=None, lam=None):
    """Tune lambda per m (unless ``lam`` is fixed), fit Method A, choose m by BIC."""
    m_range = ctx.options.m_range if m_range is None else m_range
    reports, fits = {}, {}
    shared = None
    if lam is None and not ctx.options.lambda_per_m:
        shared = tune_a_for_m(ctx, ctx.pilot.m)
    for m in m_range:
        try:
            rep = shared if shared is not None else (tune_a_for_m(ctx, m) if lam is None else None)
            use = rep.lambda_star if rep is not None else lam
            profile = method_a_profile(ctx.curves, ctx.y, m, ctx.theta_grid, ctx.cache)
            fit = fit_method_a(ctx.curves, ctx.y, m, use, ctx.theta_grid,
                               penalty_power=ctx.options.penalty_power, profile=profile)
        except TruncFLRError as exc:
            fits[m] = exc
            continue
        reports[m] = rep
        fits[m] = fit
    sel = select_by_bic(fits, ctx.curves.n, ctx.options.bic_form)
    return sel, reports


def select_lambda(curves, y, method="A", m=None, lambda_grid=None, theta_grid=None, options=None, context=None):
    """Run the surrogate tuning loop and return a populated TuningReport.

    Method A with ``m=None`` loops over ``options.m_range``: lambda is tuned
    for each m, Method A is fitted with it and m* minimises BIC; the returned
    report is the one for m* and carries the BIC table and the final fit.
    Method B tunes against the BIC-selected pilot and fits Method B.
    """
    ctx = context or TuningContext.build(curves, y, options, theta_grid, lambda_grid)
    method = method.upper()
    if method == "B":
        rep = tune_b(ctx)
        rep.fit = fit_method_b(ctx.pilot, ctx.curves, ctx.y, rep.lambda_star, ctx.theta_grid,
                               ctx.options.penalty_power, refit=ctx.options.refit_b)
        rep.m_star = ctx.pilot.m
        rep.bic_table = dict(ctx.pilot_selection.table)
        return rep
    if method != "A":
        raise ValueError(f"method must be 'A' or 'B', got {method!r}")
    sel, reports = run_method_a(ctx, [m] if m is not None else None)
    rep = reports[sel.m]
    rep.fit = sel.fit
    rep.m_star = sel.m
    rep.bic_table = dict(sel.table)
    rep.per_m = reports
    return rep


def estimate(curves, y, method="A", options=None, theta_grid=None, lambda_grid=None, context=None):
    """Tuned truncated fit; returns (TruncatedFit, TuningReport)."""
    rep = select_lambda(curves, y, method, None, lambda_grid, theta_grid, options, context)
    return rep.fit, rep
