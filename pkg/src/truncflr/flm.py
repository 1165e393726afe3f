"""Untruncated functional linear model by principal-components regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, IllConditionedError, InfeasibleMError, InsufficientDataError, TruncFLRError
from .fpca import EigenSystem, eigensystem, max_components, scores
from .numerics import integrate_rows, restricted_inner_product

EIG_FLOOR = 1e-10
DEFAULT_M_RANGE = range(2, 10)


@dataclass(frozen=True, eq=False)
class PilotFit:
    """PC-regression fit a + int_0^theta b X with b = sum_j beta_j phi_j."""

    es: EigenSystem
    m: int
    beta_check: np.ndarray
    a_check: float
    b_check: np.ndarray
    sigma2_hat: float
    rss: float

    @property
    def theta(self):
        return self.es.domain_theta

    @property
    def intercept(self):
        return self.a_check

    @property
    def slope(self):
        return self.b_check

    @property
    def grid(self):
        return self.es.grid


def _as_response(curves, y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != curves.n:
        raise DimensionError(f"expected {curves.n} responses, got shape {y.shape}")
    return y


def fit_pc_regression(curves, y, m, theta=1.0, es=None):
    """Regress y on the first m PC scores of the curves over [0, theta].

    beta_k = <R, phi_k> / omega_k with R the cross-covariance of y and X;
    the intercept is ybar - int_0^theta b Xbar. Pass ``es`` to reuse an
    eigensystem computed on the same curves (it may hold more than m pairs).
    """
    y = _as_response(curves, y)
    n = curves.n
    if n < m + 2:
        raise InsufficientDataError(f"n={n} too small for m={m} components")
    if es is None:
        es = eigensystem(curves, theta, m)
    elif es.m < m:
        raise InfeasibleMError(f"eigensystem holds {es.m} pairs, need {m}", es.m)
    es = es.top(m) if es.m > m else es
    omega = es.eigenvalues
    if not omega[0] > 0 or omega[-1] < EIG_FLOOR * omega[0]:
        raise IllConditionedError(
            f"eigenvalue {omega[-1]:.3e} below floor {EIG_FLOOR:g} x {omega[0]:.3e}; lower m"
        )
    xi = scores(curves, es)
    ybar = y.mean()
    # R(t) integrated against phi_k equals n^-1 sum_i (y_i - ybar) xi_ik
    cross = xi.T @ (y - ybar) / n
    beta = cross / omega
    b = beta @ es.eigenfunctions
    a = ybar - restricted_inner_product(b, es.mean_curve, es.grid, es.domain_theta)
    resid = y - a - integrate_rows(curves.values, b, es.grid, es.domain_theta)
    rss = float(resid @ resid)
    beta.setflags(write=False)
    b.setflags(write=False)
    return PilotFit(es, m, beta, float(a), b, rss / n, rss)


def predict(fit, x, theta=None):
    """a + int_0^theta b x for a single curve x or an n x G matrix of curves."""
    if theta is None:
        theta = fit.theta
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return fit.intercept + restricted_inner_product(fit.slope, x, fit.grid, theta)
    return fit.intercept + integrate_rows(x, fit.slope, fit.grid, theta)


def residual_variance(fit, curves, y):
    """n^-1 sum (y_i - a - int_I b X_i)^2."""
    y = _as_response(curves, y)
    r = y - predict(fit, curves.values, 1.0)
    return float(r @ r) / y.size


def bic(rss, n, m, form="standard"):
    """log(RSS/n) + (m+1) log n  ("log_mse")  or  n log(RSS/n) + (m+1) log n."""
    mse = max(rss / n, np.finfo(float).tiny)
    if form == "log_mse":
        return math.log(mse) + (m + 1) * math.log(n)
    if form == "standard":
        return n * math.log(mse) + (m + 1) * math.log(n)
    raise ValueError(f"unknown BIC form {form!r}")


@dataclass
class BICSelection:
    m: int
    fit: object
    fits: dict = field(default_factory=dict)
    table: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)


def select_by_bic(candidates, n, form="standard"):
    """Pick the (m, fit) pair with smallest BIC; ties go to the smaller m.

    ``candidates`` maps m to either a fit (with ``rss``) or an exception
    raised while fitting; the latter are recorded as skipped.
    """
    sel = BICSelection(m=0, fit=None)
    for m in sorted(candidates):
        f = candidates[m]
        if isinstance(f, Exception):
            sel.skipped[m] = str(f)
            continue
        sel.fits[m] = f
        sel.table[m] = bic(f.rss, n, m, form)
    if not sel.table:
        raise InfeasibleMError(f"no feasible m among {sorted(candidates)}")
    best = min(sel.table, key=lambda k: (sel.table[k], k))
    sel.m = best
    sel.fit = sel.fits[best]
    return sel


def bic_select_m(curves, y, m_range=DEFAULT_M_RANGE, form="standard", es=None):
    """Fit the full-domain PC regression for each m and keep the BIC minimiser."""
    y = _as_response(curves, y)
    m_range = list(m_range)
    if not m_range:
        raise ValueError("m_range is empty")
    if es is None:
        top = min(max(m_range), max_components(curves, 1.0))
        if top < 1:
            raise InfeasibleMError("no components available", 0)
        es = eigensystem(curves, 1.0, top)
    cands = {}
    for m in m_range:
        try:
            cands[m] = fit_pc_regression(curves, y, m, 1.0, es=es)
        except TruncFLRError as exc:
            cands[m] = exc
    return select_by_bic(cands, curves.n, form)
