"""Truncation-point estimators.

Method A minimises, over theta on a search grid,

    S(theta) = min_{a, beta} sum_i [y_i - a - int_0^theta (sum_j beta_j phi_j^theta) X_i]^2
               + n * lam * theta^p

with phi_j^theta the eigenfunctions of the covariance restricted to
[0, theta]. Method B keeps an untruncated pilot fit (a_check, b_check) and
picks the first local minimum of

    T(theta) = sum_i [y_i - a_check - int_0^theta b_check X_i]^2 + n * lam * theta^p

before zeroing b_check beyond the chosen theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IllConditionedError, InfeasibleMError
from .flm import EIG_FLOOR, PilotFit, fit_pc_regression
from .fpca import eigensystem_cache
from .numerics import Grid, restricted_inner_product


@dataclass(frozen=True, eq=False)
class ThetaGrid:
    """Candidate truncation points; each one is a node of the curve grid."""

    candidates: np.ndarray

    def __post_init__(self):
        c = np.array(self.candidates, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise DomainError("theta grid must be a non-empty vector")
        if np.any(np.diff(c) <= 0):
            raise DomainError("theta grid must be strictly increasing")
        if c[0] <= 0 or c[-1] > 1:
            raise DomainError("theta candidates must lie in (0, 1]")
        c.setflags(write=False)
        object.__setattr__(self, "candidates", c)

    @classmethod
    def from_grid(cls, grid, theta_min=0.05, theta_max=1.0):
        pts = grid.points
        sel = pts[(pts >= theta_min - 1e-12) & (pts <= theta_max + 1e-12) & (pts > 0)]
        if sel.size == 0:
            raise DomainError(f"no grid points in [{theta_min}, {theta_max}]")
        return cls(sel)

    def __len__(self):
        return self.candidates.size

    def __iter__(self):
        return iter(self.candidates.tolist())

    @property
    def min(self):
        return float(self.candidates[0])

    @property
    def max(self):
        return float(self.candidates[-1])


@dataclass(frozen=True, eq=False)
class TruncatedFit:
    a_hat: float
    b_hat: np.ndarray
    theta_hat: float
    m: int
    lam: float
    method: str
    grid: Grid
    thetas: np.ndarray
    objective: np.ndarray
    m_used: np.ndarray = None
    rss: float = float("nan")
    penalty_power: float = 2.0
    extras: dict = field(default_factory=dict)

    @property
    def intercept(self):
        return self.a_hat

    @property
    def slope(self):
        return self.b_hat

    @property
    def theta(self):
        return self.theta_hat

    @property
    def objective_trace(self):
        return list(zip(self.thetas.tolist(), self.objective.tolist()))


def first_local_min(values):
    """Index of the first interior strict local minimum, else of the global min."""
    v = np.asarray(values, dtype=float)
    if v.size >= 3:
        inner = (v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])
        hits = np.flatnonzero(inner)
        if hits.size:
            return int(hits[0] + 1)
    return int(np.argmin(v))


def select_index(values, rule):
    if rule == "argmin":
        return int(np.argmin(values))
    if rule == "first_min":
        return first_local_min(values)
    raise ValueError(f"unknown selection rule {rule!r}")


def _feasible_m(es, m):
    """Largest m' <= m with eigenvalues above the conditioning floor."""
    if es is None:
        return 0
    om = es.eigenvalues[: min(m, es.m)]
    if om.size == 0 or not om[0] > 0:
        return 0
    return int(np.sum(om >= EIG_FLOOR * om[0]))


@dataclass(frozen=True)
class ObjectiveA:
    S: float
    a: float
    beta: np.ndarray
    fit: PilotFit

    def __iter__(self):
        return iter((self.S, self.a, self.beta))


def objective_a(curves, y, theta, m, lam, es=None, penalty_power=2.0):
    """Minimised least squares on the [0, theta] PC basis plus n*lam*theta^p."""
    if es is None:
        es = eigensystem_cache(curves, [theta], m)[float(theta)]
    feasible = _feasible_m(es, m)
    if feasible < m or curves.n < m + 2:
        raise InfeasibleMError(f"m={m} infeasible at theta={theta}", min(feasible, curves.n - 2))
    fit = fit_pc_regression(curves, y, m, theta, es=es)
    S = fit.rss + curves.n * lam * float(theta) ** penalty_power
    return ObjectiveA(S, fit.a_check, fit.beta_check, fit)


def _default_theta_grid(curves, theta_grid):
    if theta_grid is None:
        return ThetaGrid.from_grid(curves.grid)
    if not isinstance(theta_grid, ThetaGrid):
        return ThetaGrid(theta_grid)
    return theta_grid


def method_a_profile(curves, y, m, theta_grid, cache=None):
    """Per-theta least-squares fits used by Method A (lambda-free).

    Returns a list of (theta, fit, m_used); m is shrunk to the largest feasible
    value at small theta and thetas with nothing feasible are skipped.
    """
    if cache is None:
        cache = eigensystem_cache(curves, theta_grid, m)
    out = []
    for th in theta_grid:
        es = cache.get(float(th))
        mm = min(m, _feasible_m(es, m), curves.n - 2)
        if mm < 1:
            continue
        try:
            fit = fit_pc_regression(curves, y, mm, th, es=es)
        except IllConditionedError:
            continue
        out.append((float(th), fit, mm))
    return out


def fit_method_a(curves, y, m, lam, theta_grid=None, cache=None, penalty_power=2.0, profile=None):
    """Global minimiser of the Method A objective over the theta grid (smallest theta on ties)."""
    y = np.asarray(y, dtype=float)
    theta_grid = _default_theta_grid(curves, theta_grid)
    if profile is None:
        profile = method_a_profile(curves, y, m, theta_grid, cache)
    if not profile:
        raise InfeasibleMError(f"m={m} infeasible at every theta candidate", 0)
    n = curves.n
    thetas = np.array([p[0] for p in profile])
    rss = np.array([p[1].rss for p in profile])
    obj = rss + n * lam * thetas**penalty_power
    i = int(np.argmin(obj))
    th, fit, mm = profile[i]
    return TruncatedFit(
        a_hat=fit.a_check,
        b_hat=fit.b_check,
        theta_hat=th,
        m=m,
        lam=float(lam),
        method="A",
        grid=curves.grid,
        thetas=thetas,
        objective=obj,
        m_used=np.array([p[2] for p in profile]),
        rss=float(rss[i]),
        penalty_power=float(penalty_power),
        extras={"m_at_theta": mm},
    )


def partial_predictions(fit, curves, thetas):
    """n x len(thetas) matrix of a + int_0^theta b X_i for each theta."""
    grid = curves.grid
    W = np.stack([grid.restricted_weights(th) for th in thetas])
    return fit.intercept + curves.values @ (W * fit.slope).T


def objective_b(pilot, curves, y, theta, lam, penalty_power=2.0):
    """T(theta) for a single theta."""
    return objective_b_trace(pilot, curves, y, [theta], lam, penalty_power)[0]


def objective_b_trace(pilot, curves, y, thetas, lam, penalty_power=2.0):
    y = np.asarray(y, dtype=float)
    thetas = np.asarray(list(thetas), dtype=float)
    if np.any(thetas <= 0):
        raise DomainError("theta must be positive")
    resid = y[:, None] - partial_predictions(pilot, curves, thetas)
    return np.sum(resid**2, axis=0) + curves.n * lam * thetas**penalty_power


def truncate_and_correct(pilot, theta, mean_curve=None):
    """Zero b_check beyond theta and shift the intercept to keep the mean prediction.

    a_hat = a_check + int_0^1 b_check Xbar - int_0^theta b_hat Xbar, so that
    a_hat + int_0^theta b_hat Xbar equals a_check + int_0^1 b_check Xbar.
    """
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    grid = pilot.grid
    xbar = pilot.es.mean_curve if mean_curve is None else mean_curve
    b = np.where(grid.points <= theta + 1e-12, pilot.b_check, 0.0)
    if grid.index_at(theta) == grid.size - 1:
        return pilot.a_check, pilot.b_check.copy()
    full = restricted_inner_product(pilot.b_check, xbar, grid, 1.0)
    kept = restricted_inner_product(b, xbar, grid, theta)
    return pilot.a_check + full - kept, b


def fit_method_b(pilot, curves, y, lam, theta_grid=None, penalty_power=2.0, refit=False):
    """First interior local minimum of T(theta) (global minimum if none), then truncate.

    With ``refit`` the final (a, b) come from a fresh PC regression on
    [0, theta_hat] with the pilot's m (shrunk if necessary) instead of
    truncate-and-correct.
    """
    theta_grid = _default_theta_grid(curves, theta_grid)
    thetas = theta_grid.candidates
    obj = objective_b_trace(pilot, curves, y, thetas, lam, penalty_power)
    i = first_local_min(obj)
    th = float(thetas[i])
    if refit:
        es = eigensystem_cache(curves, [th], pilot.m)[th]
        mm = min(pilot.m, _feasible_m(es, pilot.m), curves.n - 2)
        f = fit_pc_regression(curves, y, mm, th, es=es)
        a_hat, b_hat = f.a_check, f.b_check
    else:
        a_hat, b_hat = truncate_and_correct(pilot, th)
    yhat = a_hat + curves.values @ (curves.grid.restricted_weights(th) * b_hat)
    rss = float(np.sum((np.asarray(y, dtype=float) - yhat) ** 2))
    return TruncatedFit(
        a_hat=float(a_hat),
        b_hat=b_hat,
        theta_hat=th,
        m=pilot.m,
        lam=float(lam),
        method="B",
        grid=curves.grid,
        thetas=np.array(thetas),
        objective=obj,
        rss=rss,
        penalty_power=float(penalty_power),
        extras={"refit": bool(refit)},
    )
