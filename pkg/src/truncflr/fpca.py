"""Empirical covariance, its eigensystem on [0, theta], and PC scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InfeasibleMError, InsufficientDataError, NumericalError
from .numerics import Grid

NEG_EIG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Top eigenpairs of the covariance operator restricted to [0, domain_theta].

    ``eigenfunctions`` is m x G and zero on grid points beyond ``domain_theta``;
    rows are orthonormal under the restricted trapezoid inner product.
    """

    grid: Grid
    domain_theta: float
    mean_curve: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray

    @property
    def m(self):
        return self.eigenvalues.size

    def top(self, m):
        """The leading m pairs as a new EigenSystem (no recomputation)."""
        if m > self.m:
            raise InfeasibleMError(f"only {self.m} eigenpairs available", self.m)
        return EigenSystem(
            self.grid, self.domain_theta, self.mean_curve,
            self.eigenvalues[:m], self.eigenfunctions[:m],
        )

    @property
    def weights(self):
        return self.grid.restricted_weights(self.domain_theta)


def empirical_covariance(curves):
    """Mean curve and K_hat(t1, t2) = n^-1 sum (X_i - Xbar)(t1) (X_i - Xbar)(t2)."""
    if curves.n < 2:
        raise InsufficientDataError(f"need at least 2 curves, got {curves.n}")
    mean = curves.mean()
    dev = curves.values - mean
    K = dev.T @ dev / curves.n
    return mean, (K + K.T) / 2


def max_components(curves, theta):
    """Largest m the eigensystem on [0, theta] can deliver by counting alone."""
    k = curves.grid.index_at(theta)
    return max(0, min(curves.n - 1, k + 1))


def eigensystem(curves, theta=1.0, m=1, covariance=None):
    """Leading m eigenpairs of K_hat as an operator on L2[0, theta].

    Uses the symmetric form W^1/2 K W^1/2 over the grid points in [0, theta]
    and maps eigenvectors back with W^-1/2. Each eigenfunction is signed so
    that its largest-magnitude entry is positive.
    """
    grid = curves.grid
    if covariance is None:
        mean, K = empirical_covariance(curves)
    else:
        mean, K = covariance
    k = grid.index_at(theta)
    limit = max_components(curves, theta)
    if m < 1 or m > limit:
        raise InfeasibleMError(
            f"m={m} not feasible on [0, {theta}] (n={curves.n}, {k + 1} grid points)",
            limit,
        )
    w = grid.restricted_weights(theta)[: k + 1]
    if k == 0:
        # a single node carries zero trapezoid weight: the operator is null
        raise InfeasibleMError(f"[0, {theta}] contains a single grid point", 0)
    sw = np.sqrt(w)
    A = sw[:, None] * K[: k + 1, : k + 1] * sw[None, :]
    vals, vecs = np.linalg.eigh((A + A.T) / 2)
    order = np.argsort(vals)[::-1][:m]
    vals = vals[order]
    vecs = vecs[:, order]
    tol = NEG_EIG_TOL * max(1.0, abs(vals[0]))
    if np.any(vals < -tol):
        raise NumericalError(f"covariance has a negative eigenvalue {vals.min():.3e}")
    vals = np.where(vals < 0, 0.0, vals)
    phi = np.zeros((m, grid.size))
    phi[:, : k + 1] = (vecs / sw[:, None]).T
    idx = np.argmax(np.abs(phi), axis=1)
    signs = np.sign(phi[np.arange(m), idx])
    phi *= signs[:, None]
    vals.setflags(write=False)
    phi.setflags(write=False)
    return EigenSystem(grid, float(theta), mean, vals, phi)


def scores(curves, es):
    """n x m matrix of integrals of (X_i - Xbar) * phi_j over [0, domain_theta]."""
    if curves.grid != es.grid:
        raise DimensionError("curves and eigensystem live on different grids")
    dev = curves.values - es.mean_curve
    return dev @ (es.weights[:, None] * es.eigenfunctions.T)


def eigensystem_cache(curves, thetas, m_max):
    """Eigensystems for each theta in ``thetas`` with as many as m_max pairs.

    Where fewer than m_max pairs are feasible the largest feasible count is
    stored; thetas with no feasible pair map to None.
    """
    cov = empirical_covariance(curves)
    out = {}
    for th in thetas:
        m = min(m_max, max_components(curves, th))
        if m < 1 or curves.grid.index_at(th) == 0:
            out[float(th)] = None
            continue
        out[float(th)] = eigensystem(curves, th, m, covariance=cov)
    return out
