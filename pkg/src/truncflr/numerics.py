"""Grids on [0, 1], trapezoid quadrature and the trigonometric basis.

All integrals in the package are evaluated by the composite trapezoid rule on
the stored grid. Integrals over [0, theta] stop at the last grid point not
exceeding theta (no partial panels), so every theta-dependent objective is
piecewise constant between grid points.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, DomainError

# grid points within this distance above theta still count as <= theta
THETA_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def trapezoid_weights(points):
    """Composite trapezoid weights for an increasing vector of nodes."""
    points = np.asarray(points, dtype=float)
    if points.size == 1:
        return np.zeros(1)
    h = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        w = _frozen(self.weights)
        if pts.ndim != 1 or pts.size < 2:
            raise DimensionError("grid needs at least two points")
        if w.shape != pts.shape:
            raise DimensionError("weights and points differ in length")
        if not np.all(np.diff(pts) > 0):
            raise DomainError("grid points must be strictly increasing")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise DomainError("grid must start at 0 and end at 1")
        if not np.all(w > 0):
            raise DomainError("quadrature weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_points(cls, points):
        return cls(points, trapezoid_weights(points))

    @classmethod
    def uniform(cls, size=101):
        if size < 2:
            raise DimensionError("uniform grid needs size >= 2")
        return cls.from_points(np.linspace(0.0, 1.0, size))

    @property
    def size(self):
        return self.points.size

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self is other or np.array_equal(self.points, other.points)

    __hash__ = object.__hash__

    def index_at(self, theta):
        """Index of the last grid point <= theta."""
        if not theta > 0:
            raise DomainError(f"theta must be positive, got {theta}")
        return int(np.searchsorted(self.points, theta + THETA_TOL, side="right")) - 1

    def restricted_weights(self, theta):
        """Trapezoid weights for [0, theta] padded with zeros to length G."""
        return _restricted_weights(self, float(theta))

    def snap(self, theta):
        """Largest grid point not exceeding theta."""
        return float(self.points[self.index_at(theta)])


@lru_cache(maxsize=4096)
def _restricted_weights(grid, theta):
    k = grid.index_at(theta)
    if k == grid.size - 1:
        return grid.weights
    w = np.zeros(grid.size)
    w[: k + 1] = trapezoid_weights(grid.points[: k + 1])
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class CurveSet:
    """n curves sampled on a common grid; row i is X_i."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise DimensionError("curve values must be a 2-d array (n x G)")
        if v.shape[1] != self.grid.size:
            raise DimensionError(
                f"curves have {v.shape[1]} columns but the grid has {self.grid.size} points"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("curve values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0]

    def __len__(self):
        return self.values.shape[0]

    def mean(self):
        return self.values.mean(axis=0)

    def subset(self, idx):
        return CurveSet(self.grid, self.values[np.asarray(idx)])


def _check_len(grid, *vecs):
    for v in vecs:
        if np.shape(v)[-1] != grid.size:
            raise DimensionError(
                f"vector of length {np.shape(v)[-1]} does not match grid of size {grid.size}"
            )


def _quad(w, f, g):
    return float(np.dot(w * np.asarray(f, dtype=float), np.asarray(g, dtype=float)))


def inner_product(f, g, grid):
    """Trapezoid approximation of the integral of f*g over [0, 1]."""
    _check_len(grid, f, g)
    return _quad(grid.weights, f, g)


def restricted_inner_product(f, g, grid, theta):
    """Trapezoid approximation of the integral of f*g over [0, theta]."""
    _check_len(grid, f, g)
    return _quad(grid.restricted_weights(theta), f, g)


def integrate_rows(values, g, grid, theta=1.0):
    """Vectorised restricted_inner_product of each row of ``values`` with g."""
    _check_len(grid, values, g)
    w = grid.restricted_weights(theta)
    return np.asarray(values, dtype=float) @ (w * np.asarray(g, dtype=float))


def trig_basis(k_index, grid):
    """eta_1 = 1, eta_{2k} = sin(2^k pi t), eta_{2k+1} = cos(2^k pi t)."""
    t = grid.points if isinstance(grid, Grid) else np.asarray(grid, dtype=float)
    if int(k_index) != k_index or k_index < 1:
        raise DomainError(f"basis index must be a positive integer, got {k_index}")
    k_index = int(k_index)
    if k_index == 1:
        return np.ones_like(t)
    freq = 2.0 ** (k_index // 2) * np.pi
    if k_index % 2 == 0:
        return np.sin(freq * t)
    return np.cos(freq * t)
