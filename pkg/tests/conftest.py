import numpy as np
import pytest
from hypothesis import settings

from truncflr.numerics import CurveSet, Grid

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_curves(n, G, seed=0, smooth=True):
    """Curves with a few random trigonometric components plus small noise."""
    rng = np.random.default_rng(seed)
    grid = Grid.uniform(G)
    t = grid.points
    K = 8
    basis = np.stack([np.ones_like(t)] + [f(2 * np.pi * (k // 2 + 1) * t)
                                          for k in range(K - 1) for f in ([np.sin, np.cos][k % 2],)])
    Z = rng.standard_normal((n, K)) * np.exp(-0.3 * np.arange(K))
    vals = Z @ basis
    if not smooth:
        vals = vals + 0.1 * rng.standard_normal(vals.shape)
    return CurveSet(grid, vals)


@pytest.fixture
def grid101():
    return Grid.uniform(101)
