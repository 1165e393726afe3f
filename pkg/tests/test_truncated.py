import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_curves
from truncflr.errors import DomainError, InfeasibleMError
from truncflr.flm import fit_pc_regression
from truncflr.numerics import CurveSet
from truncflr.simstudy import SimConfig, gen_x
from truncflr.truncated import (
    ThetaGrid,
    first_local_min,
    fit_method_a,
    fit_method_b,
    objective_a,
    objective_b,
    objective_b_trace,
    truncate_and_correct,
)


def noisy_data(seed, n=40, G=51):
    curves = random_curves(n, G, seed=seed, smooth=False)
    t = curves.grid.points
    b = np.where(t <= 0.5, 2.0, 0.0)
    y = 1 + curves.values @ (curves.grid.weights * b) + 0.3 * np.random.default_rng(seed).standard_normal(n)
    return curves, y


def test_theta_grid():
    curves = random_curves(5, 101)
    tg = ThetaGrid.from_grid(curves.grid)
    assert tg.min == pytest.approx(0.05) and tg.max == 1.0 and len(tg) == 96
    with pytest.raises(DomainError):
        ThetaGrid([0.5, 0.4])
    with pytest.raises(DomainError):
        ThetaGrid([0.0, 0.5])


def test_first_local_min():
    assert first_local_min([3, 2, 3, 1, 2]) == 1
    assert first_local_min([1, 2, 3]) == 0
    assert first_local_min([3, 2, 2, 1]) == 3  # plateau is not strict; fall back to argmin
    assert first_local_min([5.0]) == 0


def test_objective_a_identities():
    curves, y = noisy_data(1)
    S, a, beta = objective_a(curves, y, 1.0, 3, 0.0)
    pilot = fit_pc_regression(curves, y, 3)
    assert S == pytest.approx(pilot.rss, rel=1e-12)
    assert a == pytest.approx(pilot.a_check) and np.allclose(beta, pilot.beta_check)
    S2 = objective_a(curves, y, 0.4, 3, 0.7).S
    S1 = objective_a(curves, y, 0.4, 3, 0.2).S
    assert S2 - S1 == pytest.approx(40 * 0.5 * 0.4**2, rel=1e-10)


def test_objective_a_infeasible_carries_limit():
    curves, y = noisy_data(2, n=8)
    with pytest.raises(InfeasibleMError) as err:
        objective_a(curves, y, 1.0, 7, 0.0)
    assert err.value.max_feasible <= 6


def test_dropping_support_hurts_noiseless_step():
    curves = gen_x(SimConfig(n=100), 11)
    t = curves.grid.points
    y = curves.values @ (curves.grid.weights * np.where(t <= 0.5, 1.0, 0.0))
    s05 = objective_a(curves, y, 0.5, 4, 0.0).S
    s03 = objective_a(curves, y, 0.3, 4, 0.0).S
    assert s05 <= s03


def check_fit(fit):
    t = fit.grid.points
    assert np.all(fit.b_hat[t > fit.theta_hat + 1e-12] == 0)
    assert fit.theta_hat in set(fit.thetas.tolist())


def test_method_a_huge_lambda_takes_smallest_theta():
    curves, y = noisy_data(3)
    fit = fit_method_a(curves, y, 3, 1e6 * np.var(y))
    assert fit.theta_hat == pytest.approx(0.06)  # 0.05 on a 51-point grid is not a node
    check_fit(fit)
    assert fit.theta_hat == fit.thetas[np.argmin(fit.objective)]


def test_method_a_lambda_zero_goes_right():
    curves, y = noisy_data(4)
    fit = fit_method_a(curves, y, 3, 0.0)
    check_fit(fit)
    assert fit.theta_hat >= 0.4


@given(st.integers(0, 1000), st.floats(0.1, 50), st.floats(1e-4, 1.0))
def test_method_a_scale_invariance(seed, c, lam):
    curves, y = noisy_data(seed % 7)
    f1 = fit_method_a(curves, y, 3, lam)
    f2 = fit_method_a(curves, c * y, 3, c**2 * lam)
    o1 = f1.objective
    o2 = f2.objective / c**2
    # the selected point agrees unless two objective values are numerically tied
    gap = np.sort(o1)[1] - np.sort(o1)[0]
    if gap > 1e-9 * abs(o1.min()):
        assert f1.theta_hat == f2.theta_hat
    assert np.allclose(o1, o2, rtol=1e-9)


def brute_force_T(curves, y, a, b, theta, lam):
    grid = curves.grid
    pts = grid.points
    k = max(i for i, p in enumerate(pts) if p <= theta + 1e-12)
    total = 0.0
    for i in range(curves.n):
        integral = 0.0
        for j in range(k):
            h = pts[j + 1] - pts[j]
            integral += 0.5 * h * (curves.values[i, j] * b[j] + curves.values[i, j + 1] * b[j + 1])
        total += (y[i] - a - integral) ** 2
    return total + curves.n * lam * theta**2


@pytest.mark.parametrize("seed", range(5))
def test_objective_b_brute_force(seed):
    curves, y = noisy_data(seed, n=10, G=21)
    pilot = fit_pc_regression(curves, y, 3)
    for theta in (0.1, 0.35, 0.5, 0.85, 1.0):
        got = objective_b(pilot, curves, y, theta, 0.3)
        want = brute_force_T(curves, y, pilot.a_check, pilot.b_check, theta, 0.3)
        assert got == pytest.approx(want, abs=1e-10)


def test_objective_b_identities():
    curves, y = noisy_data(5)
    pilot = fit_pc_regression(curves, y, 4)
    assert objective_b(pilot, curves, y, 1.0, 0.0) == pytest.approx(pilot.rss, rel=1e-12)
    thetas = np.linspace(0.1, 1, 10)
    d = objective_b_trace(pilot, curves, y, thetas, 0.3) - objective_b_trace(pilot, curves, y, thetas, 0.0)
    assert np.allclose(d, 40 * 0.3 * thetas**2, rtol=1e-12)


def test_method_b_increasing_objective_takes_left_end():
    curves, _ = noisy_data(6)
    y = np.full(curves.n, 1.5)
    pilot = fit_pc_regression(curves, y, 3)
    assert np.allclose(pilot.b_check, 0)
    fit = fit_method_b(pilot, curves, y, 0.1)
    assert fit.theta_hat == pytest.approx(0.06)
    check_fit(fit)


def test_method_b_selection_rule():
    curves, y = noisy_data(7)
    pilot = fit_pc_regression(curves, y, 4)
    fit = fit_method_b(pilot, curves, y, 0.01)
    check_fit(fit)
    assert fit.theta_hat == fit.thetas[first_local_min(fit.objective)]
    refit = fit_method_b(pilot, curves, y, 0.01, refit=True)
    assert refit.theta_hat == fit.theta_hat
    check_fit(refit)


def test_truncate_and_correct_identity_and_zero_mean():
    curves, y = noisy_data(8)
    pilot = fit_pc_regression(curves, y, 3)
    a, b = truncate_and_correct(pilot, 1.0)
    assert a == pilot.a_check and np.array_equal(b, pilot.b_check)
    a0, _ = truncate_and_correct(pilot, 0.4, mean_curve=np.zeros(curves.grid.size))
    assert a0 == pilot.a_check
    with pytest.raises(DomainError):
        truncate_and_correct(pilot, 0.0)


@given(st.integers(0, 10_000), st.sampled_from([0.2, 0.5, 0.73]))
def test_truncate_and_correct_keeps_mean_prediction(seed, theta):
    rng = np.random.default_rng(seed)
    base = random_curves(30, 101, seed=seed)
    curves = CurveSet(base.grid, base.values + 2.0)  # non-zero mean curve
    y = rng.standard_normal(30) + curves.values[:, 20]
    pilot = fit_pc_regression(curves, y, 3)
    a, b = truncate_and_correct(pilot, theta)
    w = curves.grid.restricted_weights(theta)
    new = np.mean(a + curves.values @ (w * b))
    old = np.mean(pilot.a_check + curves.values @ (curves.grid.weights * pilot.b_check))
    assert new == pytest.approx(old, abs=1e-10)
    assert np.all(b[curves.grid.points > theta] == 0)
