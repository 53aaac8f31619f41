import json
import logging
import math

import numpy as np
import pytest

from noisyaloha.model import DomainError, FiniteModel, PoissonModel, v_finite, v_infinite
from noisyaloha.optimizer import (
    BUCKET_K,
    default_k_cap,
    f_derivative,
    f_objective,
    optimal_k_finite,
    optimal_k_infinite,
    region_grid,
    scan_values_finite,
    scan_values_infinite,
    solve_xstar,
)

NEWTON_GRID = [(eps, lam) for eps in (0.3, 0.6, 0.9, 0.99) for lam in (0.005, 0.02, 0.1)]


def test_f_sign_at_ends():
    assert f_objective(0.0, 0.02, 0.4) < 0
    assert f_objective(10 / 0.02, 0.02, 0.4) > 0


def test_f_domain():
    for args in [(1.0, 0.02, 0.0), (1.0, 0.02, 1.0), (1.0, 0.0, 0.4), (-1.0, 0.02, 0.4)]:
        with pytest.raises(DomainError):
            f_objective(*args)
        with pytest.raises(DomainError):
            f_derivative(*args)


def test_f_derivative_positive_and_tends_to_one():
    lam, eps = 0.02, 0.4
    xs = np.linspace(0, 5 / lam, 200)
    assert all(f_derivative(x, lam, eps) > 0 for x in xs)
    assert f_derivative(1e4, lam, eps) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("lam,eps,x", [(0.005, 0.3, 200.0), (0.02, 0.4, 3.0), (0.1, 0.9, 12.0), (0.5, 0.6, 0.7)])
def test_f_derivative_central_difference(lam, eps, x):
    h = 1e-6 * max(1.0, x)
    fd = (f_objective(x + h, lam, eps) - f_objective(x - h, lam, eps)) / (2 * h)
    assert fd == pytest.approx(f_derivative(x, lam, eps), rel=1e-6)


@pytest.mark.parametrize("eps,lam", NEWTON_GRID)
def test_root_unique_on_half_line(eps, lam):
    xs = np.linspace(0, 10 / lam, 4001)
    signs = np.sign([f_objective(x, lam, eps) for x in xs])
    assert np.count_nonzero(np.diff(signs)) == 1


@pytest.mark.parametrize("eps,lam", NEWTON_GRID)
def test_newton_residual_and_scan_proximity(eps, lam):
    res = solve_xstar(lam, eps)
    assert res.converged and res.x_star > 0
    assert res.residual <= 1e-10
    assert abs(f_objective(res.x_star, lam, eps)) <= 1e-10
    assert abs(round(res.x_star - 1) - optimal_k_infinite(lam, eps)) <= 1


def test_newton_iterates_rise_after_first_step():
    # F is increasing and concave: one step from x0 = 1/lambda overshoots to the
    # left of the root, after which iterates increase monotonically to it
    res = solve_xstar(0.005, 0.3)
    xs = res.history
    assert xs[0] == 200.0
    assert xs[1] < res.x_star
    assert all(b >= a for a, b in zip(xs[1:], xs[2:]))
    residuals = [abs(f_objective(x, 0.005, 0.3)) for x in xs[1:]]
    assert all(b <= a for a, b in zip(residuals, residuals[1:]))


def test_newton_reports_nonconvergence():
    res = solve_xstar(0.005, 0.3, max_iter=2)
    assert not res.converged
    assert res.iterations == 2


def test_newton_small_lambda_near_one():
    # holds when -log(eps) is small against lambda
    for lam in (0.01, 0.001):
        res = solve_xstar(lam, 1 - 1e-8)
        assert res.x_star == pytest.approx(1 / lam, rel=1e-4)


def test_optimal_k_examples():
    assert optimal_k_infinite(0.5, 0.0) == 0
    assert optimal_k_infinite(1 / 3, 0.99) == 2
    # integer argmax for the first worked example scenario
    assert optimal_k_infinite(0.02, 0.4) == 6
    assert optimal_k_finite(2, 0.02 / 1.98, 0.4) == 6
    assert optimal_k_finite(10, 0.02 / 9.98, 0.4) == 6


def test_optimal_k_matches_brute_scan():
    for lam, eps in [(0.02, 0.4), (0.005, 0.3), (0.3, 0.9)]:
        cap = default_k_cap(lam)
        vals = [v_infinite(PoissonModel(lam, eps, k)) for k in range(cap + 1)]
        assert optimal_k_infinite(lam, eps) == int(np.argmax(vals))


def test_noiseless_optimum_is_zero():
    for n in (2, 5, 40):
        for q in (0.001, 0.05, 0.3):
            assert optimal_k_finite(n, q, 0.0) == 0
    # with one user and no noise every K delivers, ties go to K=0
    assert optimal_k_finite(1, 0.2, 0.0) == 0


def test_criterion_coincidence():
    for lam, eps in [(0.02, 0.4), (0.005, 0.3), (0.1, 0.9)]:
        v, w = scan_values_infinite(lam, eps, 80)
        assert np.argmax(v) == np.argmax(w)
    for n, q, eps in [(2, 0.0101, 0.4), (10, 0.002, 0.4), (5, 0.05, 0.8)]:
        v, w = scan_values_finite(n, q, eps, 80)
        assert np.argmax(v) == np.argmax(w)


def test_history_variant_optimum():
    k = optimal_k_finite(2, 0.01, 0.4, variant="history")
    vals = [v_finite(FiniteModel(2, 0.01, 0.4, kk)) for kk in range(65)]
    assert k == 7
    assert int(np.argmax(vals)) == 6


def test_newton_disagreement_is_logged(caplog):
    with caplog.at_level(logging.WARNING, logger="noisyaloha.optimizer"):
        optimal_k_infinite(0.02, 0.4, k_cap=1)
    assert "disagrees" in caplog.text


def test_k_cap_validation():
    with pytest.raises(DomainError):
        optimal_k_infinite(0.1, 0.5, k_cap=-1)
    assert default_k_cap(0.5) == 64
    assert default_k_cap(0.01) == 400


@pytest.fixture(scope="module")
def default_grid():
    return region_grid()


def test_region_grid_shape_and_monotone(default_grid):
    g = default_grid
    assert g.k_star.shape == (99, 75)
    assert np.all(np.diff(g.k_star, axis=1) <= 0)
    assert np.all(np.diff(g.k_star, axis=0) >= 0)


def test_region_membership_near_one(default_grid):
    g = default_grid
    i = int(np.argmin(abs(g.epsilon_axis - 0.99)))
    for k in range(1, 5):
        j = int(np.argmin(abs(g.lambda_axis - 1 / (k + 1))))
        assert g.k_star[i, j] == k


def test_region_small_eps_large_lambda(default_grid):
    g = default_grid
    assert np.all(g.k_star[g.epsilon_axis <= 0.01][:, g.lambda_axis >= 0.1] == 0)


def test_region_cell_matches_scalar():
    g = region_grid((0.2, 0.99), (0.05, 0.25), (3, 3))
    for eps, lam, k in g.rows():
        assert k == optimal_k_infinite(lam, eps, check_newton=False)


def test_region_bucket_and_serialisation():
    g = region_grid(resolution=(2, 2))
    assert len(list(g.rows())) == 4
    b = g.bucket()
    assert b.k_star.max() <= BUCKET_K
    lines = g.to_csv().strip().splitlines()
    assert lines[0] == "epsilon,lambda,k_star" and len(lines) == 5
    obj = json.loads(b.to_json())
    assert obj["bucketed_at"] == BUCKET_K
    assert np.array(obj["k_star"]).shape == (2, 2)


def test_region_validation():
    with pytest.raises(DomainError):
        region_grid(resolution=(1, 5))
    with pytest.raises(DomainError):
        region_grid(epsilon_range=(0.5, 1.0))
    with pytest.raises(DomainError):
        region_grid(lambda_range=(0.0, 0.5))
