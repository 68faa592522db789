import numpy as np
import pytest

from smaxscore.data import Dataset
from smaxscore.local_solver import (
    SolveOptions,
    SolverError,
    default_grid_bounds,
    initial_estimator,
    solve_local_smse,
    solve_mse_grid_1d,
)
from smaxscore.objective import score_objective, smoothed_gradient, smoothed_objective
from smaxscore.simlab import DesignConfig, NoiseSpec, generate, true_beta


def brute_grid_scores(shard, grid):
    return np.array([score_objective(shard, [b]) for b in grid])


def test_grid_matches_bruteforce_oracle():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n = int(rng.integers(5, 80))
        shard = Dataset(
            y=np.where(rng.standard_normal(n) > 0, 1.0, -1.0),
            x=rng.standard_normal(n),
            z=rng.standard_normal((n, 1)),
        )
        grid = np.linspace(-2.0, 2.0, 41)
        from smaxscore.local_solver import _grid_scores
        fast = _grid_scores(shard, grid)
        ref = brute_grid_scores(shard, grid)
        assert np.array_equal(fast, ref)


def test_grid_tie_breaks_toward_smallest():
    # objective on the grid {-1, 0, 1} is (0.2, 0.1, 0.1): switch points
    # chosen so two y=-1 fire everywhere, one y=+1 turns on after -1, and a
    # -1/+1 pair cancels between 0 and 1; five never-firing rows pad n to 10.
    y = np.array([-1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    neg_x = np.array([-2.0, -2.0, -0.5, 0.7, 0.6, 5.0, 5.0, 5.0, 5.0, 5.0])
    shard = Dataset(y=y, x=-neg_x, z=np.ones((10, 1)))
    grid = np.array([-1.0, 0.0, 1.0])
    from smaxscore.local_solver import _grid_scores
    assert _grid_scores(shard, grid) == pytest.approx([0.2, 0.1, 0.1])
    assert solve_mse_grid_1d(shard, -1.0, 1.0, 3) == 0.0


def test_grid_single_observation():
    shard = Dataset(y=np.array([1.0]), x=np.array([0.0]), z=np.array([[1.0]]))
    assert solve_mse_grid_1d(shard, -1.0, 1.0, 2) == 1.0


def test_grid_order_invariance():
    rng = np.random.default_rng(1)
    n = 60
    y = np.where(rng.standard_normal(n) > 0, 1.0, -1.0)
    x = rng.standard_normal(n)
    z = rng.standard_normal((n, 1))
    shard = Dataset(y=y, x=x, z=z)
    perm = rng.permutation(n)
    shuffled = Dataset(y=y[perm], x=x[perm], z=z[perm])
    assert solve_mse_grid_1d(shard, -2, 2, 101) == \
        solve_mse_grid_1d(shuffled, -2, 2, 101)


def test_grid_rejects_multidimensional():
    shard = Dataset(y=np.ones(3), x=np.zeros(3), z=np.ones((3, 2)))
    with pytest.raises(ValueError):
        solve_mse_grid_1d(shard, -1, 1, 5)


def test_warm_start_at_stationary_point_returns_it():
    d = DesignConfig(p=1, m=400, exponent=1.0, noise=NoiseSpec(), seed=5, reps=1)
    shard = generate(d, 0)
    h = 0.4
    opts = SolveOptions(grad_tol=1e-6)
    beta = solve_local_smse(shard, h, opts)
    again = solve_local_smse(shard, h, SolveOptions(grad_tol=1e-6, init=beta))
    assert np.array_equal(again, beta)


def test_separable_all_positive_labels():
    shard = Dataset(y=np.ones(50), x=np.zeros(50), z=np.ones((50, 1)))
    beta = solve_local_smse(shard, 0.3, SolveOptions())
    assert smoothed_objective(shard, beta, 0.3) <= -1.0 + 1e-6


def test_stage_descent_is_monotone():
    d = DesignConfig(p=2, m=300, exponent=1.0, noise=NoiseSpec(), seed=9, reps=1)
    shard = generate(d, 0)
    seen = []
    opts = SolveOptions(callback=lambda h, b, f: seen.append((h, f)))
    solve_local_smse(shard, 0.3, opts)
    by_stage = {}
    for h, f in seen:
        by_stage.setdefault(h, []).append(f)
    assert by_stage
    for fs in by_stage.values():
        assert all(b <= a + 1e-12 for a, b in zip(fs, fs[1:]))


def test_solver_reaches_stationarity():
    d = DesignConfig(p=3, m=800, exponent=1.0, noise=NoiseSpec(), seed=2, reps=1)
    shard = generate(d, 0)
    h = 0.25
    opts = SolveOptions(grad_tol=1e-6)
    beta = solve_local_smse(shard, h, opts)
    assert np.max(np.abs(smoothed_gradient(shard, beta, h))) <= 1e-6


def test_solver_error_carries_best_iterate():
    d = DesignConfig(p=2, m=500, exponent=1.0, noise=NoiseSpec(), seed=3, reps=1)
    shard = generate(d, 0)
    with pytest.raises(SolverError) as exc:
        solve_local_smse(shard, 0.2, SolveOptions(max_iters=1, grad_tol=1e-12))
    assert exc.value.beta.shape == (2,)
    assert exc.value.grad_norm > 0


def test_ladder_validation():
    shard = Dataset(y=np.ones(5), x=np.zeros(5), z=np.ones((5, 1)))
    with pytest.raises(ValueError):
        solve_local_smse(shard, 0.2, SolveOptions(continuation_ladder=[0.5, 0.5, 0.2]))
    with pytest.raises(ValueError):
        solve_local_smse(shard, 0.2, SolveOptions(continuation_ladder=[0.5, 0.3]))


def test_local_estimate_near_truth():
    d = DesignConfig(p=1, m=2000, exponent=1.0, noise=NoiseSpec(), seed=11, reps=1)
    shard = generate(d, 0)
    h = 2000 ** (-0.2)
    beta = solve_local_smse(shard, h, SolveOptions(max_iters=2000, grad_tol=1e-5))
    assert abs(beta[0] - 1.0) <= 0.15


def test_initial_estimator_1d_is_grid_plus_polish():
    d = DesignConfig(p=1, m=1000, exponent=1.0, noise=NoiseSpec(), seed=13, reps=1)
    shard = generate(d, 0)
    h0 = 1000 ** (-0.2)
    opts = SolveOptions(max_iters=1000, grad_tol=1e-6)
    got = initial_estimator(shard, h0, opts)
    lo, hi = default_grid_bounds(shard)
    pilot = solve_mse_grid_1d(shard, lo, hi, 2001)
    polished = solve_local_smse(
        shard, h0, SolveOptions(max_iters=1000, grad_tol=1e-6,
                                init=np.array([pilot])))
    assert np.array_equal(got, polished)


def test_initial_estimator_multidim_accuracy():
    d = DesignConfig(p=10, m=5000, exponent=1.0, noise=NoiseSpec(), seed=17, reps=1)
    shard = generate(d, 0)
    h0 = 5000 ** (-0.2)
    beta = initial_estimator(shard, h0, SolveOptions(max_iters=2000, grad_tol=1e-5))
    assert np.linalg.norm(beta - true_beta(10)) <= 0.3


def test_deterministic():
    d = DesignConfig(p=2, m=400, exponent=1.0, noise=NoiseSpec(), seed=19, reps=1)
    shard = generate(d, 0)
    a = solve_local_smse(shard, 0.3, SolveOptions())
    b = solve_local_smse(shard, 0.3, SolveOptions())
    assert np.array_equal(a, b)
