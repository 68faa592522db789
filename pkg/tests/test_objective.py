import numpy as np
import pytest

from smaxscore.data import DataFormatError, Dataset
from smaxscore.objective import (
    Moments,
    newton_moments,
    score_objective,
    smoothed_gradient,
    smoothed_hessian,
    smoothed_objective,
)


def one_obs(y, x, z):
    return Dataset(y=np.array([y]), x=np.array([x]), z=np.array([z]))


def random_instance(rng, n, p):
    return Dataset(
        y=np.where(rng.standard_normal(n) > 0, 1.0, -1.0),
        x=rng.standard_normal(n),
        z=rng.standard_normal((n, p)),
    )


def fd_gradient(data, beta, h):
    p = len(beta)
    g = np.zeros(p)
    for j in range(p):
        step = 1e-6 * (1.0 + abs(beta[j]))
        e = np.zeros(p)
        e[j] = step
        g[j] = (smoothed_objective(data, beta + e, h)
                - smoothed_objective(data, beta - e, h)) / (2 * step)
    return g


def fd_hessian(data, beta, h):
    p = len(beta)
    H = np.zeros((p, p))
    for j in range(p):
        step = 1e-6 * (1.0 + abs(beta[j]))
        e = np.zeros(p)
        e[j] = step
        H[:, j] = (smoothed_gradient(data, beta + e, h)
                   - smoothed_gradient(data, beta - e, h)) / (2 * step)
    return 0.5 * (H + H.T)


def test_score_single_observations():
    assert score_objective(one_obs(1.0, 1.0, [0.0]), [5.0]) == -1.0
    assert score_objective(one_obs(-1.0, -1.0, [0.0]), [5.0]) == 0.0


def test_score_scale_invariance():
    rng = np.random.default_rng(0)
    data = random_instance(rng, 40, 2)
    beta = rng.standard_normal(2)
    scaled = Dataset(y=data.y, x=3.7 * data.x, z=3.7 * data.z)
    assert score_objective(scaled, beta) == score_objective(data, beta)


def test_empty_dataset_rejected():
    with pytest.raises(DataFormatError):
        Dataset(y=np.array([]), x=np.array([]), z=np.zeros((0, 1)))


def test_smoothed_single_observation():
    data = one_obs(1.0, 0.0, [1.0])
    assert smoothed_objective(data, [0.0], 1.0) == pytest.approx(-0.5)
    g = smoothed_gradient(data, [0.0], 1.0)
    assert g == pytest.approx([-0.9375])
    V = smoothed_hessian(data, [0.0], 1.0)
    assert V == pytest.approx([[0.0]])


def test_smoothed_saturates_to_score():
    rng = np.random.default_rng(1)
    data = random_instance(rng, 50, 3)
    beta = rng.standard_normal(3)
    margins = data.x + data.z @ beta
    assert np.min(np.abs(margins)) > 1e-6
    assert smoothed_objective(data, beta, 1e-8) == pytest.approx(
        score_objective(data, beta), abs=1e-14)


def test_joint_scale_invariance_exact_power_of_two():
    rng = np.random.default_rng(2)
    data = random_instance(rng, 30, 2)
    beta = rng.standard_normal(2)
    scaled = Dataset(y=data.y, x=2.0 * data.x, z=2.0 * data.z)
    assert smoothed_objective(scaled, beta, 0.8) == \
        smoothed_objective(data, beta, 0.4)


def test_joint_scale_invariance_generic_factor():
    rng = np.random.default_rng(3)
    data = random_instance(rng, 30, 3)
    beta = rng.standard_normal(3)
    c = 1.7
    scaled = Dataset(y=data.y, x=c * data.x, z=c * data.z)
    got = smoothed_objective(scaled, beta, c * 0.5)
    want = smoothed_objective(data, beta, 0.5)
    assert got == pytest.approx(want, abs=1e-12)
    g_scaled = smoothed_gradient(scaled, beta, c * 0.5)
    g = smoothed_gradient(data, beta, 0.5)
    assert g_scaled == pytest.approx(g, abs=1e-12)


def test_gradient_zero_outside_window():
    data = one_obs(1.0, 10.0, [0.3])
    assert np.all(smoothed_gradient(data, [0.0], 0.5) == 0.0)
    assert np.all(smoothed_hessian(data, [0.0], 0.5) == 0.0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(30):
        n = int(rng.integers(10, 50))
        p = int(rng.integers(1, 6))
        h = float(rng.uniform(0.1, 1.0))
        data = random_instance(rng, n, p)
        beta = 0.5 * rng.standard_normal(p)
        g = smoothed_gradient(data, beta, h)
        ref = fd_gradient(data, beta, h)
        scale = max(np.max(np.abs(ref)), 1e-8)
        assert np.max(np.abs(g - ref)) / scale < 1e-5


def test_hessian_matches_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(10, 50))
        p = int(rng.integers(1, 6))
        h = float(rng.uniform(0.1, 1.0))
        data = random_instance(rng, n, p)
        beta = 0.5 * rng.standard_normal(p)
        V = smoothed_hessian(data, beta, h)
        ref = fd_hessian(data, beta, h)
        scale = max(np.max(np.abs(ref)), 1e-8)
        assert np.max(np.abs(V - ref)) / scale < 1e-4


def test_hessian_symmetric():
    rng = np.random.default_rng(6)
    data = random_instance(rng, 60, 4)
    V = smoothed_hessian(data, 0.3 * rng.standard_normal(4), 0.4)
    assert np.max(np.abs(V - V.T)) <= 1e-12


def test_newton_moments_match_hand_assembly():
    rng = np.random.default_rng(7)
    data = random_instance(rng, 5, 2)
    beta = np.array([0.2, -0.1])
    h = 0.9
    mom = newton_moments(data, beta, h)
    assert mom.count == 5
    assert mom.U == pytest.approx(smoothed_gradient(data, beta, h), abs=1e-15)
    assert mom.V == pytest.approx(smoothed_hessian(data, beta, h), abs=1e-15)
    step = beta - np.linalg.solve(mom.V, mom.U)
    by_hand = beta - np.linalg.solve(
        smoothed_hessian(data, beta, h), smoothed_gradient(data, beta, h))
    assert step == pytest.approx(by_hand, abs=1e-12)


def test_newton_moments_zero_support():
    data = one_obs(-1.0, 50.0, [1.0])
    mom = newton_moments(data, [0.0], 0.2)
    assert np.all(mom.U == 0.0)
    assert np.all(mom.V == 0.0)


def test_moments_linear_under_concatenation():
    rng = np.random.default_rng(8)
    a = random_instance(rng, 24, 3)
    b = random_instance(rng, 40, 3)
    beta = 0.3 * rng.standard_normal(3)
    h = 0.5
    ma = newton_moments(a, beta, h)
    mb = newton_moments(b, beta, h)
    pooled = newton_moments(a.concat(b), beta, h)
    wa, wb = a.n / (a.n + b.n), b.n / (a.n + b.n)
    assert pooled.U == pytest.approx(wa * ma.U + wb * mb.U, abs=1e-12)
    assert pooled.V == pytest.approx(wa * ma.V + wb * mb.V, abs=1e-12)


def test_bandwidth_must_be_positive():
    data = one_obs(1.0, 0.0, [1.0])
    for fn in (smoothed_objective, smoothed_gradient, smoothed_hessian,
               newton_moments):
        with pytest.raises(ValueError):
            fn(data, [0.0], 0.0)
        with pytest.raises(ValueError):
            fn(data, [0.0], -0.5)


def test_moments_validates_shapes():
    with pytest.raises(ValueError):
        Moments(U=np.zeros(2), V=np.zeros((3, 3)), count=1)
