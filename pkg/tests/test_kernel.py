import math

import numpy as np
import pytest
from scipy.integrate import quad

from smaxscore.kernel import (
    KernelSpec,
    biweight_integral_kernel,
    kernel_constants,
    verify_order,
)


@pytest.fixture
def biweight():
    return biweight_integral_kernel()


def test_center_and_saturation_values(biweight):
    assert biweight.evalH(np.float64(0.0)) == pytest.approx(0.5)
    assert biweight.evalH(np.float64(2.0)) == 1.0
    assert biweight.evalH(np.float64(-1.5)) == 0.0
    assert biweight.evalHp(np.float64(0.0)) == pytest.approx(0.9375)
    assert biweight.evalHpp(np.float64(0.0)) == 0.0


def test_derivatives_vanish_outside_window(biweight):
    u = np.array([-3.0, -1.0001, 1.0001, 7.0])
    assert np.all(biweight.evalHp(u) == 0.0)
    assert np.all(biweight.evalHpp(u) == 0.0)


def test_first_derivative_matches_finite_difference(biweight):
    u = np.linspace(-0.999, 0.999, 617)
    d = 1e-6
    fd = (biweight.evalH(u + d) - biweight.evalH(u - d)) / (2 * d)
    assert np.max(np.abs(fd - biweight.evalHp(u))) < 1e-8


def test_second_derivative_matches_finite_difference(biweight):
    u = np.linspace(-0.999, 0.999, 617)
    d = 1e-4
    fd = (biweight.evalHp(u + d) - biweight.evalHp(u - d)) / (2 * d)
    assert np.max(np.abs(fd - biweight.evalHpp(u))) < 1e-5


def test_second_order_expansion_bound(biweight):
    # |H'(x+d) - H'(x) - d H''(x)| <= C d^2 with C from the third derivative
    # bound of the quartic: |H'''| <= 7.5 on the support.
    u = np.linspace(-0.9999, 0.9999, 2001)
    d = 1e-4
    resid = biweight.evalHp(u + d) - biweight.evalHp(u) - d * biweight.evalHpp(u)
    assert np.max(np.abs(resid)) <= 0.5 * 7.5 * d * d * 1.05


def test_smoother_is_nondecreasing(biweight):
    u = np.linspace(-1.5, 1.5, 4001)
    h = biweight.evalH(u)
    assert np.all(np.diff(h) >= -1e-15)


def test_constants_match_closed_forms(biweight):
    piU, piV = kernel_constants(biweight, tol=1e-10)
    assert piU == pytest.approx(1.0 / 7.0, abs=1e-8)
    assert piV == pytest.approx(5.0 / 7.0, abs=1e-8)


def test_constants_match_independent_quadrature(biweight):
    piU, piV = kernel_constants(biweight, tol=1e-10)
    ref_u, _ = quad(lambda t: t**2 * 0.9375 * (1 - t * t) ** 2, -1, 1)
    ref_v, _ = quad(lambda t: (0.9375 * (1 - t * t) ** 2) ** 2, -1, 1)
    assert piU == pytest.approx(ref_u, abs=1e-10)
    assert piV == pytest.approx(ref_v, abs=1e-10)


def test_verify_order_passes_for_builtin(biweight):
    table = verify_order(biweight, tol=1e-8)
    assert [row[0] for row in table] == [0, 1, 2]
    assert all(row[2] for row in table)
    assert table[0][1] == pytest.approx(1.0, abs=1e-8)
    assert table[1][1] == pytest.approx(0.0, abs=1e-8)
    assert table[2][1] == pytest.approx(1.0 / 7.0, abs=1e-8)


def test_verify_order_rejects_overclaimed_order(biweight):
    wrong = KernelSpec(alpha=3, evalH=biweight.evalH, evalHp=biweight.evalHp,
                       evalHpp=biweight.evalHpp, piU=0.0, piV=biweight.piV)
    table = verify_order(wrong, tol=1e-8)
    # the quadratic moment is 1/7, not 0, so order 3 must fail there
    assert table[2][2] is False


def test_verify_order_vacuous_tolerance(biweight):
    table = verify_order(biweight, tol=math.inf)
    assert all(row[2] for row in table)


def test_moment_table_stable_under_refinement(biweight):
    coarse = verify_order(biweight, tol=1e-6)
    fine = verify_order(biweight, tol=1e-10)
    for (_, a, _), (_, b, _) in zip(coarse, fine):
        assert a == pytest.approx(b, abs=1e-6)
