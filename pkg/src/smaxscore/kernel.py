"""Smoothing kernels for the smoothed score objective.

A smoother H is the integral of an order-alpha kernel: H' integrates to one,
has vanishing moments up to alpha - 1, a nonzero alpha-th moment pi_U, and a
finite squared integral pi_V.  H itself saturates at 0 below -1 and at 1 above
+1, so H(u/h) interpolates the step indicator 1[u >= 0] at scale h.

The only built-in is the integrated biweight (alpha = 2); custom kernels are
accepted anywhere a KernelSpec is, and ``verify_order`` gates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

Fn = Callable[[np.ndarray], np.ndarray]


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge; carries the last estimate."""

    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (last estimate {estimate!r})")
        self.estimate = estimate


@dataclass(frozen=True)
class KernelSpec:
    """A smoother H with derivatives and moment constants.

    evalH, evalHp, evalHpp must accept numpy arrays.  evalHp and evalHpp are
    zero outside [-1, 1]; evalH is 0 below -1 and 1 above +1.
    """

    alpha: int
    evalH: Fn
    evalHp: Fn
    evalHpp: Fn
    piU: float
    piV: float

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("kernel order must be a positive integer")


# Clipping to [-1, 1] realizes the saturation branches for free: the inner
# polynomials hit exactly 1/0/0 at the boundary, so no piecewise masks are
# needed and each evaluation is a handful of fused array ops.

def _biweight_H(u: np.ndarray) -> np.ndarray:
    c = np.clip(u, -1.0, 1.0)
    c2 = c * c
    return 0.5 + c * (0.9375 + c2 * (0.1875 * c2 - 0.625))


def _biweight_Hp(u: np.ndarray) -> np.ndarray:
    c = np.clip(u, -1.0, 1.0)
    t = 1.0 - c * c
    return 0.9375 * t * t


def _biweight_Hpp(u: np.ndarray) -> np.ndarray:
    c = np.clip(u, -1.0, 1.0)
    return -3.75 * c * (1.0 - c * c)


def _biweight_H_and_Hp(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """H and H' sharing the clipped powers; the descent engine's hot path."""
    c = np.clip(u, -1.0, 1.0)
    c2 = c * c
    H = 0.5 + c * (0.9375 + c2 * (0.1875 * c2 - 0.625))
    t = 1.0 - c2
    t *= t
    t *= 0.9375
    return H, t


def biweight_integral_kernel() -> KernelSpec:
    """Integrated biweight smoother of order 2.

    H(u) = 1/2 + 15/16 (u - 2u^3/3 + u^5/5) on [-1, 1], clamped to {0, 1}
    outside; H'(u) = 15/16 (1 - u^2)^2 and H''(u) = -15/4 u (1 - u^2) on the
    support.  Moment constants are exact: pi_U = 1/7, pi_V = 5/7.
    """
    return KernelSpec(
        alpha=2,
        evalH=_biweight_H,
        evalHp=_biweight_Hp,
        evalHpp=_biweight_Hpp,
        piU=1.0 / 7.0,
        piV=5.0 / 7.0,
    )


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                      tol: float, max_depth: int = 50) -> float:
    """Recursive adaptive Simpson rule on [a, b] with absolute tolerance."""

    def simpson(lo, flo, hi, fhi, fmid):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, flo, hi, fhi, fmid, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        flm = f(lmid)
        frm = f(rmid)
        left = simpson(lo, flo, mid, fmid, flm)
        right = simpson(mid, fmid, hi, fhi, frm)
        if depth >= max_depth:
            raise QuadratureError(
                "adaptive Simpson hit maximum refinement depth", left + right
            )
        if abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, flo, mid, fmid, flm, left, eps / 2.0, depth + 1) + \
            recurse(mid, fmid, hi, fhi, frm, right, eps / 2.0, depth + 1)

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    whole = simpson(a, fa, b, fb, fm)
    return recurse(a, fa, b, fb, fm, whole, tol, 0)


def _moment(k: KernelSpec, power: int, tol: float) -> float:
    def f(u: float) -> float:
        return (u**power if power else 1.0) * float(k.evalHp(np.float64(u)))

    return _adaptive_simpson(f, -1.0, 1.0, tol)


def kernel_constants(k: KernelSpec, tol: float = 1e-10) -> tuple[float, float]:
    """Quadrature estimates of the alpha-th moment of H' and of int (H')^2.

    Returns (piU, piV) to absolute accuracy ``tol`` and also returns them
    stored in a copy of the spec via ``with_constants``.
    """
    piU = _moment(k, k.alpha, tol)

    def hp_sq(u: float) -> float:
        v = float(k.evalHp(np.float64(u)))
        return v * v

    piV = _adaptive_simpson(hp_sq, -1.0, 1.0, tol)
    return piU, piV


def with_constants(k: KernelSpec, tol: float = 1e-10) -> KernelSpec:
    """Copy of ``k`` with piU/piV replaced by fresh quadrature estimates."""
    piU, piV = kernel_constants(k, tol)
    return replace(k, piU=piU, piV=piV)


def verify_order(k: KernelSpec, tol: float = 1e-8) -> list[tuple[int, float, bool]]:
    """Moment table for H': entries (moment index, value, pass).

    Moment 0 must equal 1, moments 1..alpha-1 must vanish, and moment alpha
    must be nonzero, each judged at absolute tolerance ``tol``.  Failures are
    reported in the table, not raised.
    """
    quad_tol = min(1e-10, tol / 10.0) if math.isfinite(tol) else 1e-10
    table = []
    for j in range(k.alpha + 1):
        val = _moment(k, j, quad_tol)
        if j == 0:
            ok = abs(val - 1.0) <= tol
        elif j < k.alpha:
            ok = abs(val) <= tol
        else:
            ok = abs(val) > tol or not math.isfinite(tol)
        table.append((j, val, bool(ok)))
    return table
