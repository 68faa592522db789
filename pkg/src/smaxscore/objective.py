"""Score objective, smoothed objective, and its analytic gradient/Hessian.

The score objective counts sign mismatches: (1/n) sum (-y_i) 1[x_i + z_i'b >= 0].
The smoothed objective replaces the indicator with H(./h).  Its gradient and
Hessian have closed forms in H' and H''; because both derivatives vanish
outside [-1, 1], sums run only over observations whose scaled margin lies in
the kernel window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .kernel import KernelSpec, biweight_integral_kernel

_BIWEIGHT = biweight_integral_kernel()


@dataclass(frozen=True)
class Moments:
    """Per-round message: smoothed-score vector U, smoothed Hessian V, and
    the sample size they were computed from."""

    U: np.ndarray
    V: np.ndarray
    count: int

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        V = np.asarray(self.V, dtype=np.float64)
        if U.ndim != 1 or V.shape != (U.shape[0], U.shape[0]):
            raise ValueError("U must be (p,) and V must be (p, p)")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def p(self) -> int:
        return self.U.shape[0]


def _check_beta(data: Dataset, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.shape[0] != data.p:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {data.p}")
    return beta


def _check_h(h: float) -> float:
    h = float(h)
    if not h > 0.0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    return h


def score_objective(data: Dataset, beta) -> float:
    """(1/n) sum (-y_i) 1[x_i + z_i'beta >= 0]."""
    beta = _check_beta(data, beta)
    margin = data.x + data.z @ beta
    return float(np.mean(np.where(margin >= 0.0, -data.y, 0.0)))


def smoothed_objective(data: Dataset, beta, h: float,
                       kernel: KernelSpec = _BIWEIGHT) -> float:
    """(1/n) sum (-y_i) H((x_i + z_i'beta) / h)."""
    beta = _check_beta(data, beta)
    h = _check_h(h)
    arg = (data.x + data.z @ beta) / h
    # Outside the window H is exactly 0 or 1, so only -y survives above +1.
    above = arg > 1.0
    inside = np.abs(arg) <= 1.0
    total = -np.sum(data.y[above])
    idx = np.flatnonzero(inside)
    if idx.size:
        total += np.dot(-data.y[idx], kernel.evalH(arg[idx]))
    return float(total / data.n)


def _window(data: Dataset, beta: np.ndarray, h: float):
    arg = (data.x + data.z @ beta) / h
    idx = np.flatnonzero(np.abs(arg) <= 1.0)
    return arg, idx


def smoothed_gradient(data: Dataset, beta, h: float,
                      kernel: KernelSpec = _BIWEIGHT) -> np.ndarray:
    """Analytic gradient: (1/(nh)) sum (-y_i) H'((x_i + z_i'beta)/h) z_i."""
    beta = _check_beta(data, beta)
    h = _check_h(h)
    arg, idx = _window(data, beta, h)
    g = np.zeros(data.p)
    if idx.size:
        w = -data.y[idx] * kernel.evalHp(arg[idx])
        g = data.z[idx].T @ w
    return g / (data.n * h)


def smoothed_hessian(data: Dataset, beta, h: float,
                     kernel: KernelSpec = _BIWEIGHT) -> np.ndarray:
    """Analytic Hessian: (1/(nh^2)) sum (-y_i) H''((x_i + z_i'beta)/h) z_i z_i'."""
    beta = _check_beta(data, beta)
    h = _check_h(h)
    arg, idx = _window(data, beta, h)
    V = np.zeros((data.p, data.p))
    if idx.size:
        w = -data.y[idx] * kernel.evalHpp(arg[idx])
        zi = data.z[idx]
        V = zi.T @ (w[:, None] * zi)
    V /= data.n * h * h
    return 0.5 * (V + V.T)


def newton_moments(data: Dataset, beta, h: float,
                   kernel: KernelSpec = _BIWEIGHT) -> Moments:
    """Gradient and Hessian bundled as one message.

    The Newton update for the smoothed objective is beta - solve(V, U) with
    U = smoothed_gradient and V = smoothed_hessian at the same (beta, h).
    Both reuse a single pass over the kernel window.
    """
    beta = _check_beta(data, beta)
    h = _check_h(h)
    arg, idx = _window(data, beta, h)
    p = data.p
    U = np.zeros(p)
    V = np.zeros((p, p))
    if idx.size:
        a = arg[idx]
        yi = data.y[idx]
        zi = data.z[idx]
        U = zi.T @ (-yi * kernel.evalHp(a))
        wh = -yi * kernel.evalHpp(a)
        V = zi.T @ (wh[:, None] * zi)
    U /= data.n * h
    V /= data.n * h * h
    return Moments(U=U, V=0.5 * (V + V.T), count=data.n)
