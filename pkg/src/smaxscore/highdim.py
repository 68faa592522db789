"""High-dimensional multi-round estimation with a per-round l1 step.

When the coefficient vector is sparse and p is large, the dense Newton update
is replaced by an l1-minimization subject to a sup-norm constraint on the
linearized optimality map: the constraint matrix is the smoothed Hessian of a
single designated machine, the right-hand side combines that machine's
Hessian-vector product with the gradient aggregated across all machines, and
the constraint radius follows a shrinking schedule.  Each round is a linear
program solved by the self-contained simplex engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .distributed import EstimatorTrace, Shard, TraceRow
from .kernel import KernelSpec, biweight_integral_kernel
from .objective import smoothed_gradient, smoothed_hessian
from .simplex import InfeasibleError, SimplexResult, linear_program

_BIWEIGHT = biweight_integral_kernel()


class DantzigInfeasibleError(RuntimeError):
    """Constraint radius below the attainable sup-norm minimum."""

    def __init__(self, lam: float, min_supnorm: float):
        super().__init__(
            f"radius {lam:.6g} is below the minimal attainable sup-norm "
            f"{min_supnorm:.6g}"
        )
        self.min_supnorm = min_supnorm


class CertificateError(RuntimeError):
    """The LP solution failed its optimality certificate."""


@dataclass(frozen=True)
class DantzigProblem:
    """One round's l1 step: min ||b||_1 s.t. ||Vop b - rhs||_inf <= lam."""

    Vop: np.ndarray
    rhs: np.ndarray
    lam: float

    def __post_init__(self):
        Vop = np.asarray(self.Vop, dtype=np.float64)
        rhs = np.asarray(self.rhs, dtype=np.float64).reshape(-1)
        if Vop.shape != (rhs.shape[0], rhs.shape[0]):
            raise ValueError("Vop must be p x p matching rhs")
        if self.lam < 0.0:
            raise ValueError("lam must be nonnegative")
        object.__setattr__(self, "Vop", Vop)
        object.__setattr__(self, "rhs", rhs)


@dataclass(frozen=True)
class HdConfig:
    """Schedule parameters for the sparse multi-round driver.

    h_star is the fixed bandwidth for every round; C_lambda scales the
    constraint-radius schedule; sparsity_hint feeds the initialization-error
    proxy (when absent the proxy is read off the first round's step);
    decay in (0, 1) shrinks the proxy geometrically over rounds.
    """

    alpha: int = 2
    C_lambda: float = 1.0
    sparsity_hint: Optional[int] = None
    h_star: float = 0.1
    decay: float = 0.5
    hessian_machine: int = 0

    def __post_init__(self):
        if self.h_star <= 0.0:
            raise ValueError("h_star must be positive")
        if self.C_lambda <= 0.0:
            raise ValueError("C_lambda must be positive")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")


def default_h_star(n: int, p: int, alpha: int = 2) -> float:
    """(log p / n)^(1/(2 alpha + 1)), the fixed high-dimensional bandwidth."""
    return (math.log(p) / n) ** (1.0 / (2 * alpha + 1))


def hessian_vector_product(shard1: Dataset, beta_prev, h: float,
                           kernel: KernelSpec = _BIWEIGHT) -> np.ndarray:
    """(1/(m h^2)) sum (-y_i) H''(arg_i) (z_i' beta_prev) z_i, without
    materializing the p x p Hessian."""
    beta = np.asarray(beta_prev, dtype=np.float64).reshape(-1)
    if beta.shape[0] != shard1.p:
        raise ValueError("beta_prev has wrong length")
    if not h > 0.0:
        raise ValueError("bandwidth must be positive")
    zb = shard1.z @ beta
    arg = (shard1.x + zb) / h
    idx = np.flatnonzero(np.abs(arg) <= 1.0)
    out = np.zeros(shard1.p)
    if idx.size:
        w = -shard1.y[idx] * kernel.evalHpp(arg[idx]) * zb[idx]
        out = shard1.z[idx].T @ w
    return out / (shard1.n * h * h)


def _min_attainable_supnorm(Vop: np.ndarray, rhs: np.ndarray) -> float:
    """min over beta of ||Vop beta - rhs||_inf, via an auxiliary LP."""
    p = rhs.shape[0]
    # Variables [b+, b-, u] >= 0; rows: +(Vop b) - u <= rhs, -(Vop b) - u <= -rhs.
    ones = np.ones((p, 1))
    G = np.block([[Vop, -Vop, -ones], [-Vop, Vop, -ones]])
    g = np.concatenate([rhs, -rhs])
    c = np.zeros(2 * p + 1)
    c[-1] = 1.0
    res = linear_program(c, G, g)
    return float(res.fun)


def solve_dantzig_result(prob: DantzigProblem) -> tuple[np.ndarray, SimplexResult]:
    """Solve the l1 step and return (beta, certified LP result).

    The split formulation min sum(b+ + b-) over the sup-norm box is solved by
    the simplex engine; the returned result carries the dual certificate.
    Raises DantzigInfeasibleError when lam is below the attainable sup-norm
    minimum, CertificateError if the duality gap or complementary slackness
    residual exceeds 1e-8.
    """
    V = prob.Vop
    rhs = prob.rhs
    p = rhs.shape[0]
    G = np.block([[V, -V], [-V, V]])
    g = np.concatenate([prob.lam + rhs, prob.lam - rhs])
    c = np.ones(2 * p)
    try:
        res = linear_program(c, G, g)
    except InfeasibleError:
        raise DantzigInfeasibleError(
            prob.lam, _min_attainable_supnorm(V, rhs)
        ) from None
    if res.duality_gap >= 1e-8 or res.comp_residual >= 1e-8:
        raise CertificateError(
            f"optimality certificate failed: gap {res.duality_gap:.3e}, "
            f"complementarity {res.comp_residual:.3e}"
        )
    beta = res.x[:p] - res.x[p:]
    return beta, res


def solve_dantzig(prob: DantzigProblem) -> np.ndarray:
    """Certified minimizer of ||beta||_1 over ||Vop beta - rhs||_inf <= lam."""
    beta, _ = solve_dantzig_result(prob)
    return beta


def initial_error_proxy(cfg: HdConfig, m: int, p: int) -> Optional[float]:
    """Theory-scaled proxy for the initial estimation error when the
    sparsity is hinted: (s log p / m)^(alpha/(2 alpha + 1))."""
    if cfg.sparsity_hint is None:
        return None
    a = cfg.alpha
    return (cfg.sparsity_hint * math.log(p) / m) ** (a / (2.0 * a + 1.0))


def lambda_schedule(t: int, n: int, m: int, p: int, cfg: HdConfig,
                    delta0: Optional[float] = None) -> float:
    """Round-t constraint radius.

    C_lambda * [ (log p / n)^(a/(2a+1)) + sqrt(s log p / (m h*^3)) d_{t-1}
    + s d_{t-1}^2 ] with d_{t-1} = decay^(t-1) * d_0.  The unobservable
    initialization error is replaced by d_0 = (s log p / m)^(a/(2a+1)) when
    the sparsity is hinted; otherwise callers supply delta0 (the driver uses
    the first round's step length) and the sparsity terms run with s = 1.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    a = cfg.alpha
    s = cfg.sparsity_hint if cfg.sparsity_hint is not None else 1
    if delta0 is None:
        delta0 = initial_error_proxy(cfg, m, p)
    if delta0 is None:
        delta0 = 1.0  # provisional until the first step is observed
    d_prev = cfg.decay ** (t - 1) * delta0
    stat = (math.log(p) / n) ** (a / (2.0 * a + 1.0))
    mid = math.sqrt(s * math.log(p) / (m * cfg.h_star**3)) * d_prev
    return cfg.C_lambda * (stat + mid + s * d_prev * d_prev)


def _support_size(beta: np.ndarray) -> int:
    scale = float(np.max(np.abs(beta), initial=0.0))
    if scale == 0.0:
        return 0
    return int(np.sum(np.abs(beta) > 1e-6 * scale))


def hd_msmse(shards: Sequence[Shard], cfg: HdConfig, init,
             rounds: int = 8, kernel: KernelSpec = _BIWEIGHT,
             stall_tol: float = 1e-10) -> EstimatorTrace:
    """Sparse multi-round driver.

    Per round: broadcast the iterate, aggregate gradients from every machine,
    form the right-hand side from the designated machine's Hessian-vector
    product, and solve the l1 step at the scheduled radius.  The designated
    machine's dense Hessian serves as the constraint operator.  An explicit
    ``init`` is required; runs stop early when the iterate stalls.
    """
    if not shards:
        raise ValueError("no shards")
    if init is None:
        raise ValueError("high-dimensional runs require an explicit init")
    beta = np.asarray(init, dtype=np.float64).reshape(-1).copy()
    p = shards[0].data.p
    if beta.shape[0] != p:
        raise ValueError("init has wrong length")
    n = sum(s.size for s in shards)
    sizes = np.array([s.size for s in shards], dtype=np.float64)
    m = shards[cfg.hessian_machine].size
    h = cfg.h_star
    delta0 = initial_error_proxy(cfg, m, p)
    trace = EstimatorTrace()
    trace.iterates.append(TraceRow(
        t=0, beta=beta.copy(), h=math.nan, grad_inf_norm=math.nan,
        cond_est=math.nan, ridge_used=False,
        lambda_t=math.nan, l1_norm=float(np.sum(np.abs(beta))),
        support_size=_support_size(beta),
    ))
    machine1 = shards[cfg.hessian_machine].data
    for t in range(1, rounds + 1):
        U_n = np.zeros(p)
        for s in shards:
            U_n += (s.size / n) * smoothed_gradient(s.data, beta, h, kernel)
        hvp = hessian_vector_product(machine1, beta, h, kernel)
        rhs = hvp - U_n
        Vop = smoothed_hessian(machine1, beta, h, kernel)
        lam = lambda_schedule(t, n, m, p, cfg, delta0=delta0)
        try:
            new_beta, _ = solve_dantzig_result(
                DantzigProblem(Vop=Vop, rhs=rhs, lam=lam)
            )
        except (DantzigInfeasibleError, CertificateError) as err:
            err.args = (f"round {t}: {err.args[0]}",)
            err.round_index = t
            raise
        step = float(np.max(np.abs(new_beta - beta)))
        if delta0 is None:
            delta0 = max(float(np.linalg.norm(new_beta - beta)), 1e-12)
        beta = new_beta
        trace.iterates.append(TraceRow(
            t=t, beta=beta.copy(), h=h,
            grad_inf_norm=float(np.max(np.abs(U_n))),
            cond_est=math.nan, ridge_used=False,
            lambda_t=lam, l1_norm=float(np.sum(np.abs(beta))),
            support_size=_support_size(beta),
        ))
        if step < stall_tol:
            break
    return trace
