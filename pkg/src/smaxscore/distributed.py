"""Simulated multi-machine estimation.

Machines are in-process shards; the only thing that crosses the machine
boundary is the Moments message (gradient and Hessian of the smoothed
objective on that machine's data).  One-shot estimators average local solves;
the multi-round driver alternates broadcast of the current iterate with a
Newton step on the aggregated moments, shrinking the bandwidth on a
doubling-exponent schedule until it reaches the pooled-optimal value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .kernel import KernelSpec, biweight_integral_kernel
from .local_solver import (
    SolveOptions,
    SolverError,
    _solve_batch,
    initial_estimator,
    solve_mse_grid_1d,
)
from .objective import Moments, newton_moments

_BIWEIGHT = biweight_integral_kernel()


class SingularHessianError(RuntimeError):
    """Aggregated Hessian too ill-conditioned for a reliable Newton step."""


@dataclass
class Shard:
    """One machine's data plus an optional combination weight matrix."""

    index: int
    data: Dataset
    weight: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.data.n


@dataclass(frozen=True)
class ScheduleConfig:
    """Bandwidth/iteration schedule parameters for the multi-round driver."""

    alpha: int = 2
    lambda_h: float = 1.0
    T_override: Optional[int] = None
    ridge_eps: Optional[float] = None

    def __post_init__(self):
        if self.lambda_h <= 0:
            raise ValueError("lambda_h must be positive")
        if self.alpha < 1:
            raise ValueError("alpha must be a positive integer")


@dataclass(frozen=True)
class TraceRow:
    t: int
    beta: np.ndarray
    h: float
    grad_inf_norm: float
    cond_est: float
    ridge_used: bool
    lambda_t: Optional[float] = None
    l1_norm: Optional[float] = None
    support_size: Optional[int] = None


@dataclass
class EstimatorTrace:
    """Iterates of a multi-round run, including the t = 0 starting point."""

    iterates: list[TraceRow] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1].beta

    @property
    def T(self) -> int:
        return len(self.iterates) - 1

    def beta_at(self, t: int) -> np.ndarray:
        """Iterate after round t; the last one if the run stopped earlier."""
        return self.iterates[min(t, self.T)].beta

    def h_at(self, t: int) -> float:
        return self.iterates[min(t, self.T)].h


def partition(data: Dataset, L: int) -> list[Shard]:
    """Split into L equally sized contiguous shards; L must divide n."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if data.n % L != 0:
        raise ValueError(
            f"L = {L} does not divide n = {data.n}; build heterogeneous "
            "shards explicitly for unequal sizes"
        )
    m = data.n // L
    return [Shard(index=i, data=data.subset(i * m, (i + 1) * m)) for i in range(L)]


def local_moments(shard: Shard, beta, h: float,
                  kernel: KernelSpec = _BIWEIGHT) -> Moments:
    """The per-round message: Moments of this shard's data at (beta, h)."""
    return newton_moments(shard.data, beta, h, kernel)


def aggregate(messages: Sequence[Moments],
              weights: Optional[Sequence[np.ndarray]] = None) -> Moments:
    """Combine per-machine messages in shard-index order.

    Unweighted: simple average.  Weighted: sum of W_l @ U_l and W_l @ V_l.
    """
    if not messages:
        raise ValueError("no messages to aggregate")
    p = messages[0].p
    if any(msg.p != p for msg in messages):
        raise ValueError("message dimension mismatch")
    count = sum(msg.count for msg in messages)
    if weights is None:
        U = np.zeros(p)
        V = np.zeros((p, p))
        for msg in messages:
            U += msg.U
            V += msg.V
        L = len(messages)
        return Moments(U=U / L, V=V / L, count=count)
    if len(weights) != len(messages):
        raise ValueError("one weight matrix per message required")
    U = np.zeros(p)
    V = np.zeros((p, p))
    for W, msg in zip(weights, messages):
        W = np.asarray(W, dtype=np.float64)
        if W.shape != (p, p):
            raise ValueError("weight matrices must be p x p")
        U += W @ msg.U
        V += W @ msg.V
    return Moments(U=U, V=0.5 * (V + V.T), count=count)


def bandwidth_schedule(t: int, n: int, m: int, cfg: ScheduleConfig) -> float:
    """Round-t bandwidth: max{(lambda_h/n)^(1/(2a+1)), m^(-2^t/(3a))}."""
    if t < 1:
        raise ValueError("t must be >= 1")
    a = cfg.alpha
    floor_term = (cfg.lambda_h / n) ** (1.0 / (2 * a + 1))
    start_term = float(m) ** (-(2.0**t) / (3.0 * a))
    return max(floor_term, start_term)


def num_iterations(n: int, m: int, cfg: ScheduleConfig) -> int:
    """Rounds needed for the shrinking-bandwidth schedule to bottom out.

    Ceiling of log2((6a/(2a+1)) * (log n - log lambda_h) / log m), clamped
    to at least one round.
    """
    if m < 2 or n < m:
        raise ValueError("need m >= 2 and n >= m")
    a = cfg.alpha
    ratio = (6.0 * a / (2 * a + 1)) * (math.log(n) - math.log(cfg.lambda_h)) / math.log(m)
    if ratio <= 1.0:
        return 1
    return max(1, math.ceil(math.log2(ratio)))


def _stack_equal_shards(shards: Sequence[Shard]):
    Y = np.stack([s.data.y for s in shards])
    X = np.stack([s.data.x for s in shards])
    Z = np.stack([s.data.z for s in shards])
    return Y, X, Z


def _local_smse_batch(shards: Sequence[Shard], h: float, opts: SolveOptions,
                      kernel: KernelSpec,
                      init_rows: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-shard smoothed-score solves, batched when shard sizes are equal."""
    sizes = {s.size for s in shards}
    if len(sizes) == 1:
        Y, X, Z = _stack_equal_shards(shards)
        try:
            return _solve_batch(Y, X, Z, h, opts, kernel, init_rows=init_rows)
        except SolverError as err:
            raise SolverError(
                f"local solve failed on shard {_row_of(err, shards)}: {err}",
                err.beta, err.grad_norm,
            ) from err
    out = np.empty((len(shards), shards[0].data.p))
    for i, s in enumerate(shards):
        row_init = None if init_rows is None else init_rows[i][None, :]
        try:
            out[i] = _solve_batch(s.data.y[None], s.data.x[None],
                                  s.data.z[None], h, opts, kernel,
                                  init_rows=row_init)[0]
        except SolverError as err:
            raise SolverError(f"local solve failed on shard {s.index}: {err}",
                              err.beta, err.grad_norm) from err
    return out


def _row_of(err: SolverError, shards: Sequence[Shard]) -> int:
    row = getattr(err, "row", None)
    return shards[row].index if row is not None else -1


def avg_smse(shards: Sequence[Shard], h: float,
             opts: SolveOptions | None = None,
             kernel: KernelSpec = _BIWEIGHT,
             init_rows: Optional[np.ndarray] = None) -> np.ndarray:
    """One-shot averaging of per-shard smoothed-score solves at a shared
    bandwidth (callers supply the pooled-optimal h).

    ``init_rows`` optionally warm-starts each machine's descent, e.g. from
    per-machine grid pilots in the one-dimensional case.
    """
    if not shards:
        raise ValueError("no shards")
    if len({s.size for s in shards}) != 1:
        raise ValueError("unweighted averaging requires equal shard sizes; "
                         "use weighted_avg_smse")
    opts = opts or SolveOptions()
    betas = _local_smse_batch(shards, h, opts, kernel, init_rows=init_rows)
    return betas.mean(axis=0)


def local_mse_estimates(shards: Sequence[Shard], lo: float, hi: float,
                        steps: int) -> list[float]:
    """Per-shard grid minimizers of the raw score objective (p = 1)."""
    return [solve_mse_grid_1d(s.data, lo, hi, steps) for s in shards]


def avg_mse(shards: Sequence[Shard], lo: float, hi: float, steps: int) -> float:
    """One-shot averaging of per-shard raw-score grid solves (p = 1 only)."""
    if not shards:
        raise ValueError("no shards")
    if shards[0].data.p != 1:
        raise ValueError("averaged grid search is defined for p = 1 only")
    return float(np.mean(local_mse_estimates(shards, lo, hi, steps)))


def _newton_delta(mom: Moments, ridge_eps: Optional[float]):
    """Solve V d = U by symmetric eigendecomposition with a condition check.

    Returns (delta, cond_estimate, ridge_used).
    """
    V = mom.V
    p = mom.p
    evals, evecs = np.linalg.eigh(V)
    amax = float(np.max(np.abs(evals)))
    amin = float(np.min(np.abs(evals)))
    cond = math.inf if amin == 0.0 else amax / amin
    ridged = False
    if cond > 1e12 or not math.isfinite(cond):
        if ridge_eps is None:
            raise SingularHessianError(
                f"aggregated Hessian condition estimate {cond:.3e} exceeds 1e12; "
                "set ridge_eps to regularize"
            )
        V = V + (ridge_eps * np.trace(V) / p) * np.eye(p)
        evals, evecs = np.linalg.eigh(V)
        amax = float(np.max(np.abs(evals)))
        amin = float(np.min(np.abs(evals)))
        cond = math.inf if amin == 0.0 else amax / amin
        ridged = True
        if not math.isfinite(cond) or cond > 1e14:
            raise SingularHessianError(
                "Hessian still singular after ridge regularization"
            )
    delta = evecs @ ((evecs.T @ mom.U) / evals)
    return delta, cond, ridged


def _default_init(shards: Sequence[Shard], cfg: ScheduleConfig,
                  kernel: KernelSpec) -> np.ndarray:
    m = shards[0].size
    h0 = float(m) ** (-1.0 / (2 * cfg.alpha + 1))
    return initial_estimator(shards[0].data, h0, kernel=kernel)


def _multiround(shards: Sequence[Shard], cfg: ScheduleConfig,
                init: Optional[np.ndarray],
                weights: Optional[Sequence[np.ndarray]],
                kernel: KernelSpec,
                stall_tol: float = 1e-10) -> EstimatorTrace:
    if not shards:
        raise ValueError("no shards")
    n = sum(s.size for s in shards)
    m = min(s.size for s in shards)
    T = cfg.T_override if cfg.T_override is not None else num_iterations(n, m, cfg)
    beta = np.asarray(init, dtype=np.float64).reshape(-1).copy() \
        if init is not None else _default_init(shards, cfg, kernel)
    trace = EstimatorTrace()
    trace.iterates.append(TraceRow(
        t=0, beta=beta.copy(), h=math.nan, grad_inf_norm=math.nan,
        cond_est=math.nan, ridge_used=False,
    ))
    for t in range(1, T + 1):
        h = bandwidth_schedule(t, n, m, cfg)
        messages = [local_moments(s, beta, h, kernel) for s in shards]
        mom = aggregate(messages, weights)
        delta, cond, ridged = _newton_delta(mom, cfg.ridge_eps)
        beta = beta - delta
        trace.iterates.append(TraceRow(
            t=t, beta=beta.copy(), h=h,
            grad_inf_norm=float(np.max(np.abs(mom.U))),
            cond_est=cond, ridge_used=ridged,
        ))
        if np.max(np.abs(delta)) < stall_tol:
            break
    return trace


def msmse(shards: Sequence[Shard], cfg: ScheduleConfig | None = None,
          init: Optional[np.ndarray] = None,
          kernel: KernelSpec = _BIWEIGHT) -> EstimatorTrace:
    """Multi-round Newton refinement over the shards.

    Each round broadcasts the current iterate, collects per-shard Moments at
    the scheduled bandwidth, averages them, and applies one Newton step.
    Without an explicit ``init`` the pilot estimate comes from shard 1.
    """
    cfg = cfg or ScheduleConfig()
    return _multiround(shards, cfg, init, None, kernel)


def _check_weights(shards: Sequence[Shard], tol: float = 1e-10):
    if any(s.weight is None for s in shards):
        raise ValueError("every shard needs a weight matrix")
    p = shards[0].data.p
    total = np.zeros((p, p))
    for s in shards:
        W = np.asarray(s.weight, dtype=np.float64)
        if W.shape != (p, p):
            raise ValueError("weight matrices must be p x p")
        total += W
    if np.max(np.abs(total - np.eye(p))) > tol:
        raise ValueError("shard weights must sum to the identity")
    return [np.asarray(s.weight, dtype=np.float64) for s in shards]


def weighted_avg_smse(shards: Sequence[Shard], h: float,
                      opts: SolveOptions | None = None,
                      kernel: KernelSpec = _BIWEIGHT) -> np.ndarray:
    """Weighted combination sum W_l beta_l of per-shard smoothed solves."""
    weights = _check_weights(shards)
    opts = opts or SolveOptions()
    betas = _local_smse_batch(shards, h, opts, kernel)
    p = shards[0].data.p
    out = np.zeros(p)
    for W, b in zip(weights, betas):
        out += W @ b
    return out


def weighted_msmse(shards: Sequence[Shard], cfg: ScheduleConfig | None = None,
                   init: Optional[np.ndarray] = None,
                   kernel: KernelSpec = _BIWEIGHT) -> EstimatorTrace:
    """Multi-round driver with per-machine weight matrices summing to I."""
    cfg = cfg or ScheduleConfig()
    weights = _check_weights(shards)
    return _multiround(shards, cfg, init, weights, kernel)


def optimal_weights(Vl: Sequence[np.ndarray], Vsl: Sequence[np.ndarray],
                    ml: Sequence[int], method: str) -> list[np.ndarray]:
    """Variance-minimizing weight matrices for the weighted estimators.

    method "wAvg":   W_l prop. to m_l V_l Vs_l^{-1} V_l
    method "wmSMSE": W_l prop. to m_l V_l Vs_l^{-1}
    normalized so the weights sum to the identity.
    """
    if method not in ("wAvg", "wmSMSE"):
        raise ValueError("method must be 'wAvg' or 'wmSMSE'")
    if not (len(Vl) == len(Vsl) == len(ml)):
        raise ValueError("Vl, Vsl, ml must have equal lengths")
    p = np.asarray(Vl[0]).shape[0]
    raw = []
    for V, Vs, m in zip(Vl, Vsl, ml):
        V = np.asarray(V, dtype=np.float64)
        Vs = np.asarray(Vs, dtype=np.float64)
        try:
            VVs = V @ np.linalg.solve(Vs, V) if method == "wAvg" \
                else V @ np.linalg.inv(Vs)
        except np.linalg.LinAlgError as err:
            raise ValueError(f"singular Vs matrix: {err}") from err
        raw.append(m * VVs)
    total = np.sum(raw, axis=0)
    try:
        total_inv = np.linalg.inv(total)
    except np.linalg.LinAlgError as err:
        raise ValueError(f"singular weight normalizer: {err}") from err
    weights = [total_inv @ R for R in raw]
    resid = np.max(np.abs(np.sum(weights, axis=0) - np.eye(p)))
    if resid > 1e-10:
        raise ValueError(f"weights fail to sum to identity (residual {resid:.2e})")
    return weights


def write_trace_csv(trace: EstimatorTrace, path) -> None:
    """Trace rows as CSV: t, h_t, coefficients, diagnostics.

    High-dimensional runs add lambda_t, l1_norm, support_size columns.
    """
    p = trace.final.shape[0]
    hd = any(r.lambda_t is not None for r in trace.iterates)
    header = ["t", "h_t"] + [f"beta_{j + 1}" for j in range(p)] + \
        ["grad_inf_norm", "cond_est", "ridge_used"]
    if hd:
        header += ["lambda_t", "l1_norm", "support_size"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in trace.iterates:
            row = [r.t, repr(r.h)] + [repr(float(b)) for b in r.beta] + \
                [repr(r.grad_inf_norm), repr(r.cond_est), int(r.ridge_used)]
            if hd:
                row += ["" if r.lambda_t is None else repr(r.lambda_t),
                        "" if r.l1_norm is None else repr(r.l1_norm),
                        "" if r.support_size is None else r.support_size]
            writer.writerow(row)
