"""Per-machine estimators for the binary response model.

Two local routes: a grid search over the raw score objective (p = 1 only,
where enumeration is feasible), and first-order descent on the smoothed
objective with bandwidth continuation.  The descent engine is written to run
a whole batch of equal-sized shards simultaneously, which is what makes the
one-shot averaging estimators affordable at hundreds of machines; a single
shard is just a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernel as kernel_module
from .data import Dataset
from .kernel import KernelSpec, biweight_integral_kernel

_BIWEIGHT = biweight_integral_kernel()


class SolverError(RuntimeError):
    """Descent failed to reach the gradient tolerance at the final bandwidth.

    Carries the best iterate found and its gradient sup-norm.
    """

    def __init__(self, message: str, beta: np.ndarray, grad_norm: float,
                 row: int | None = None):
        super().__init__(f"{message} (grad sup-norm {grad_norm:.3e})")
        self.beta = beta
        self.grad_norm = grad_norm
        self.row = row


@dataclass
class SolveOptions:
    """Options for the continuation descent.

    continuation_ladder, when given, must be strictly decreasing and end at
    the target bandwidth.  When absent, a geometric ladder with ratio 0.5
    from 1.0 down to the target is used for cold starts; warm starts (init
    given) go straight to the target bandwidth.  The initial trial step of
    each backtracking line search is a curvature-scaled (Barzilai-Borwein)
    guess clipped around step_init; backtracking multiplies by shrink until
    the sufficient-decrease test with constant armijo_c passes.
    """

    max_iters: int = 500
    grad_tol: float = 1e-6
    continuation_ladder: Optional[Sequence[float]] = None
    step_init: float = 1.0
    shrink: float = 0.5
    armijo_c: float = 1e-4
    stage_tol: float = 1e-3
    init: Optional[np.ndarray] = None
    callback: Optional[Callable[[float, np.ndarray, float], None]] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must be in (0, 1)")


def _ladder(h: float, opts: SolveOptions) -> list[float]:
    if opts.continuation_ladder is not None:
        lad = [float(v) for v in opts.continuation_ladder]
        if any(b >= a for a, b in zip(lad, lad[1:])):
            raise ValueError("continuation ladder must be strictly decreasing")
        if abs(lad[-1] - h) > 1e-15 * max(1.0, h):
            raise ValueError("continuation ladder must end at the target bandwidth")
        return lad
    if opts.init is not None or h >= 1.0:
        return [h]
    lad = []
    cur = 1.0
    while cur > h * (1.0 + 1e-12):
        lad.append(cur)
        cur *= 0.5
    lad.append(h)
    return lad


def _batch_arg(Y, X, Z, beta, h):
    if Z.shape[2] == 1:
        arg = Z[:, :, 0] * beta[:, 0:1]
    else:
        arg = np.einsum("lmp,lp->lm", Z, beta)
    arg += X
    arg *= 1.0 / h
    return arg


def _batch_objective(k: KernelSpec, Y, X, Z, beta, h):
    """Smoothed objective per batch row; beta is (L, p)."""
    arg = _batch_arg(Y, X, Z, beta, h)
    H = k.evalH(arg)
    H *= Y
    return -np.mean(H, axis=1)


def _batch_value_grad(k: KernelSpec, Y, X, Z, beta, h):
    """Objective and gradient per batch row in one pass over the data."""
    arg = _batch_arg(Y, X, Z, beta, h)
    m = Y.shape[1]
    if k.evalH is kernel_module._biweight_H:
        H, w = kernel_module._biweight_H_and_Hp(arg)
    else:
        H, w = k.evalH(arg), k.evalHp(arg)
    H *= Y
    f = -np.mean(H, axis=1)
    w *= Y
    if Z.shape[2] == 1:
        g = -np.sum(w * Z[:, :, 0], axis=1)[:, None] / (m * h)
    else:
        g = -np.einsum("lm,lmp->lp", w, Z) / (m * h)
    return f, g


def _batch_stage(k: KernelSpec, Y, X, Z, beta, h, opts: SolveOptions):
    """Armijo descent at fixed bandwidth for every row of the batch.

    Returns (beta, grad_norms, converged_mask).  Rows are retired from the
    working set as they reach the gradient tolerance (or stall at machine
    precision, which counts as numerical stationarity), so stragglers only
    pay for themselves.
    """
    L = beta.shape[0]
    tol = opts.grad_tol
    out = beta.copy()
    gnorm_out = np.full(L, np.inf)
    conv_out = np.zeros(L, dtype=bool)
    idx = np.arange(L)
    Ya, Xa, Za, ba = Y, X, Z, beta.copy()
    prev_b = None
    prev_g = None
    f, g = _batch_value_grad(k, Ya, Xa, Za, ba, h)
    gnorm = np.max(np.abs(g), axis=1)
    stalled = np.zeros(idx.shape[0], dtype=bool)

    def retire(done_mask):
        nonlocal idx, Ya, Xa, Za, ba, f, g, gnorm, prev_b, prev_g, stalled
        rows = idx[done_mask]
        out[rows] = ba[done_mask]
        gnorm_out[rows] = gnorm[done_mask]
        conv_out[rows] = True
        keep = ~done_mask
        # Compress the working arrays once enough rows have finished.
        if not keep.any() or np.count_nonzero(done_mask) * 4 >= idx.shape[0]:
            idx = idx[keep]
            Ya, Xa, Za, ba = Ya[keep], Xa[keep], Za[keep], ba[keep]
            f, g, gnorm = f[keep], g[keep], gnorm[keep]
            stalled = stalled[keep]
            if prev_b is not None:
                prev_b, prev_g = prev_b[keep], prev_g[keep]
            return np.zeros(idx.shape[0], dtype=bool)
        return done_mask

    finished = (gnorm <= tol) | stalled
    for _ in range(opts.max_iters):
        if finished.any():
            finished = retire(finished)
        if idx.shape[0] == 0 or finished.all():
            break
        active = ~finished
        gsq = np.einsum("lp,lp->l", g, g)
        step = np.full(idx.shape[0], opts.step_init)
        if prev_b is not None:
            s = ba - prev_b
            r = g - prev_g
            sr = np.einsum("lp,lp->l", s, r)
            ss = np.einsum("lp,lp->l", s, s)
            good = sr > 1e-300
            bb = np.where(good, ss / np.where(good, sr, 1.0), opts.step_init)
            step = np.clip(bb, 1e-8 * opts.step_init, 1e6 * opts.step_init)
        step[~active] = 0.0
        prev_b = ba.copy()
        prev_g = g.copy()

        searching = active.copy()
        accepted = ba.copy()
        while searching.any():
            cand = ba - step[:, None] * g
            f_cand = _batch_objective(k, Ya, Xa, Za, cand, h)
            ok = searching & (f_cand <= f - opts.armijo_c * step * gsq)
            accepted[ok] = cand[ok]
            searching &= ~ok
            step[searching] *= opts.shrink
            if searching.any() and np.max(step[searching]) < 1e-16:
                # No descent at machine precision: numerically stationary.
                stalled |= searching
                break
        ba = accepted
        f, g = _batch_value_grad(k, Ya, Xa, Za, ba, h)
        gnorm = np.max(np.abs(g), axis=1)
        if opts.callback is not None:
            for row in range(idx.shape[0]):
                opts.callback(h, ba[row].copy(), float(f[row]))
        finished = (gnorm <= tol) | stalled

    if idx.shape[0]:
        out[idx] = ba
        gnorm_out[idx] = gnorm
        conv_out[idx] = finished
    return out, gnorm_out, conv_out


def _solve_batch(Y, X, Z, h: float, opts: SolveOptions,
                 kernel: KernelSpec = _BIWEIGHT,
                 init_rows: Optional[np.ndarray] = None) -> np.ndarray:
    """Continuation descent for a batch of equal-sized shards.

    Y, X are (L, m); Z is (L, m, p).  Returns stationary points (L, p) of the
    smoothed objective at bandwidth h.  ``init_rows`` supplies one warm start
    per row (rows then go straight to the target bandwidth, as with
    opts.init).  Raises SolverError if any row fails the gradient tolerance
    at the final bandwidth.
    """
    if not h > 0.0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    L, _, p = Z.shape
    warm = opts.init is not None or init_rows is not None
    if init_rows is not None:
        beta = np.asarray(init_rows, dtype=np.float64).reshape(L, p).copy()
    elif opts.init is not None:
        init = np.asarray(opts.init, dtype=np.float64).reshape(-1)
        if init.shape[0] != p:
            raise ValueError("init has wrong length")
        beta = np.broadcast_to(init, (L, p)).copy()
    else:
        beta = np.zeros((L, p))
    ladder = [h] if (warm and opts.continuation_ladder is None) else _ladder(h, opts)
    stage_opts = opts
    for i, hi in enumerate(ladder):
        last = i == len(ladder) - 1
        if not last:
            stage_opts = SolveOptions(
                max_iters=opts.max_iters,
                grad_tol=max(opts.grad_tol, opts.stage_tol),
                step_init=opts.step_init, shrink=opts.shrink,
                armijo_c=opts.armijo_c, callback=opts.callback,
            )
        else:
            stage_opts = opts
        beta, gnorm, converged = _batch_stage(kernel, Y, X, Z, beta, hi, stage_opts)
        if last and not converged.all():
            bad = int(np.flatnonzero(~converged)[0])
            raise SolverError(
                f"descent exhausted {opts.max_iters} iterations at bandwidth "
                f"{hi:g} (batch row {bad})",
                beta[bad].copy(), float(gnorm[bad]), row=bad,
            )
    return beta


def solve_local_smse(shard: Dataset, h: float, opts: SolveOptions | None = None,
                     kernel: KernelSpec = _BIWEIGHT) -> np.ndarray:
    """Stationary point of the smoothed objective at bandwidth h.

    Descends through the continuation ladder, each stage warm-starting the
    next; the final stage must reach sup-norm gradient <= opts.grad_tol or a
    SolverError carrying the best iterate is raised.
    """
    opts = opts or SolveOptions()
    Y = shard.y[None, :]
    X = shard.x[None, :]
    Z = shard.z[None, :, :]
    return _solve_batch(Y, X, Z, h, opts, kernel)[0]


def _grid_scores(shard: Dataset, grid: np.ndarray) -> np.ndarray:
    """Score objective at each grid value (p = 1).

    The indicator 1[x + z b >= 0] switches at b = -x/z, upward for z > 0 and
    downward for z < 0, so per-observation contributions reduce to prefix
    sums over the sorted switch points; each grid value costs two binary
    searches.  Counts are small integers, so the result is exact.
    """
    x = shard.x
    z = shard.z[:, 0]
    neg_y = -shard.y

    pos = z > 0.0
    neg = z < 0.0
    base = float(np.sum(neg_y[(z == 0.0) & (x >= 0.0)]))

    r_pos = -x[pos] / z[pos]
    w_pos = neg_y[pos]
    order = np.argsort(r_pos, kind="stable")
    r_pos = r_pos[order]
    cum_pos = np.concatenate([[0.0], np.cumsum(w_pos[order])])

    r_neg = -x[neg] / z[neg]
    w_neg = neg_y[neg]
    order = np.argsort(r_neg, kind="stable")
    r_neg = r_neg[order]
    cum_neg = np.concatenate([[0.0], np.cumsum(w_neg[order])])
    total_neg = cum_neg[-1]

    # z > 0 fires when b >= r (ties included); z < 0 fires when b <= r.
    fired_pos = cum_pos[np.searchsorted(r_pos, grid, side="right")]
    below_neg = cum_neg[np.searchsorted(r_neg, grid, side="left")]
    return (base + fired_pos + (total_neg - below_neg)) / shard.n


def solve_mse_grid_1d(shard: Dataset, lo: float, hi: float, steps: int) -> float:
    """Grid minimizer of the raw score objective for p = 1.

    Evaluates the objective on a uniform grid of ``steps`` points on
    [lo, hi]; ties break toward the smallest coefficient.
    """
    if shard.p != 1:
        raise ValueError(f"grid search requires p = 1, got p = {shard.p}")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if not lo < hi:
        raise ValueError("need lo < hi")
    grid = np.linspace(lo, hi, steps)
    scores = _grid_scores(shard, grid)
    return float(grid[int(np.argmin(scores))])


def default_grid_bounds(shard: Dataset) -> tuple[float, float]:
    """[-5 s, 5 s] with s = median|x| / median ||z||, guarded away from 0."""
    med_x = float(np.median(np.abs(shard.x)))
    med_z = float(np.median(np.linalg.norm(shard.z, axis=1)))
    scale = med_x / med_z if med_z > 0 and med_x > 0 else 1.0
    return -5.0 * scale, 5.0 * scale


def initial_estimator(shard: Dataset, h0: float, opts: SolveOptions | None = None,
                      kernel: KernelSpec = _BIWEIGHT,
                      grid_steps: int = 2001) -> np.ndarray:
    """Pilot estimate for the multi-round procedure, from one machine's data.

    p = 1: grid search on the raw score objective, then one smoothed polish
    at bandwidth h0.  p > 1: continuation descent from bandwidth 1 down to
    h0 starting at the zero vector.
    """
    opts = opts or SolveOptions()
    if shard.p == 1:
        lo, hi = default_grid_bounds(shard)
        b0 = solve_mse_grid_1d(shard, lo, hi, grid_steps)
        polish = SolveOptions(
            max_iters=opts.max_iters, grad_tol=opts.grad_tol,
            step_init=opts.step_init, shrink=opts.shrink,
            armijo_c=opts.armijo_c, stage_tol=opts.stage_tol,
            init=np.array([b0]), callback=opts.callback,
        )
        return solve_local_smse(shard, h0, polish, kernel)
    cold = SolveOptions(
        max_iters=opts.max_iters, grad_tol=opts.grad_tol,
        step_init=opts.step_init, shrink=opts.shrink,
        armijo_c=opts.armijo_c, stage_tol=opts.stage_tol,
        callback=opts.callback,
    )
    return solve_local_smse(shard, h0, cold, kernel)
