"""Dense two-phase revised simplex for small linear programs.

Solves   min c'x  subject to  G x <= g,  x >= 0
by adding slacks, running phase 1 with artificial variables on rows that are
infeasible at the origin, then phase 2 with Bland's smallest-index pivoting
rule (which guarantees termination).  The basis inverse is kept explicitly
and refreshed periodically.  The final basis yields a dual vector used to
certify optimality: the strong-duality gap and complementary-slackness
residuals are returned with the solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InfeasibleError(RuntimeError):
    """The constraint polytope is empty (phase-1 optimum is positive)."""


class UnboundedError(RuntimeError):
    """The objective is unbounded below over the feasible region."""


class PivotLimitError(RuntimeError):
    """Pivot budget exhausted before reaching optimality."""


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray            # primal solution of the user problem
    fun: float               # c' x
    dual: np.ndarray         # row duals, <= 0 for the  Gx <= g  form
    slack: np.ndarray        # g - G x
    iterations: int
    duality_gap: float       # |c'x - g'dual| / (1 + |c'x|)
    comp_residual: float     # max complementary-slackness violation
    max_violation: float     # worst primal constraint violation


_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-7
_REFRESH = 64


def _pivot_loop(A, b, c, basis, binv, allowed, max_pivots):
    """Bland-rule simplex iterations on  min c'x, Ax = b, x >= 0.

    `basis` maps rows to basic column indices; `binv` is the basis inverse.
    Only columns marked in `allowed` may enter.  Mutates basis and binv;
    returns (basic values, row duals, pivot count).
    """
    iters = 0
    since_refresh = 0
    while True:
        if iters > max_pivots:
            raise PivotLimitError(f"no optimum within {max_pivots} pivots")
        xb = binv @ b
        y = c[basis] @ binv
        reduced = c - y @ A
        candidates = np.flatnonzero(allowed & (reduced < -_PIVOT_TOL))
        if candidates.size == 0:
            return xb, y, iters
        enter = int(candidates[0])  # Bland: smallest index enters
        d = binv @ A[:, enter]
        pos = d > _PIVOT_TOL
        if not np.any(pos):
            raise UnboundedError("improving direction is unbounded")
        ratios = np.where(pos, xb / np.where(pos, d, 1.0), np.inf)
        best = np.min(ratios)
        ties = np.flatnonzero(ratios <= best + 1e-12 * (1.0 + abs(best)))
        # Bland: among minimum ratios, the basic variable of smallest index leaves.
        leave_row = int(ties[np.argmin(np.asarray(basis)[ties])])
        basis[leave_row] = enter
        piv = d[leave_row]
        since_refresh += 1
        if since_refresh >= _REFRESH:
            binv[:] = np.linalg.inv(A[:, basis])
            since_refresh = 0
        else:
            row = binv[leave_row] / piv
            binv -= np.outer(d, row)
            binv[leave_row] = row
        iters += 1


def linear_program(c, G, g, max_pivots: int = 200000) -> SimplexResult:
    """Solve min c'x s.t. G x <= g, x >= 0 and certify the optimum."""
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    G = np.asarray(G, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    n_rows, nvar = G.shape
    if c.shape[0] != nvar or g.shape[0] != n_rows:
        raise ValueError("inconsistent LP dimensions")

    # Equality form: [G | I] [x; s] = g with rows of negative rhs flipped,
    # so b >= 0 and unflipped rows can start with their slack basic.
    sign = np.where(g < 0.0, -1.0, 1.0)
    A = np.hstack([G, np.eye(n_rows)]) * sign[:, None]
    b = g * sign
    ncols = nvar + n_rows
    row_ids = np.arange(n_rows)
    basis = [nvar + i for i in range(n_rows)]
    total_iters = 0

    art_rows = np.flatnonzero(sign < 0.0)
    if art_rows.size:
        n_art = art_rows.size
        A1 = np.hstack([A, np.zeros((n_rows, n_art))])
        for k, i in enumerate(art_rows):
            A1[i, ncols + k] = 1.0
            basis[i] = ncols + k
        c1 = np.zeros(ncols + n_art)
        c1[ncols:] = 1.0
        binv = np.linalg.inv(A1[:, basis])
        allowed = np.ones(ncols + n_art, dtype=bool)
        xb, _, it1 = _pivot_loop(A1, b, c1, basis, binv, allowed, max_pivots)
        total_iters += it1
        phase1 = float(c1[basis] @ xb)
        if phase1 > _FEAS_TOL * (1.0 + float(np.max(b, initial=0.0))):
            raise InfeasibleError(f"phase-1 optimum {phase1:.3e} is positive")
        # Drive leftover artificials out of the basis, or drop their rows.
        keep = np.ones(n_rows, dtype=bool)
        for i in range(n_rows):
            if basis[i] >= ncols:
                row = binv[i] @ A1[:, :ncols]
                pivots = np.flatnonzero(np.abs(row) > 1e-8)
                if pivots.size:
                    enter = int(pivots[0])
                    d = binv @ A1[:, enter]
                    basis[i] = enter
                    r = binv[i] / d[i]
                    binv -= np.outer(d, r)
                    binv[i] = r
                else:
                    keep[i] = False  # redundant row
        if not keep.all():
            rows = np.flatnonzero(keep)
            A = A[rows]
            b = b[rows]
            sign = sign[rows]
            row_ids = row_ids[rows]
            basis = [basis[i] for i in rows]
        binv = np.linalg.inv(A[:, basis])
    else:
        binv = np.eye(n_rows)

    c_full = np.concatenate([c, np.zeros(n_rows)])
    allowed = np.ones(ncols, dtype=bool)
    xb, y, it2 = _pivot_loop(A, b, c_full, basis, binv, allowed, max_pivots)
    total_iters += it2

    x_full = np.zeros(ncols)
    x_full[np.asarray(basis, dtype=int)] = xb
    x = x_full[:nvar]
    fun = float(c @ x)

    # Duals in the user's Gx <= g convention; dropped (redundant) rows get 0.
    mu = np.zeros(n_rows)
    mu[row_ids] = y * sign
    slack = g - G @ x
    reduced_user = c - mu @ G
    comp = max(float(np.max(np.abs(x * reduced_user), initial=0.0)),
               float(np.max(np.abs(mu * slack), initial=0.0)))
    gap = abs(fun - float(g @ mu)) / (1.0 + abs(fun))
    max_violation = max(float(np.max(-slack, initial=0.0)),
                        float(np.max(-x, initial=0.0)))
    return SimplexResult(
        x=x, fun=fun, dual=mu, slack=slack, iterations=total_iters,
        duality_gap=gap, comp_residual=comp, max_violation=max_violation,
    )
