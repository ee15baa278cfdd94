"""Dense-tableau bounded-variable primal simplex.

The LP is ``min c.x  s.t.  row_lo <= A x <= row_hi,  lb <= x <= ub`` with finite
``lb``/``ub``.  Each row gets a logical variable ``r = A x`` carrying the row
bounds, so slack handling and equality rows need no special cases.  Rows that
the starting point violates receive an artificial variable and a phase-one
objective.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..exceptions import SolverError

BASIC, AT_LO, AT_HI = 0, 1, 2

DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible", "unbounded" or "time_limit"
    x: Optional[np.ndarray]
    objective: float
    iterations: int


class _Tableau:
    def __init__(self, T, x, lo, hi, status, basis):
        self.T = T
        self.x = x
        self.lo = lo
        self.hi = hi
        self.status = status
        self.basis = basis
        self.iterations = 0

    def run(self, cost, deadline, bland_after, max_iter):
        T, x, lo, hi, status, basis = self.T, self.x, self.lo, self.hi, self.status, self.basis
        m = T.shape[0]
        d = cost - cost[basis] @ T
        movable = hi > lo
        degenerate = 0
        bland = False
        while True:
            if self.iterations >= max_iter:
                raise SolverError(
                    f"simplex exceeded {max_iter} iterations (rows={m}, cols={T.shape[1]}, bland={bland})"
                )
            if deadline is not None and self.iterations % 32 == 0 and time.monotonic() > deadline:
                return "time_limit"
            inc = (status == AT_LO) & movable & (d < -DUAL_TOL)
            dec = (status == AT_HI) & movable & (d > DUAL_TOL)
            elig = inc | dec
            if not elig.any():
                return "optimal"
            if bland:
                j = int(np.argmax(elig))
            else:
                j = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            dirn = 1.0 if inc[j] else -1.0
            alpha = dirn * T[:, j]
            xb = x[basis]
            flip = hi[j] - lo[j]
            ratios = np.full(m, np.inf)
            pos = alpha > PIVOT_TOL
            neg = alpha < -PIVOT_TOL
            with np.errstate(invalid="ignore"):
                ratios[pos] = (xb[pos] - lo[basis][pos]) / alpha[pos]
                ratios[neg] = (hi[basis][neg] - xb[neg]) / (-alpha[neg])
            np.maximum(ratios, 0.0, out=ratios)
            tmin = ratios.min() if m else np.inf
            r = -1
            if tmin < flip:
                cand = np.flatnonzero(ratios <= tmin + 1e-12)
                if bland:
                    r = int(cand[np.argmin(basis[cand])])
                else:
                    r = int(cand[np.argmax(np.abs(alpha[cand]))])
                t = ratios[r]
            else:
                t = flip
            if not np.isfinite(t):
                return "unbounded"
            if t > 0.0:
                x[basis] -= t * alpha
                x[j] += dirn * t
            if r < 0:
                if dirn > 0:
                    status[j], x[j] = AT_HI, hi[j]
                else:
                    status[j], x[j] = AT_LO, lo[j]
            else:
                leave = basis[r]
                if alpha[r] > 0:
                    status[leave], x[leave] = AT_LO, lo[leave]
                else:
                    status[leave], x[leave] = AT_HI, hi[leave]
                basis[r] = j
                status[j] = BASIC
                prow = T[r] / T[r, j]
                prow[j] = 1.0
                col = T[:, j].copy()
                col[r] = 0.0
                nz = np.flatnonzero(col)
                if nz.size:
                    T[nz] -= col[nz, None] * prow[None, :]
                T[r] = prow
                T[:, j] = 0.0
                T[r, j] = 1.0
                d -= d[j] * prow
                d[j] = 0.0
            self.iterations += 1
            if t <= 1e-12:
                degenerate += 1
                if degenerate >= bland_after:
                    bland = True
            else:
                degenerate = 0


def solve_lp(
    c,
    A,
    row_lo,
    row_hi,
    lb,
    ub,
    hint=None,
    deadline: Optional[float] = None,
    bland_after: int = 200,
    max_iter: Optional[int] = None,
) -> LPResult:
    """Solve a bounded LP from scratch.

    ``hint`` (a point, e.g. an incumbent) chooses which bound each structural
    variable starts at; a hint that satisfies most rows keeps phase one short.
    ``deadline`` is a ``time.monotonic()`` value checked every few pivots.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    n = c.shape[0]
    m = A.shape[0] if A.ndim == 2 else 0
    if m == 0:
        A = np.zeros((0, n))
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    row_lo = np.asarray(row_lo, dtype=float)
    row_hi = np.asarray(row_hi, dtype=float)
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError("structural variables need finite bounds")
    if np.any(lb > ub) or np.any(row_lo > row_hi):
        return LPResult("infeasible", None, np.inf, 0)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    if hint is None:
        at_hi = np.zeros(n, dtype=bool)
    else:
        hint = np.asarray(hint, dtype=float)
        at_hi = np.abs(hint - ub) < np.abs(hint - lb)
    xs = np.where(at_hi, ub, lb)
    act = A @ xs
    low_viol = act < row_lo - FEAS_TOL
    high_viol = act > row_hi + FEAS_TOL
    viol = low_viol | high_viol
    art_rows = np.flatnonzero(viol)
    n_art = art_rows.size
    N = n + m + n_art

    T = np.zeros((m, N))
    T[:, :n] = A
    T[np.arange(m), n + np.arange(m)] = -1.0
    sigma = np.where(low_viol[art_rows], 1.0, -1.0)
    T[art_rows, n + m + np.arange(n_art)] = sigma

    lo = np.concatenate([lb, row_lo, np.zeros(n_art)])
    hi = np.concatenate([ub, row_hi, np.full(n_art, np.inf)])
    x = np.zeros(N)
    x[:n] = xs
    status = np.empty(N, dtype=np.int8)
    status[:n] = np.where(at_hi, AT_HI, AT_LO)
    basis = np.empty(m, dtype=int)

    ok_rows = np.flatnonzero(~viol)
    basis[ok_rows] = n + ok_rows
    status[n + ok_rows] = BASIC
    x[n + ok_rows] = act[ok_rows]
    # basic column of a logical variable is -e_i, so negate its tableau row
    T[ok_rows] *= -1.0

    row_ids = n + art_rows
    x[row_ids] = np.where(low_viol[art_rows], row_lo[art_rows], row_hi[art_rows])
    status[row_ids] = np.where(low_viol[art_rows], AT_LO, AT_HI)
    art_ids = n + m + np.arange(n_art)
    basis[art_rows] = art_ids
    status[art_ids] = BASIC
    x[art_ids] = np.abs(x[row_ids] - act[art_rows])
    T[art_rows] *= sigma[:, None]

    tab = _Tableau(T, x, lo, hi, status, basis)
    if n_art:
        phase1 = np.zeros(N)
        phase1[art_ids] = 1.0
        state = tab.run(phase1, deadline, bland_after, max_iter)
        if state == "time_limit":
            return LPResult("time_limit", None, np.inf, tab.iterations)
        infeas = float(x[art_ids].sum())
        scale = 1.0 + float(np.max(np.abs(np.concatenate([row_lo[np.isfinite(row_lo)], row_hi[np.isfinite(row_hi)], [0.0]]))))
        if infeas > FEAS_TOL * scale:
            return LPResult("infeasible", None, np.inf, tab.iterations)
        hi[art_ids] = 0.0
        x[art_ids] = 0.0
    cost = np.zeros(N)
    cost[:n] = c
    state = tab.run(cost, deadline, bland_after, max_iter)
    if state != "optimal":
        return LPResult(state, None, np.inf if state != "unbounded" else -np.inf, tab.iterations)
    xs = np.clip(x[:n], lb, ub)
    return LPResult("optimal", xs, float(c @ xs), tab.iterations)
