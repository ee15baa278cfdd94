"""Branch-and-bound MILP solver over the simplex LP core.

Search: depth-first dive (towards the nearer integer of the branching
variable), then best-bound among open nodes.  Branching picks the most
fractional integer variable, ties to the lowest id.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..exceptions import SolverError
from ..ilp import (
    EPS_INT,
    Assignment,
    IlpInstance,
    check_feasibility,
    evaluate_objective,
    snap_integral,
)
from .base import ERROR, INFEASIBLE, OPTIMAL, TIME_LIMIT, SolveRequest, SolveResult, fallback_result
from .simplex import LPResult, solve_lp

logger = logging.getLogger(__name__)

_BOUND_TOL = 1e-9


@dataclass
class NodeLP:
    """LP over the free columns left after fixing and singleton-row tightening."""

    free: np.ndarray  # indices of free columns
    c: np.ndarray
    A: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray  # tightened bounds over all variables
    ub: np.ndarray
    constant: float


def reduce_node(instance: IlpInstance, lb: np.ndarray, ub: np.ndarray) -> Optional[NodeLP]:
    """Drop fixed columns and turn single-variable rows into bounds.

    Returns ``None`` when the node is detectably infeasible.
    """
    rows = instance.rows
    lb = lb.copy()
    ub = ub.copy()
    is_int = instance.integer_mask
    active = np.ones(len(rows.row_lo), dtype=bool)
    while True:
        if np.any(lb > ub + _BOUND_TOL):
            return None
        np.minimum(lb, ub, out=lb)
        free = ub > lb
        fixed_vals = np.where(free, 0.0, lb)
        contrib = rows.A @ fixed_vals
        lo_r = rows.row_lo - contrib
        hi_r = rows.row_hi - contrib
        sub = rows.A_csc[:, np.flatnonzero(free)].tocsr()
        nnz = np.diff(sub.indptr)
        empty = active & (nnz == 0)
        if np.any(lo_r[empty] > 1e-6) or np.any(hi_r[empty] < -1e-6):
            return None
        active &= nnz > 0
        single = np.flatnonzero(active & (nnz == 1))
        if single.size == 0:
            break
        free_idx = np.flatnonzero(free)
        cols = free_idx[sub.indices[sub.indptr[single]]]
        coef = sub.data[sub.indptr[single]]
        with np.errstate(divide="ignore", invalid="ignore"):
            a_lo = np.where(coef > 0, lo_r[single] / coef, hi_r[single] / coef)
            a_hi = np.where(coef > 0, hi_r[single] / coef, lo_r[single] / coef)
        a_lo = np.where(np.isnan(a_lo), -np.inf, a_lo)
        a_hi = np.where(np.isnan(a_hi), np.inf, a_hi)
        ints = is_int[cols]
        a_lo = np.where(ints, np.ceil(a_lo - EPS_INT), a_lo)
        a_hi = np.where(ints, np.floor(a_hi + EPS_INT), a_hi)
        new_lb = lb.copy()
        new_ub = ub.copy()
        np.maximum.at(new_lb, cols, a_lo)
        np.minimum.at(new_ub, cols, a_hi)
        active[single] = False
        lb, ub = new_lb, new_ub
    free_idx = np.flatnonzero(ub > lb)
    keep = np.flatnonzero(active)
    A_red = sub[keep].toarray() if keep.size else np.zeros((0, free_idx.size))
    c = instance.obj
    fixed_mask = ub <= lb
    constant = float(c[fixed_mask] @ lb[fixed_mask])
    return NodeLP(
        free=free_idx,
        c=c[free_idx],
        A=A_red,
        row_lo=lo_r[keep],
        row_hi=hi_r[keep],
        lb=lb,
        ub=ub,
        constant=constant,
    )


def _lp_point(node: NodeLP, lp: LPResult) -> np.ndarray:
    x = node.lb.copy()
    x[node.free] = lp.x
    return x


def solve_lp_relaxation(
    instance: IlpInstance, deadline: Optional[float] = None, bland_after: int = 200
) -> tuple[Optional[Assignment], float, str]:
    """LP relaxation of ``instance`` (integrality dropped).

    Returns ``(assignment or None, objective, status)`` with status one of
    ``optimal``, ``infeasible``, ``unbounded`` or ``time_limit``.
    """
    lb = instance.lb
    ub = instance.ub
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError("LP relaxation needs finite variable bounds")
    # singleton-row tightening must not round bounds for the relaxation
    relaxed = _without_integrality(instance)
    node = reduce_node(relaxed, lb, ub)
    if node is None:
        return None, math.inf, "infeasible"
    lp = solve_lp(node.c, node.A, node.row_lo, node.row_hi, node.lb[node.free], node.ub[node.free],
                  deadline=deadline, bland_after=bland_after)
    if lp.status != "optimal":
        return None, lp.objective, lp.status
    x = _lp_point(node, lp)
    return Assignment(x, evaluate_objective(instance, x)), lp.objective + node.constant, "optimal"


def _without_integrality(instance: IlpInstance) -> IlpInstance:
    if not instance.integer_mask.any():
        return instance
    from dataclasses import replace

    out = IlpInstance(
        name=instance.name,
        vars=tuple(replace(v, integer=False) for v in instance.vars),
        constraints=instance.constraints,
        kind=instance.kind,
        graph=instance.graph,
    )
    out.__dict__["rows"] = instance.rows
    return out


class BranchAndBound:
    """Built-in sub-solver.

    Parameters
    ----------
    bland_after : int
        Consecutive degenerate pivots before the LP switches to Bland's rule.
    int_tol : float
        Integrality tolerance used to accept LP solutions as integral.
    """

    name = "builtin"

    def __init__(self, bland_after: int = 200, int_tol: float = EPS_INT):
        self.bland_after = bland_after
        self.int_tol = int_tol

    def solve(self, request: SolveRequest) -> SolveResult:
        start = time.monotonic()
        deadline = start + request.time_limit if math.isfinite(request.time_limit) else None
        inst = request.instance
        c = inst.obj
        is_int = inst.integer_mask
        if request.warm_start is not None:
            inc_x = np.array(request.warm_start.values)
            inc_obj = request.warm_start.objective
        else:
            inc_x = None
            inc_obj = math.inf

        def prune_tol(obj):
            if not math.isfinite(obj):
                return 0.0
            return max(_BOUND_TOL, 1e-12 * abs(obj), request.gap * abs(obj))

        heap: list = []
        seq = 0
        current = (inst.lb.copy(), inst.ub.copy())
        nodes = 0
        limit_hit = False
        while True:
            if current is None:
                while heap:
                    bnd, _, lb, ub = heapq.heappop(heap)
                    if bnd < inc_obj - prune_tol(inc_obj):
                        current = (lb, ub)
                        break
                if current is None:
                    break
            if (deadline is not None and time.monotonic() >= deadline) or (
                request.node_limit is not None and nodes >= request.node_limit
            ):
                limit_hit = True
                break
            nodes += 1
            lb, ub = current
            current = None
            node = reduce_node(inst, lb, ub)
            if node is None:
                continue
            hint = inc_x[node.free] if inc_x is not None else None
            try:
                lp = solve_lp(node.c, node.A, node.row_lo, node.row_hi,
                              node.lb[node.free], node.ub[node.free],
                              hint=hint, deadline=deadline, bland_after=self.bland_after)
            except SolverError as exc:
                logger.warning("LP failure at node %d: %s", nodes, exc)
                return self._finish(request, inc_x, inc_obj, ERROR, start, nodes, str(exc))
            if lp.status == "time_limit":
                # the interrupted node does not count, so a replay with
                # node_limit=nodes reproduces this run exactly
                nodes -= 1
                limit_hit = True
                break
            if lp.status != "optimal":
                continue
            bound = lp.objective + node.constant
            if bound >= inc_obj - prune_tol(inc_obj):
                continue
            x = _lp_point(node, lp)
            dist = np.abs(x - np.round(x))
            dist[~is_int] = 0.0
            if dist.max(initial=0.0) <= self.int_tol:
                xs = snap_integral(inst, x, tol=self.int_tol)
                if check_feasibility(inst, xs).feasible:
                    obj = float(c @ xs)
                    if obj < inc_obj:
                        inc_x, inc_obj = xs, obj
                continue
            j = int(np.argmax(dist))
            frac = x[j] - math.floor(x[j])
            down_ub = node.ub.copy()
            down_ub[j] = math.floor(x[j])
            up_lb = node.lb.copy()
            up_lb[j] = math.ceil(x[j])
            down = (node.lb, down_ub)
            up = (up_lb, node.ub)
            dive, other = (up, down) if frac >= 0.5 else (down, up)
            heapq.heappush(heap, (bound, seq, other[0], other[1]))
            seq += 1
            current = dive
        if limit_hit:
            status = TIME_LIMIT if inc_x is not None else ERROR
            msg = "budget exhausted" if inc_x is not None else "budget exhausted without a feasible solution"
        elif inc_x is not None:
            status, msg = OPTIMAL, ""
        else:
            status, msg = INFEASIBLE, "no feasible solution"
        return self._finish(request, inc_x, inc_obj, status, start, nodes, msg)

    def _finish(self, request, inc_x, inc_obj, status, start, nodes, msg) -> SolveResult:
        wall = time.monotonic() - start
        if inc_x is None:
            return SolveResult(None, math.inf, status, wall, nodes, msg)
        ws = request.warm_start
        if ws is not None and np.array_equal(inc_x, ws.values):
            return fallback_result(request, status, wall, msg, nodes)
        xs = snap_integral(request.instance, inc_x)
        obj = evaluate_objective(request.instance, xs)
        return SolveResult(Assignment(xs, obj), obj, status, wall, nodes, msg)


def solve_milp(request: SolveRequest, solver=None) -> SolveResult:
    """Solve with ``solver`` (default: a fresh :class:`BranchAndBound`)."""
    return (solver or BranchAndBound()).solve(request)
