"""Problem-specific baselines: local-ratio cover, greedy cut, greedy and LP-rounded auctions."""

from __future__ import annotations

import logging
import warnings

import numpy as np

from .ilp import Assignment, IlpInstance
from .instances import AuctionSpec, WeightedGraph, auction_from_instance, graph_from_instance

logger = logging.getLogger(__name__)


def mvc_local_ratio(g: WeightedGraph) -> Assignment:
    """Weighted vertex cover within twice the optimum.

    Sweeps the edges once; an edge whose endpoints both keep residual weight
    pays the smaller residual from both.  Vertices left with zero residual
    form the cover.
    """
    residual = np.asarray(g.vertex_weights, dtype=float).copy()
    for u, v, _ in g.edges:
        if residual[u] > 0 and residual[v] > 0:
            m = min(residual[u], residual[v])
            residual[u] -= m
            residual[v] -= m
    x = (residual <= 0).astype(float)
    return Assignment(x, float(np.asarray(g.vertex_weights, dtype=float) @ x))


def _adjacency(g: WeightedGraph) -> np.ndarray:
    W = np.zeros((g.n, g.n))
    for u, v, w in g.edges:
        W[u, v] = W[v, u] = w
    return W


def maxcut_greedy_sides(g: WeightedGraph) -> np.ndarray:
    """Single-flip local search from the all-zero side vector.

    Each round flips the vertex with the largest positive gain (lowest id on
    ties) until no flip increases the cut.
    """
    W = _adjacency(g)
    s = -np.ones(g.n)  # side 0 -> -1, side 1 -> +1
    while g.n:
        gain = s * (W @ s)  # same-side weight minus cross weight
        v = int(np.argmax(gain))
        if not gain[v] > 0:
            break
        s[v] = -s[v]
    return (s > 0).astype(float)


def maxcut_greedy(g: WeightedGraph) -> Assignment:
    """Full MAXCUT assignment (vertex sides then edge indicators), objective = -cut."""
    sides = maxcut_greedy_sides(g)
    x = np.concatenate([sides, [float(sides[u] != sides[v]) for u, v, _ in g.edges]])
    weights = np.array([w for _, _, w in g.edges], dtype=float)
    obj = np.concatenate([np.zeros(g.n), -weights])
    return Assignment(x, float(obj @ x))


def _accept_in_order(spec: AuctionSpec, order) -> np.ndarray:
    taken: set = set()
    x = np.zeros(len(spec.bids))
    for b in order:
        bundle = spec.bids[b][0]
        if taken.isdisjoint(bundle):
            taken |= bundle
            x[b] = 1.0
    return x


def _auction_assignment(spec: AuctionSpec, x: np.ndarray) -> Assignment:
    prices = np.array([p for _, p in spec.bids], dtype=float)
    return Assignment(x, float(-prices @ x))


def cats_greedy(spec: AuctionSpec) -> Assignment:
    """Accept bids by decreasing price (lowest id on ties) while items remain free."""
    order = sorted(range(len(spec.bids)), key=lambda b: (-spec.bids[b][1], b))
    return _auction_assignment(spec, _accept_in_order(spec, order))


def cats_lp_rounding(instance: IlpInstance) -> Assignment:
    """Round the LP relaxation by visiting bids in decreasing fractional value.

    Ties go to the higher price, then the lower id.  If the LP cannot be
    solved the price-greedy allocation is returned instead.
    """
    from .solver.bnb import solve_lp_relaxation

    if instance.kind != "auction":
        raise ValueError("LP rounding expects an auction instance")
    spec = auction_from_instance(instance)
    try:
        lp, _, status = solve_lp_relaxation(instance)
    except Exception as exc:  # numerical failure inside the LP core
        lp, status = None, f"error: {exc}"
    if lp is None:
        msg = f"LP relaxation of {instance.name} failed ({status}); using price-greedy allocation"
        logger.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return cats_greedy(spec)
    frac = np.round(lp.values, 9)
    order = sorted(range(len(spec.bids)), key=lambda b: (-frac[b], -spec.bids[b][1], b))
    return _auction_assignment(spec, _accept_in_order(spec, order))


def run_heuristic(name: str, instance: IlpInstance) -> Assignment:
    """Dispatch by benchmark method name."""
    if name == "local-ratio":
        _require(instance, "mvc", name)
        return mvc_local_ratio(graph_from_instance(instance))
    if name == "greedy-maxcut":
        _require(instance, "maxcut", name)
        return maxcut_greedy(graph_from_instance(instance))
    if name == "greedy-cats":
        _require(instance, "auction", name)
        return cats_greedy(auction_from_instance(instance))
    if name == "lp-round-cats":
        _require(instance, "auction", name)
        return cats_lp_rounding(instance)
    raise ValueError(f"unknown heuristic {name!r}")


def _require(instance: IlpInstance, kind: str, method: str) -> None:
    if instance.kind != kind:
        raise ValueError(f"{method} needs a {kind} instance, got {instance.kind}")


HEURISTICS = ("local-ratio", "greedy-maxcut", "greedy-cats", "lp-round-cats")
