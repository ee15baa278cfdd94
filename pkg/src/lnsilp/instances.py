"""Random benchmark instances: graphs, MVC / MAXCUT encodings, auctions.

All generators are pure functions of their parameters and ``seed``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ilp import Assignment, GraphMeta, IlpInstance, LinConstraint, VarDef, evaluate_objective

# desk-scale defaults (smaller than the original benchmarks so the built-in
# solver's sub-solves stay around a second)
MVC_N = 300
MAXCUT_N = 120
AUCTION_ITEMS = 400
AUCTION_BIDS = 800
BA_ATTACH = 4


@dataclass(frozen=True)
class WeightedGraph:
    n: int
    edges: tuple  # ((u, v, w), ...) with u < v
    vertex_weights: tuple

    def __post_init__(self):
        seen = set()
        for u, v, w in self.edges:
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge {key} out of range")
        if len(self.vertex_weights) != self.n:
            raise ValueError("one vertex weight per vertex required")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def meta(self) -> GraphMeta:
        return GraphMeta(self.n, self.edges)


@dataclass(frozen=True)
class AuctionSpec:
    n_items: int
    bids: tuple  # ((frozenset(items), price), ...)
    distribution: str = "arbitrary"
    params: tuple = ()

    def __post_init__(self):
        for b, (bundle, price) in enumerate(self.bids):
            if not bundle:
                raise ValueError(f"bid {b} has an empty bundle")
            if price <= 0:
                raise ValueError(f"bid {b} has non-positive price")
            if min(bundle) < 0 or max(bundle) >= self.n_items:
                raise ValueError(f"bid {b} references an unknown item")


def _weights(rng, n, n_edges):
    vw = rng.random(n)
    ew = rng.random(n_edges)
    return vw, ew


def gen_er_graph(n: int, p: float, seed: int) -> WeightedGraph:
    """Erdos-Renyi G(n, p) with uniform [0, 1) vertex and edge weights."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    us, vs = iu[keep], ju[keep]
    vw, ew = _weights(rng, n, us.size)
    edges = tuple((int(u), int(v), float(w)) for u, v, w in zip(us, vs, ew))
    return WeightedGraph(n, edges, tuple(float(w) for w in vw))


def gen_ba_graph(n: int, attach_m: int, seed: int) -> WeightedGraph:
    """Barabasi-Albert preferential attachment without a seed clique.

    Vertices ``0..m-1`` start isolated; vertex ``m`` joins all of them and
    every later vertex attaches to ``m`` distinct vertices drawn proportionally
    to degree.  The graph has exactly ``m * (n - m)`` edges.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 1 <= attach_m < n:
        raise ValueError("attach_m must satisfy 1 <= attach_m < n")
    rng = np.random.default_rng(seed)
    edges = []
    repeated: list[int] = []
    targets = list(range(attach_m))
    for v in range(attach_m, n):
        for t in targets:
            edges.append((min(t, v), max(t, v)))
        repeated.extend(targets)
        repeated.extend([v] * attach_m)
        chosen: list[int] = []
        seen = set()
        while len(chosen) < attach_m and v + 1 < n:
            cand = repeated[int(rng.integers(len(repeated)))]
            if cand not in seen:
                seen.add(cand)
                chosen.append(cand)
        targets = chosen
    vw, ew = _weights(rng, n, len(edges))
    return WeightedGraph(
        n,
        tuple((u, v, float(w)) for (u, v), w in zip(edges, ew)),
        tuple(float(w) for w in vw),
    )


def encode_mvc(g: WeightedGraph, name: str = "mvc") -> IlpInstance:
    """min sum w_v y_v  s.t.  y_u + y_v >= 1 for every edge, y binary."""
    vars_ = tuple(VarDef(v, float(g.vertex_weights[v]), 0.0, 1.0, True, True) for v in range(g.n))
    cons = tuple(
        LinConstraint(f"cover_{u}_{v}", ((u, 1.0), (v, 1.0)), ">=", 1.0) for u, v, _ in g.edges
    )
    return IlpInstance(name=name, vars=vars_, constraints=cons, kind="mvc", graph=g.meta())


def encode_maxcut(g: WeightedGraph, name: str = "maxcut") -> IlpInstance:
    """Vertex sides y (decomposable) and edge-cut indicators e (auxiliary).

    ``e_uv <= y_u + y_v`` and ``e_uv <= 2 - y_u - y_v``; objective ``min -sum w e``.
    Edge variable for edge ``i`` has id ``n + i``.
    """
    n = g.n
    vars_ = [VarDef(v, 0.0, 0.0, 1.0, True, True) for v in range(n)]
    cons = []
    for i, (u, v, w) in enumerate(g.edges):
        e = n + i
        vars_.append(VarDef(e, -float(w), 0.0, 1.0, True, False))
        cons.append(LinConstraint(f"cut_lo_{u}_{v}", ((e, 1.0), (u, -1.0), (v, -1.0)), "<=", 0.0))
        cons.append(LinConstraint(f"cut_hi_{u}_{v}", ((e, 1.0), (u, 1.0), (v, 1.0)), "<=", 2.0))
    return IlpInstance(name=name, vars=tuple(vars_), constraints=tuple(cons), kind="maxcut", graph=g.meta())


def gen_auction(
    n_items: int,
    n_bids: int,
    distribution: str = "arbitrary",
    seed: int = 0,
    max_bundle: int = 5,
    noise: float = 0.2,
) -> AuctionSpec:
    """Combinatorial-auction bids in the spirit of the "regions" and "arbitrary" families.

    ``regions``: items sit uniformly in the unit square and a bundle is a
    nearest-unused-neighbour walk from a random start item.  ``arbitrary``:
    bundles are uniform random item subsets.  Bundle sizes are uniform on
    ``2..max_bundle`` (capped by the item count); prices are
    ``100 * size * U(1 - noise, 1 + noise)``.
    """
    if n_items < 1 or n_bids < 1:
        raise ValueError("items and bids must be at least 1")
    if distribution not in ("regions", "arbitrary"):
        raise ValueError(f"unknown distribution {distribution!r}")
    if max_bundle < 1 or not 0 <= noise < 1:
        raise ValueError("invalid bundle size or noise")
    rng = np.random.default_rng(seed)
    lo_size = min(2, n_items)
    hi_size = max(lo_size, min(max_bundle, n_items))
    bids = []
    if distribution == "regions":
        pts = rng.random((n_items, 2))
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        for _ in range(n_bids):
            size = int(rng.integers(lo_size, hi_size + 1))
            cur = int(rng.integers(n_items))
            bundle = [cur]
            used = np.zeros(n_items, dtype=bool)
            used[cur] = True
            while len(bundle) < size:
                d = np.where(used, np.inf, dist[cur])
                cur = int(np.argmin(d))
                used[cur] = True
                bundle.append(cur)
            price = 100.0 * size * rng.uniform(1 - noise, 1 + noise)
            bids.append((frozenset(bundle), float(price)))
    else:
        for _ in range(n_bids):
            size = int(rng.integers(lo_size, hi_size + 1))
            bundle = rng.choice(n_items, size=size, replace=False)
            price = 100.0 * size * rng.uniform(1 - noise, 1 + noise)
            bids.append((frozenset(int(i) for i in bundle), float(price)))
    return AuctionSpec(
        n_items=n_items,
        bids=tuple(bids),
        distribution=distribution,
        params=(("max_bundle", max_bundle), ("noise", noise), ("seed", seed)),
    )


def encode_auction(spec: AuctionSpec, name: str = "auction") -> IlpInstance:
    """Winner determination: ``min -sum p_b x_b`` with one unit of each item."""
    vars_ = tuple(VarDef(b, -price, 0.0, 1.0, True, True) for b, (_, price) in enumerate(spec.bids))
    by_item: dict[int, list[int]] = {}
    for b, (bundle, _) in enumerate(spec.bids):
        for i in sorted(bundle):
            by_item.setdefault(i, []).append(b)
    cons = tuple(
        LinConstraint(f"item_{i}", tuple((b, 1.0) for b in by_item[i]), "<=", 1.0)
        for i in sorted(by_item)
    )
    return IlpInstance(name=name, vars=vars_, constraints=cons, kind="auction")


def graph_from_instance(instance: IlpInstance) -> WeightedGraph:
    """Recover the weighted graph of an MVC or MAXCUT instance."""
    if instance.graph is None:
        raise ValueError(f"instance {instance.name!r} carries no graph metadata")
    n = instance.graph.n
    if instance.kind == "mvc":
        vw = tuple(float(v.obj) for v in instance.vars[:n])
    else:
        vw = (0.0,) * n
    return WeightedGraph(n, instance.graph.edges, vw)


def auction_from_instance(instance: IlpInstance) -> AuctionSpec:
    """Recover bids (bundles and prices) from a winner-determination instance."""
    if instance.kind != "auction":
        raise ValueError("not an auction instance")
    bundles: list[set] = [set() for _ in instance.vars]
    for c in instance.constraints:
        item = int(c.name.split("_", 1)[1])
        for b, _ in c.coeffs:
            bundles[b].add(item)
    n_items = 1 + max((max(b) for b in bundles if b), default=0)
    return AuctionSpec(
        n_items=n_items,
        bids=tuple((frozenset(b), -v.obj) for b, v in zip(bundles, instance.vars)),
    )


def initial_solution(instance: IlpInstance) -> Assignment:
    """Trivial feasible start: full cover, one-sided cut, or no accepted bids."""
    n = instance.n_vars
    if instance.kind == "mvc":
        x = np.ones(n)
    elif instance.kind in ("maxcut", "auction"):
        x = np.zeros(n)
    else:
        raise ValueError(
            "no trivial initial solution for generic instances; supply one or run a short solve"
        )
    return Assignment(x, evaluate_objective(instance, x))


def default_er_p(kind: str, n: int) -> float:
    return min(1.0, 4.0 / n) if kind == "mvc" else 0.1


def make_instance(
    kind: str,
    seed: int,
    graph: str = "er",
    n: Optional[int] = None,
    p: Optional[float] = None,
    attach_m: int = BA_ATTACH,
    items: int = AUCTION_ITEMS,
    bids: int = AUCTION_BIDS,
    distribution: str = "regions",
    name: Optional[str] = None,
) -> IlpInstance:
    """One-call generator used by the CLI and the benchmark harness."""
    if kind in ("mvc", "maxcut"):
        n = n or (MVC_N if kind == "mvc" else MAXCUT_N)
        if graph == "er":
            g = gen_er_graph(n, p if p is not None else default_er_p(kind, n), seed)
        elif graph == "ba":
            g = gen_ba_graph(n, min(attach_m, n - 1), seed)
        else:
            raise ValueError(f"unknown graph model {graph!r}")
        name = name or f"{kind}-{graph}{n}-s{seed}"
        return encode_mvc(g, name) if kind == "mvc" else encode_maxcut(g, name)
    if kind == "auction":
        spec = gen_auction(items, bids, distribution, seed)
        return encode_auction(spec, name or f"auction-{distribution}{items}x{bids}-s{seed}")
    raise ValueError(f"unknown kind {kind!r}")


def cut_value(g: WeightedGraph, sides: np.ndarray) -> float:
    return float(sum(w for u, v, w in g.edges if sides[u] != sides[v]))


def maxcut_assignment(instance: IlpInstance, sides) -> Assignment:
    """Complete vertex sides into a full MAXCUT assignment (edge indicators set)."""
    n = instance.graph.n
    sides = np.asarray(sides, dtype=float)
    x = np.zeros(instance.n_vars)
    x[:n] = sides
    for i, (u, v, _) in enumerate(instance.graph.edges):
        x[n + i] = float(sides[u] != sides[v])
    return Assignment(x, evaluate_objective(instance, x))

