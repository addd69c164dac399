"""Routing policies and the per-channel Poisson rates they induce."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .netcore import DemandMatrix, Edge, Topology, edge, is_spanning_tree

EdgeRates = dict[Edge, float]


@dataclass(frozen=True)
class RoutingPolicy:
    """One simple path per unordered pair, stored from low agent to high.

    ``paths[(i, j)]`` with ``i < j`` is the vertex sequence from ``i`` to
    ``j``; the reverse direction is the reversed sequence.
    """

    topology: Topology
    paths: Mapping[tuple[int, int], tuple[int, ...]]

    def __post_init__(self) -> None:
        canon = {}
        channels = self.topology.edges
        for (i, j), path in self.paths.items():
            path = tuple(int(v) for v in path)
            if i > j:
                i, j, path = j, i, path[::-1]
            if i == j or path[0] != i or path[-1] != j:
                raise ValueError(f"path {path} does not join {i} and {j}")
            if len(set(path)) != len(path):
                raise ValueError(f"path {path} repeats a vertex")
            for a, b in zip(path, path[1:]):
                if edge(a, b) not in channels:
                    raise ValueError(f"path {path} uses {edge(a, b)}, which is not a channel")
            canon[(i, j)] = path
        object.__setattr__(self, "paths", canon)

    def route(self, src: int, dst: int) -> tuple[int, ...]:
        """Vertex path from ``src`` to ``dst``."""
        if src < dst:
            return self.paths[(src, dst)]
        return self.paths[(dst, src)][::-1]

    def route_edges(self, src: int, dst: int) -> list[Edge]:
        p = self.route(src, dst)
        return [edge(p[k], p[k + 1]) for k in range(len(p) - 1)]

    def __contains__(self, pair: tuple[int, int]) -> bool:
        i, j = pair
        return (min(i, j), max(i, j)) in self.paths

    def __len__(self) -> int:
        return len(self.paths)

    def items(self) -> Iterator[tuple[tuple[int, int], tuple[int, ...]]]:
        return iter(sorted(self.paths.items()))

    def to_json(self) -> dict:
        return {f"{i},{j}": list(p) for (i, j), p in self.items()}


def _tree_parents(tree: Topology, root: int = 0) -> tuple[list[int], list[int]]:
    adj = tree.adjacency()
    parent = [-1] * tree.n
    depth = [0] * tree.n
    seen = [False] * tree.n
    seen[root] = True
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                parent[w] = u
                depth[w] = depth[u] + 1
                queue.append(w)
    return parent, depth


def tree_path(parent: list[int], depth: list[int], i: int, j: int) -> tuple[int, ...]:
    left, right = [i], [j]
    a, b = i, j
    while depth[a] > depth[b]:
        a = parent[a]
        left.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        right.append(b)
    while a != b:
        a, b = parent[a], parent[b]
        left.append(a)
        right.append(b)
    right.pop()
    return tuple(left + right[::-1])


def tree_routing(tree: Topology, demand: DemandMatrix) -> RoutingPolicy:
    if not is_spanning_tree(tree):
        raise ValueError("tree_routing needs a spanning tree")
    if tree.n != demand.n:
        raise ValueError(f"tree has {tree.n} agents, demand has {demand.n}")
    parent, depth = _tree_parents(tree)
    paths = {(i, j): tree_path(parent, depth, i, j) for i, j, _ in demand.pairs()}
    return RoutingPolicy(tree, paths)


def hub_routing(n: int, center: int, demand: DemandMatrix | None = None) -> RoutingPolicy:
    """Every pair goes through ``center``; pairs containing it go direct.

    With ``demand`` given, only pairs of positive rate are stored.
    """
    if not 0 <= center < n:
        raise ValueError(f"center {center} not in 0..{n - 1}")
    if demand is None:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    else:
        pairs = [(i, j) for i, j, _ in demand.pairs()]
    paths = {}
    for i, j in pairs:
        paths[(i, j)] = (i, j) if center in (i, j) else (i, center, j)
    return RoutingPolicy(Topology.star(n, center), paths)


def direct_routing(demand: DemandMatrix) -> RoutingPolicy:
    """One-hop route per demanded pair over a channel of its own."""
    pairs = [(i, j) for i, j, _ in demand.pairs()]
    return RoutingPolicy(Topology(demand.n, pairs), {p: p for p in pairs})


def edge_rates(policy: RoutingPolicy, demand: DemandMatrix) -> EdgeRates:
    """Balanced Poisson rate per channel: the demand summed over routes using it."""
    rates: EdgeRates = {e: 0.0 for e in policy.topology.sorted_edges()}
    for i, j, lam in demand.pairs():
        if (i, j) not in policy:
            raise ValueError(f"no route for demanded pair {(i, j)}")
        for e in policy.route_edges(i, j):
            if e not in rates:
                raise ValueError(f"route for {(i, j)} uses missing edge {e}")
            rates[e] += lam
    return rates


def tree_rates_by_cuts(tree: Topology, demand: DemandMatrix) -> EdgeRates:
    """Rate of each tree edge as the demand crossing the cut it induces."""
    if not is_spanning_tree(tree):
        raise ValueError("tree_rates_by_cuts needs a spanning tree")
    r = demand.rates
    rates: EdgeRates = {}
    for e in tree.sorted_edges():
        side = tree.without(e).components()
        a = next(c for c in side if e[0] in c)
        mask = [False] * tree.n
        for v in a:
            mask[v] = True
        b = [v for v in range(tree.n) if not mask[v]]
        rates[e] = float(r[a][:, b].sum())
    return rates


def pack_routes(policy: RoutingPolicy, pairs, edge_index: Mapping[Edge, int]):
    """CSR arrays (ptr, edges, signs) of the low->high route of each pair."""
    ptr = [0]
    edges: list[int] = []
    signs: list[int] = []
    for i, j in pairs:
        p = policy.route(i, j)
        for a, b in zip(p[:-1], p[1:]):
            e = edge(a, b)
            if e not in edge_index:
                raise ValueError(f"route for {(i, j)} uses missing edge {e}")
            edges.append(edge_index[e])
            signs.append(1 if a < b else -1)
        ptr.append(len(edges))
    return (
        np.asarray(ptr, dtype=np.int64),
        np.asarray(edges, dtype=np.int64),
        np.asarray(signs, dtype=np.int64),
    )
