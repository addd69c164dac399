"""Minimum cuts over the demand graph and Gusfield's cut-tree construction."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

from .netcore import DemandMatrix, Edge, Topology, edge
from .routing import tree_rates_by_cuts

FLOW_TOL = 1e-12


@dataclass(frozen=True)
class CutTree:
    tree: Topology
    cut_value: dict[Edge, float]

    def path_min(self, s: int, t: int) -> float:
        """Smallest edge value on the tree path between s and t."""
        adj = self.tree.adjacency()
        best = {s: float("inf")}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if w not in best:
                    best[w] = min(best[u], self.cut_value[edge(u, w)])
                    queue.append(w)
        return best[t]

    def to_json(self) -> dict:
        return {"edges": [[i, j, self.cut_value[(i, j)]] for i, j in self.tree.sorted_edges()]}


def min_cut(demand: DemandMatrix, s: int, t: int) -> tuple[float, frozenset[int]]:
    """Minimum s-t cut of the demand graph by shortest augmenting paths.

    Returns the cut value and the source side reachable from ``s`` in the
    final residual graph.
    """
    if s == t:
        raise ValueError("min_cut needs distinct terminals")
    n = demand.n
    cap = demand.rates.tolist()
    adj = [[j for j in range(n) if cap[i][j] > 0] for i in range(n)]
    # residual[u][v] = cap - f(u, v) with f antisymmetric
    residual = [row[:] for row in cap]
    value = 0.0
    while True:
        prev = [-1] * n
        prev[s] = s
        queue = deque([s])
        while queue and prev[t] < 0:
            u = queue.popleft()
            ru = residual[u]
            for v in adj[u]:
                if prev[v] < 0 and ru[v] > FLOW_TOL:
                    prev[v] = u
                    queue.append(v)
        if prev[t] < 0:
            break
        push = float("inf")
        v = t
        while v != s:
            u = prev[v]
            push = min(push, residual[u][v])
            v = u
        v = t
        while v != s:
            u = prev[v]
            residual[u][v] -= push
            residual[v][u] += push
            v = u
        value += push
    side = frozenset(v for v in range(n) if prev[v] >= 0)
    return value, side


def cut_capacity(demand: DemandMatrix, side) -> float:
    inside = set(side)
    outside = [v for v in range(demand.n) if v not in inside]
    return float(demand.rates[sorted(inside)][:, outside].sum())


def gomory_hu(demand: DemandMatrix) -> CutTree:
    """Gusfield's cut tree: n-1 min cuts on the uncontracted graph."""
    n = demand.n
    if n < 2:
        raise ValueError("gomory_hu needs at least two agents")
    parent = [0] * n
    weight = [0.0] * n
    for s in range(1, n):
        t = parent[s]
        value, side = min_cut(demand, s, t)
        weight[s] = value
        for i in range(n):
            if i != s and i in side and parent[i] == t:
                parent[i] = s
        if t != 0 and parent[t] in side:
            parent[s] = parent[t]
            parent[t] = s
            weight[s] = weight[t]
            weight[t] = value
    tree = Topology(n, [(s, parent[s]) for s in range(1, n)])
    values = {edge(s, parent[s]): weight[s] for s in range(1, n)}
    return CutTree(tree, values)


def tree_objective(tree: Topology, demand: DemandMatrix, g: Callable[[float], float] = None) -> float:
    """Sum of ``g`` over the demand crossing each fundamental cut of ``tree``."""
    if g is None:
        g = cube_root
    return sum(g(x) for x in tree_rates_by_cuts(tree, demand).values())


def cube_root(x: float) -> float:
    return x ** (1.0 / 3.0) if x > 0 else 0.0


def optimal_spanning_tree(demand: DemandMatrix) -> Topology:
    return gomory_hu(demand).tree
