"""Hub networks built from an arbitrary network, and trace replay on both.

A hub centered at v0 gives every other agent x one spoke {x, v0} holding
the summed liquidity of x's original channels. On the spoke, the share of
each original channel e of x is an imaginary sub-channel that tracks e's
balance; a sub-channel reaching a boundary is reset on its own (a partial
reset, one record). Every original reset then costs at most two partial
resets, one per endpoint spoke.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .costing import NetworkCost, optimal_total_liquidity
from .netcore import (
    ChannelState,
    CostParams,
    DemandMatrix,
    Edge,
    LiquidityAllocation,
    PaymentNetwork,
    Topology,
    edge,
)
from .routing import RoutingPolicy, edge_rates, hub_routing, pack_routes


@dataclass(frozen=True)
class TransactionTrace:
    """Unit transfers in time order."""

    src: np.ndarray
    dst: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        t = np.asarray(self.t, dtype=float)
        if not (src.shape == dst.shape == t.shape) or src.ndim != 1:
            raise ValueError("src, dst and t must be equal-length vectors")
        if np.any(src == dst):
            raise ValueError("a transfer must have distinct endpoints")
        if np.any(np.diff(t) < 0):
            raise ValueError("timestamps must be nondecreasing")
        for name, arr in (("src", src), ("dst", dst), ("t", t)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.src.shape[0]

    @classmethod
    def from_pairs(cls, pairs, t=None) -> "TransactionTrace":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if t is None:
            t = np.arange(len(pairs), dtype=float)
        return cls(pairs[:, 0], pairs[:, 1], t)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["src", "dst", "t"])
            for s, d, t in zip(self.src.tolist(), self.dst.tolist(), self.t.tolist()):
                w.writerow([s, d, repr(t)])

    @classmethod
    def read_csv(cls, path) -> "TransactionTrace":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([int(r["src"]) for r in rows], [int(r["dst"]) for r in rows], [float(r["t"]) for r in rows])


@dataclass
class HubNetwork:
    center: int
    spokes: dict[Edge, float]
    # spoke owner x -> [(original edge, state)], side_a is x's side
    imaginary: dict[int, list[tuple[Edge, ChannelState]]]
    source: PaymentNetwork
    policy: RoutingPolicy | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.source.topology.n

    @property
    def total_liquidity(self) -> float:
        return sum(self.spokes.values())

    def topology(self) -> Topology:
        return Topology.star(self.n, self.center)

    def allocation(self) -> LiquidityAllocation:
        return LiquidityAllocation(self.spokes)


def build_hub(network: PaymentNetwork, center: int, policy: RoutingPolicy | None = None) -> HubNetwork:
    """Hub at ``center`` whose spoke to x holds the liquidity of x's channels.

    ``policy`` is the original network's routing; it is needed only for
    :func:`replay_hub`.
    """
    n = network.topology.n
    if not 0 <= center < n:
        raise ValueError(f"center {center} is not a vertex")
    spokes: dict[Edge, float] = {}
    imaginary: dict[int, list[tuple[Edge, ChannelState]]] = {}
    for x in range(n):
        if x == center:
            continue
        own = network.topology.incident(x)
        spokes[edge(x, center)] = sum(network.alloc[e] for e in own)
        imaginary[x] = [(e, ChannelState(network.alloc[e] / 2, network.alloc[e] / 2)) for e in own]
    return HubNetwork(center, spokes, imaginary, network, policy)


def _pack_trace(trace: TransactionTrace, n: int):
    if len(trace) and (trace.src.min() < 0 or trace.dst.min() < 0 or max(trace.src.max(), trace.dst.max()) >= n):
        raise ValueError(f"trace references an agent outside 0..{n - 1}")
    lo = np.minimum(trace.src, trace.dst)
    hi = np.maximum(trace.src, trace.dst)
    keys = lo * n + hi
    uniq, pair_idx = np.unique(keys, return_inverse=True)
    pairs = [(int(k // n), int(k % n)) for k in uniq]
    dirs = np.where(trace.src < trace.dst, 1, -1).astype(np.int64)
    return pairs, pair_idx.astype(np.int64), dirs


def _routes(policy: RoutingPolicy, pairs, edge_index):
    for p in pairs:
        if p not in policy:
            raise ValueError(f"pair {p} has no route")
    return pack_routes(policy, pairs, edge_index)


def replay_per_edge(trace: TransactionTrace, network: PaymentNetwork, policy: RoutingPolicy) -> dict[Edge, int]:
    liq = network.integral_liquidity()
    edges = sorted(liq)
    index = {e: k for k, e in enumerate(edges)}
    pairs, pair_idx, dirs = _pack_trace(trace, network.topology.n)
    ptr, eidx, signs = _routes(policy, pairs, index)
    omega = np.array([liq[e] for e in edges], dtype=np.int64)
    resets = _kernels.replay_resets(pair_idx, dirs, ptr, eidx, signs, omega, omega // 2)
    return dict(zip(edges, resets.tolist()))


def replay(trace: TransactionTrace, network: PaymentNetwork, policy: RoutingPolicy) -> int:
    """Total resets when ``trace`` runs over ``network`` from equal splits."""
    return sum(replay_per_edge(trace, network, policy).values())


def replay_hub_per_spoke(trace: TransactionTrace, hub: HubNetwork) -> dict[Edge, int]:
    if hub.policy is None:
        raise ValueError("hub was built without the original routing policy")
    net = hub.source
    n = net.topology.n
    liq = net.integral_liquidity()
    edges = sorted(liq)
    index = {e: k for k, e in enumerate(edges)}
    pairs, pair_idx, dirs = _pack_trace(trace, n)
    ptr, eidx, signs = _routes(hub.policy, pairs, index)
    omega = np.array([liq[e] for e in edges], dtype=np.int64)
    lo = np.array([e[0] for e in edges], dtype=np.int64)
    hi = np.array([e[1] for e in edges], dtype=np.int64)
    pair_lo = np.array([p[0] for p in pairs], dtype=np.int64)
    pair_hi = np.array([p[1] for p in pairs], dtype=np.int64)
    resets, status = _kernels.replay_hub_resets(
        pair_idx, dirs, ptr, eidx, signs, omega, lo, hi, hub.center, pair_lo, pair_hi, n
    )
    if status == 1:
        raise RuntimeError("hub spoke balance left its feasible range")
    if status == 2:
        raise RuntimeError("imaginary sub-channels no longer sum to the spoke balance")
    return {edge(x, hub.center): int(resets[x]) for x in range(n) if x != hub.center}


def replay_hub(trace: TransactionTrace, hub: HubNetwork) -> int:
    """Total partial resets of the hub's imaginary sub-channels over ``trace``."""
    return sum(replay_hub_per_spoke(trace, hub).values())


def hub_rates(demand: DemandMatrix, center: int) -> dict[Edge, float]:
    return edge_rates(hub_routing(demand.n, center, demand), demand)


def best_hub(demand: DemandMatrix, params: CostParams) -> tuple[int, NetworkCost]:
    """Center whose hub has the lowest optimal maintenance cost (lowest index on ties)."""
    if demand.n < 2:
        raise ValueError("a hub needs at least two agents")
    best: tuple[int, NetworkCost] | None = None
    for c in range(demand.n):
        _, cost = optimal_total_liquidity(hub_rates(demand, c), params)
        if best is None or cost.total < best[1].total * (1 - 1e-12):
            best = (c, cost)
    return best
