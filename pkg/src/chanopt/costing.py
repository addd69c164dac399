"""Closed-form maintenance cost of channels and networks.

A balanced channel with liquidity w and one-directional rate lam lives
w**2 / (8 lam) seconds on average, so it costs 8 lam / w**2 records per
second. Everything here follows from that and from min_W phi R/W**2 + alpha W.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

from .netcore import CostParams, DemandMatrix, Edge, LiquidityAllocation, edge
from .routing import EdgeRates, RoutingPolicy

# cheapest cost of a rate-1 channel at phi = alpha = 1
CHANNEL_COST = 3.0 * 2.0 ** (1.0 / 3.0)


@dataclass(frozen=True)
class NetworkCost:
    rps: float
    liquidity_cost: float
    record_cost: float
    total: float

    @classmethod
    def of(cls, rps: float, W: float, params: CostParams) -> "NetworkCost":
        liq = params.alpha * W
        rec = params.phi * rps
        return cls(rps, liq, rec, liq + rec)

    def to_json(self) -> dict:
        return asdict(self)

    CSV_HEADER = "rps,liquidity_cost,record_cost,total"

    def csv_row(self) -> str:
        return f"{self.rps!r},{self.liquidity_cost!r},{self.record_cost!r},{self.total!r}"


def channel_lifetime(omega: float, lam: float) -> float:
    """Expected seconds until a channel reset; ``math.inf`` when idle."""
    if omega <= 0:
        raise ValueError(f"liquidity must be positive, got {omega}")
    if lam < 0:
        raise ValueError(f"rate must be nonnegative, got {lam}")
    if lam == 0:
        return math.inf
    return omega * omega / (8.0 * lam)


def _active(rates: Mapping[Edge, float]) -> list[tuple[Edge, float]]:
    out = []
    for e, lam in sorted(rates.items()):
        if lam < 0:
            raise ValueError(f"negative rate {lam} on {e}")
        if lam > 0:
            out.append((e, lam))
    return out


def cube_root_sum(rates: Mapping[Edge, float]) -> float:
    return math.fsum(lam ** (1.0 / 3.0) for _, lam in _active(rates))


def rps0(rates: Mapping[Edge, float]) -> float:
    """Optimal records per second at unit total liquidity: 8 (sum lam^(1/3))^3."""
    return 8.0 * cube_root_sum(rates) ** 3


def optimal_allocation(rates: EdgeRates, W: float) -> LiquidityAllocation:
    """Split W across channels proportionally to the cube root of their rate."""
    if not W > 0:
        raise ValueError(f"total liquidity must be positive, got {W}")
    active = _active(rates)
    if not active:
        raise ValueError("all channel rates are zero; nothing to allocate")
    roots = {e: lam ** (1.0 / 3.0) for e, lam in active}
    norm = math.fsum(roots.values())
    omega = {edge(*e): 0.0 for e in rates}
    for e, r in roots.items():
        omega[e] = W * r / norm
    return LiquidityAllocation(omega)


def network_rps(rates: EdgeRates, alloc: LiquidityAllocation) -> float:
    total = []
    for e, lam in _active(rates):
        w = alloc[e]
        if w <= 0:
            raise ValueError(f"channel {e} has rate {lam} but no liquidity")
        total.append(8.0 * lam / (w * w))
    return math.fsum(total)


def maintenance_cost(rates: EdgeRates, W: float, params: CostParams) -> NetworkCost:
    """Cost per second at total liquidity W under the optimal split."""
    if not W > 0:
        raise ValueError(f"total liquidity must be positive, got {W}")
    r0 = rps0(rates)
    if r0 == 0:
        raise ValueError("all channel rates are zero; nothing to allocate")
    return NetworkCost.of(r0 / (W * W), W, params)


def optimal_total_liquidity(rates: EdgeRates, params: CostParams) -> tuple[float, NetworkCost]:
    r0 = rps0(rates)
    if r0 == 0:
        raise ValueError("all channel rates are zero; nothing to allocate")
    W = (2.0 * params.phi * r0 / params.alpha) ** (1.0 / 3.0)
    return W, NetworkCost.of(r0 / (W * W), W, params)


def channel_min_cost(lam: float, params: CostParams) -> float:
    if lam < 0:
        raise ValueError(f"rate must be nonnegative, got {lam}")
    if lam == 0:
        return 0.0
    return CHANNEL_COST * (lam * params.phi) ** (1.0 / 3.0) * params.alpha ** (2.0 / 3.0)


def player_rates(v: int, policy: RoutingPolicy, demand: DemandMatrix) -> dict[Edge, float]:
    """Rate each channel carries for transfers that ``v`` sends or receives."""
    out: dict[Edge, float] = {}
    r = demand.rates
    for j in range(demand.n):
        lam = float(r[v, j])
        if j == v or lam <= 0:
            continue
        for e in policy.route_edges(v, j):
            out[e] = out.get(e, 0.0) + lam
    return out


def player_cost(
    v: int,
    rates: EdgeRates,
    policy: RoutingPolicy,
    demand: DemandMatrix,
    params: CostParams,
) -> float:
    """Player v's share of channel costs, in proportion to its own traffic."""
    scale = CHANNEL_COST * params.phi ** (1.0 / 3.0) * params.alpha ** (2.0 / 3.0)
    terms = []
    for e, mine in sorted(player_rates(v, policy, demand).items()):
        lam = rates[e]
        if lam > 0:
            terms.append(mine / lam * lam ** (1.0 / 3.0))
    return scale * math.fsum(terms)


def player_costs(rates: EdgeRates, policy: RoutingPolicy, demand: DemandMatrix, params: CostParams) -> list[float]:
    return [player_cost(v, rates, policy, demand, params) for v in range(demand.n)]
