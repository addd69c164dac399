"""The tree-topology greedy game.

Each player pays, on every channel its own transfers use, the fraction of
that channel's optimal cost matching its fraction of the channel's rate.
A move rewires one of the player's channels {v, u} to {v, w} so that the
network stays a spanning tree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .costing import player_cost, player_costs
from .netcore import CostParams, DemandMatrix, Edge, Topology, edge, is_spanning_tree
from .routing import edge_rates, tree_routing

IMPROVEMENT_TOL = 1e-9


@dataclass(frozen=True)
class Move:
    player: int
    removed: Edge
    added: Edge

    def to_json(self) -> dict:
        return {"player": self.player, "removed": list(self.removed), "added": list(self.added)}


@dataclass(frozen=True)
class GameState:
    tree: Topology
    demand: DemandMatrix
    params: CostParams
    costs: tuple[float, ...]

    @classmethod
    def create(cls, tree: Topology, demand: DemandMatrix, params: CostParams | None = None) -> "GameState":
        params = params or CostParams()
        if not is_spanning_tree(tree):
            raise ValueError("the game is played on spanning trees")
        return cls(tree, demand, params, tuple(tree_player_costs(tree, demand, params)))

    def total_cost(self) -> float:
        return math.fsum(self.costs)

    def apply(self, move: Move) -> "GameState":
        return GameState.create(self.tree.without(move.removed).with_edge(move.added), self.demand, self.params)


def tree_player_costs(tree: Topology, demand: DemandMatrix, params: CostParams) -> list[float]:
    policy = tree_routing(tree, demand)
    return player_costs(edge_rates(policy, demand), policy, demand, params)


def legal_moves(state: GameState, player: int) -> list[Move]:
    tree = state.tree
    moves = []
    for e in tree.incident(player):
        u = e[0] if e[1] == player else e[1]
        parts = tree.without(e).components()
        mine = next(c for c in parts if player in c)
        mine_set = set(mine)
        for w in range(tree.n):
            if w in mine_set or w == u:
                continue
            moves.append(Move(player, e, edge(player, w)))
    return moves


def move_cost_delta(state: GameState, move: Move) -> float:
    """Change in the mover's cost, recomputed from scratch on the new tree."""
    if move.removed not in state.tree.edges or move.player not in move.removed or move.player not in move.added:
        raise ValueError(f"illegal move {move}")
    after = state.tree.without(move.removed)
    if move.added in after.edges:
        raise ValueError(f"illegal move {move}")
    after = after.with_edge(move.added)
    if not is_spanning_tree(after):
        raise ValueError(f"move {move} breaks the spanning tree")
    policy = tree_routing(after, state.demand)
    new = player_cost(move.player, edge_rates(policy, state.demand), policy, state.demand, state.params)
    return new - state.costs[move.player]


def best_response(state: GameState, player: int) -> tuple[Move, float] | None:
    """Most improving move of ``player``, lexicographic on ties; None if none improves."""
    best = None
    for mv in sorted(legal_moves(state, player), key=lambda m: (m.removed, m.added)):
        d = move_cost_delta(state, mv)
        if d < -IMPROVEMENT_TOL and (best is None or d < best[1]):
            best = (mv, d)
    return best


def is_equilibrium(state: GameState) -> tuple[bool, tuple[Move, float] | None]:
    for v in range(state.tree.n):
        for mv in legal_moves(state, v):
            d = move_cost_delta(state, mv)
            if d < -IMPROVEMENT_TOL:
                return False, (mv, d)
    return True, None


@dataclass
class DynamicsResult:
    final: GameState
    converged: bool
    cycled: bool
    rounds: int
    history: list[dict] = field(default_factory=list)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.history:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def tree_key(tree: Topology) -> tuple[Edge, ...]:
    return tuple(tree.sorted_edges())


def best_response_dynamics(initial: GameState, max_rounds: int | None = 100, order=None) -> DynamicsResult:
    """Round-robin best responses until a quiet round, a repeated tree, or ``max_rounds``."""
    order = list(range(initial.tree.n)) if order is None else list(order)
    state = initial
    seen = {tree_key(state.tree)}
    history: list[dict] = []
    rounds = 0
    while max_rounds is None or rounds < max_rounds:
        rounds += 1
        moved = False
        for v in order:
            br = best_response(state, v)
            if br is None:
                continue
            mv, d = br
            state = state.apply(mv)
            moved = True
            history.append({"round": rounds, **mv.to_json(), "delta": d, "total_cost": state.total_cost()})
            key = tree_key(state.tree)
            if key in seen:
                return DynamicsResult(state, False, True, rounds, history)
            seen.add(key)
        if not moved:
            return DynamicsResult(state, True, False, rounds, history)
    return DynamicsResult(state, False, False, rounds, history)


@dataclass(frozen=True)
class PoaInstance:
    demand: DemandMatrix
    equilibrium_tree: Topology
    optimal_tree: Topology
    ratio_lower_bound: float


def poa_instance(k: int) -> PoaInstance:
    """Chain v1..vk with demands {v1,vk}, {v1,v2}, {v(k-1),vk}, all of rate one.

    Vertices are 0-based, so v1 is 0 and vk is k - 1. The comparison tree
    is the ring minus {v(k-2), v(k-1)}, carrying three unit channels.
    """
    if k < 4:
        raise ValueError("the construction needs k >= 4")
    demand = DemandMatrix.from_pairs(k, {(0, k - 1): 1.0, (0, 1): 1.0, (k - 2, k - 1): 1.0})
    chain = Topology.path(k)
    ring = [(i, (i + 1) % k) for i in range(k)]
    comparison = Topology(k, [e for e in ring if edge(*e) != edge(k - 3, k - 2)])
    bound = ((k - 3) + 2.0 ** (4.0 / 3.0)) / 3.0
    return PoaInstance(demand, chain, comparison, bound)


def total_player_cost(tree: Topology, demand: DemandMatrix, params: CostParams | None = None) -> float:
    return math.fsum(tree_player_costs(tree, demand, params or CostParams()))
