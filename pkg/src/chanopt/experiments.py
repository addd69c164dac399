"""Experiment runners producing plot-ready CSV tables and a manifest."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .costing import optimal_total_liquidity, rps0
from .cuts import optimal_spanning_tree
from .game import GameState, best_response_dynamics, is_equilibrium, poa_instance, total_player_cost
from .genesis import GenesisConfig, demand_degrees, generate, top_share
from .hubs import TransactionTrace, best_hub, build_hub, hub_rates, replay_hub_per_spoke, replay_per_edge
from .montecarlo import simulate, single_channel
from .netcore import CostParams, DemandMatrix, LiquidityAllocation, PaymentNetwork, Topology, edge
from .routing import RoutingPolicy, direct_routing, edge_rates, tree_rates_by_cuts

log = logging.getLogger(__name__)

HUB_RPS_BOUND = 8.0


class FlaggedFailure(Exception):
    """An experiment finished but one of its property checks failed."""


@dataclass
class Table:
    header: list[str]
    rows: list[list[Any]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
        return buf.getvalue()


@dataclass
class Outcome:
    tables: dict[str, Table]
    checks: dict[str, bool]
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def derive_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1, dtype=np.uint32)[0])


def _fan_out(fn: Callable, jobs: list, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------- topologies


@dataclass(frozen=True)
class CompareParams:
    n: int = 100
    exponents: tuple[float, ...] = tuple(round(2.0 + 0.1 * k, 1) for k in range(11))
    rate_exponent: float = 2.5
    rate_min: float = 1.0
    trials: int = 50

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ValueError("compare-topologies needs n >= 3")
        if self.trials < 1 or not self.exponents:
            raise ValueError("need at least one trial and one exponent")


def topology_rps(demand: DemandMatrix) -> dict[str, Any]:
    """Optimal-allocation RPS at unit liquidity for GH tree, best hub, complete graph."""
    tree = optimal_spanning_tree(demand)
    tree_r = rps0(tree_rates_by_cuts(tree, demand))
    center, _ = best_hub(demand, CostParams())
    hub_r = rps0(hub_rates(demand, center))
    complete_r = rps0(edge_rates(direct_routing(demand), demand))
    return {"tree": tree_r, "hub": hub_r, "complete": complete_r, "center": center}


def _compare_trial(job) -> list[Any] | None:
    idx, trial, exponent, p, seed = job
    try:
        demand = generate(GenesisConfig(p.n, exponent, p.rate_exponent, p.rate_min, seed))
    except ValueError as exc:
        log.warning("trial %d at exponent %s skipped: %s", trial, exponent, exc)
        return None
    r = topology_rps(demand)
    deg = demand_degrees(demand)
    rates = demand.rates
    hub_share = float(rates[r["center"]].sum() / (rates.sum() / 2))
    return [
        exponent, trial, seed, r["tree"], r["hub"], r["complete"],
        r["hub"] / r["tree"], r["complete"] / r["tree"], r["center"],
        degree_centralization(demand), hub_share, top_share(demand), int(deg.sum() // 2),
    ]


def run_compare_topologies(p: CompareParams, seed: int, threads: int = 1) -> Outcome:
    jobs = [
        (k, t, ex, p, derive_seed(seed, k, t))
        for k, ex in enumerate(p.exponents)
        for t in range(p.trials)
    ]
    results = _fan_out(_compare_trial, jobs, threads)
    trials = Table([
        "degree_exponent", "trial", "seed", "tree_rps", "hub_rps", "complete_rps",
        "hub_tree_ratio", "complete_tree_ratio", "hub_center", "degree_centralization", "hub_rate_share", "top_share", "demand_edges",
    ])
    skipped = 0
    for row in results:
        if row is None:
            skipped += 1
        else:
            trials.rows.append(row)
    curve = Table(["degree_exponent", "trials", "mean_hub_tree_ratio", "mean_complete_tree_ratio",
                   "mean_degree_centralization", "mean_hub_rate_share", "max_hub_tree_ratio"])
    for ex in p.exponents:
        rows = [r for r in trials.rows if r[0] == ex]
        if not rows:
            continue
        hub = [r[6] for r in rows]
        comp = [r[7] for r in rows]
        cent = [r[9] for r in rows]
        share = [r[10] for r in rows]
        curve.rows.append([ex, len(rows), float(np.mean(hub)), float(np.mean(comp)),
                           float(np.mean(cent)), float(np.mean(share)), float(max(hub))])
    worst = max((r[6] for r in trials.rows), default=0.0)
    checks = {
        "hub_tree_ratio_le_8": worst <= HUB_RPS_BOUND * (1 + 1e-6),
        "complete_ratio_nonincreasing_in_centrality": nonincreasing_along(curve.rows, key=4, value=3),
    }
    notes = {
        "skipped_trials": skipped,
        "max_hub_tree_ratio": worst,
        "complete_ratio_nonincreasing_in_exponent": nonincreasing_along(curve.rows, key=0, value=3),
    }
    return Outcome({"trials": trials, "curve": curve}, checks, notes)


def degree_centralization(demand: DemandMatrix) -> float:
    """Freeman degree centralization of the demand graph: 1 for a star, 0 for a regular graph."""
    n = demand.n
    if n < 3:
        return 0.0
    deg = demand_degrees(demand)
    return float((deg.max() - deg).sum() / ((n - 1) * (n - 2)))


def nonincreasing_along(rows: list[list], key: int, value: int) -> bool:
    """Whether column ``value`` never rises when rows are ordered by column ``key``."""
    ys = [r[value] for r in sorted(rows, key=lambda r: r[key])]
    return all(b <= a for a, b in zip(ys, ys[1:]))


# ---------------------------------------------------------------- hub replay


@dataclass(frozen=True)
class HubReplayParams:
    instances: int = 1000
    max_n: int = 10
    trace_length: int = 10_000
    max_half_liquidity: int = 6

    def __post_init__(self) -> None:
        if self.instances < 1 or self.max_n < 2 or self.trace_length < 1 or self.max_half_liquidity < 1:
            raise ValueError("hub-bound-replay parameters must be positive (max_n >= 2)")


def random_network_instance(rng: np.random.Generator, n: int, max_half_liquidity: int = 6):
    """Random connected network, random simple-path routing, even liquidities."""
    order = rng.permutation(n)
    edges = {edge(int(order[k]), int(order[rng.integers(k)])) for k in range(1, n)}
    extra = rng.integers(0, n + 1)
    for _ in range(extra):
        a, b = rng.choice(n, 2, replace=False)
        edges.add(edge(int(a), int(b)))
    topo = Topology(n, sorted(edges))
    alloc = LiquidityAllocation({e: 2 * int(rng.integers(1, max_half_liquidity + 1)) for e in topo.sorted_edges()})
    paths = {}
    adj = topo.adjacency()
    for i in range(n):
        # random-weight shortest paths are simple and vary across pairs
        weight = {e: float(rng.random()) for e in topo.sorted_edges()}
        dist, prev = _dijkstra(adj, weight, i)
        for j in range(i + 1, n):
            path = [j]
            while path[-1] != i:
                path.append(prev[path[-1]])
            paths[(i, j)] = tuple(path[::-1])
    return PaymentNetwork(topo, alloc), RoutingPolicy(topo, paths)


def _dijkstra(adj, weight, src):
    import heapq

    dist = {src: 0.0}
    prev = {}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for w in adj[u]:
            nd = d + weight[edge(u, w)]
            if nd < dist.get(w, math.inf):
                dist[w] = nd
                prev[w] = u
                heapq.heappush(heap, (nd, w))
    return dist, prev


def random_trace(rng: np.random.Generator, n: int, length: int) -> TransactionTrace:
    src = rng.integers(0, n, length)
    dst = (src + rng.integers(1, n, length)) % n
    return TransactionTrace(src, dst, np.arange(length, dtype=float))


def hub_replay_instance(seed: int, p: HubReplayParams) -> list[list[Any]]:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, p.max_n + 1))
    net, policy = random_network_instance(rng, n, p.max_half_liquidity)
    trace = random_trace(rng, n, p.trace_length)
    base = replay_per_edge(trace, net, policy)
    g_resets = sum(base.values())
    rows = []
    for c in range(n):
        hub = build_hub(net, c, policy)
        h_resets = sum(replay_hub_per_spoke(trace, hub).values())
        rows.append([seed, n, len(net.topology.edges), c, g_resets, h_resets, net.alloc.total, hub.total_liquidity,
                     h_resets <= 2 * g_resets, hub.total_liquidity <= 2 * net.alloc.total])
    return rows


def _hub_job(job):
    seed, p = job
    return hub_replay_instance(seed, p)


def run_hub_bound_replay(p: HubReplayParams, seed: int, threads: int = 1) -> Outcome:
    jobs = [(derive_seed(seed, k), p) for k in range(p.instances)]
    table = Table(["instance_seed", "n", "channels", "center", "network_resets", "hub_resets",
                   "network_liquidity", "hub_liquidity", "reset_bound_ok", "liquidity_bound_ok"])
    for rows in _fan_out(_hub_job, jobs, threads):
        table.rows.extend(rows)
    reset_viol = sum(not r[8] for r in table.rows)
    liq_viol = sum(not r[9] for r in table.rows)
    return Outcome({"hub_replay": table}, {"reset_bound": reset_viol == 0, "liquidity_bound": liq_viol == 0},
                   {"reset_violations": reset_viol, "liquidity_violations": liq_viol})


# ---------------------------------------------------------------- tightness


@dataclass(frozen=True)
class TightnessParams:
    max_pairs: int = 50

    def __post_init__(self) -> None:
        if self.max_pairs < 1:
            raise ValueError("need at least one pair")


def matching_demand(pairs: int) -> DemandMatrix:
    return DemandMatrix.from_pairs(2 * pairs, {(2 * k, 2 * k + 1): 1.0 for k in range(pairs)})


def run_tightness_matching(pairs: int, params: CostParams | None = None) -> float:
    """Best-hub over matching-network optimal maintenance cost for disjoint unit pairs."""
    if pairs < 1:
        raise ValueError("need at least one pair")
    params = params or CostParams()
    demand = matching_demand(pairs)
    _, matching = optimal_total_liquidity(edge_rates(direct_routing(demand), demand), params)
    _, hub = best_hub(demand, params)
    return hub.total / matching.total


def run_tightness(p: TightnessParams, seed: int = 0, threads: int = 1) -> Outcome:
    table = Table(["pairs", "ratio", "closed_form"])
    for m in range(1, p.max_pairs + 1):
        table.rows.append([m, run_tightness_matching(m), 2.0 - 1.0 / m])
    ratios = [r[1] for r in table.rows]
    checks = {
        "matches_closed_form": all(abs(r[1] - r[2]) <= 1e-9 * r[2] for r in table.rows),
        "monotone": all(b >= a - 1e-12 for a, b in zip(ratios, ratios[1:])),
        "below_two": all(r < 2.0 for r in ratios),
    }
    if p.max_pairs >= 50:
        checks["at_least_1.9_at_50"] = ratios[49] >= 1.9
    return Outcome({"tightness": table}, checks)


# ---------------------------------------------------------------- price of anarchy


@dataclass(frozen=True)
class PoaParams:
    k_max: int = 100
    check_up_to: int | None = None  # verify equilibrium only up to this k; None checks all

    def __post_init__(self) -> None:
        if self.k_max < 4:
            raise ValueError("k_max must be at least 4")


def poa_row(k: int, check: bool) -> list[Any]:
    inst = poa_instance(k)
    eq = None
    if check:
        eq, _ = is_equilibrium(GameState.create(inst.equilibrium_tree, inst.demand))
    gh = optimal_spanning_tree(inst.demand)
    ratio = total_player_cost(inst.equilibrium_tree, inst.demand) / total_player_cost(gh, inst.demand)
    return [k, "unchecked" if eq is None else bool(eq), ratio, inst.ratio_lower_bound, ratio >= inst.ratio_lower_bound - 1e-6]


def run_poa_sweep(p: PoaParams, seed: int = 0, threads: int = 1) -> Outcome:
    table = Table(["k", "equilibrium", "cost_ratio", "lower_bound", "bound_ok"])
    for k in range(4, p.k_max + 1):
        table.rows.append(poa_row(k, p.check_up_to is None or k <= p.check_up_to))
    checks = {
        "equilibria": all(r[1] is True for r in table.rows if r[1] != "unchecked"),
        "ratio_above_bound": all(r[4] for r in table.rows),
    }
    return Outcome({"poa": table}, checks)


# ---------------------------------------------------------------- lifetime


@dataclass(frozen=True)
class LifetimeParams:
    omegas: tuple[int, ...] = (4, 8, 16)
    lambdas: tuple[float, ...] = (0.5, 1.0, 4.0)
    target_resets: int = 100_000
    tolerance: float = 0.02

    def __post_init__(self) -> None:
        if any(w < 2 or w % 2 for w in self.omegas):
            raise ValueError("liquidities must be even integers >= 2")
        if any(lam <= 0 for lam in self.lambdas):
            raise ValueError("rates must be positive")


def run_lifetime_validation(p: LifetimeParams, seed: int, threads: int = 1) -> Outcome:
    table = Table(["omega", "lambda", "resets", "simulated_mean_lifetime", "analytic", "relative_error", "simulated_rps", "analytic_rps"])
    for a, w in enumerate(p.omegas):
        for b, lam in enumerate(p.lambdas):
            res = simulate(single_channel(w, lam, seed=derive_seed(seed, a, b), target_resets=p.target_resets))
            sim = res.mean_lifetime((0, 1))
            exact = w * w / (8.0 * lam)
            table.rows.append([w, lam, res.total_resets, sim, exact, abs(sim - exact) / exact, res.total_rps, 1.0 / exact])
    return Outcome({"lifetime": table}, {"within_tolerance": all(r[5] <= p.tolerance for r in table.rows)})


# ---------------------------------------------------------------- game dynamics


@dataclass(frozen=True)
class DynamicsParams:
    n: int = 6
    instances: int = 20
    max_rounds: int = 50
    density: float = 0.5

    def __post_init__(self) -> None:
        if self.n < 2 or self.instances < 1 or self.max_rounds < 1 or not 0 < self.density <= 1:
            raise ValueError("invalid game-dynamics parameters")


def random_tree(rng: np.random.Generator, n: int) -> Topology:
    order = rng.permutation(n)
    return Topology(n, [(int(order[k]), int(order[rng.integers(k)])) for k in range(1, n)])


def random_demand(rng: np.random.Generator, n: int, density: float = 1.0) -> DemandMatrix:
    r = np.triu(rng.random((n, n)) * (rng.random((n, n)) < density), 1)
    return DemandMatrix.checked(r + r.T)


def run_game_dynamics(p: DynamicsParams, seed: int, threads: int = 1) -> Outcome:
    table = Table(["instance", "converged", "cycled", "rounds", "moves", "final_equilibrium", "final_total_cost", "gh_total_cost", "ratio_to_gh"])
    consistent = True
    for k in range(p.instances):
        rng = np.random.default_rng(derive_seed(seed, k))
        demand = random_demand(rng, p.n, p.density)
        start = GameState.create(random_tree(rng, p.n), demand)
        res = best_response_dynamics(start, p.max_rounds)
        eq, _ = is_equilibrium(res.final)
        if res.converged and not eq:
            consistent = False
        gh = total_player_cost(optimal_spanning_tree(demand), demand)
        final = res.final.total_cost()
        ratio = final / gh if gh > 0 else 1.0
        table.rows.append([k, res.converged, res.cycled, res.rounds, len(res.history), eq, final, gh, ratio])
    return Outcome({"dynamics": table}, {"converged_implies_equilibrium": consistent})


# ---------------------------------------------------------------- orchestration


KINDS: dict[str, tuple[type, Callable]] = {
    "compare-topologies": (CompareParams, run_compare_topologies),
    "hub-bound-replay": (HubReplayParams, run_hub_bound_replay),
    "tightness-matching": (TightnessParams, run_tightness),
    "poa-sweep": (PoaParams, run_poa_sweep),
    "lifetime-validation": (LifetimeParams, run_lifetime_validation),
    "game-dynamics": (DynamicsParams, run_game_dynamics),
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def build_params(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; choose from {sorted(KINDS)}")
        cls, _ = KINDS[self.kind]
        known = {f.name: f for f in fields(cls)}
        unknown = set(self.params) - set(known)
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        args = {k: tuple(v) if isinstance(v, list) else v for k, v in self.params.items()}
        return cls(**args)


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True, text=True, timeout=5, cwd=Path(__file__).parent,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run_experiment(spec: ExperimentSpec, out_dir, threads: int = 1) -> Outcome:
    params = spec.build_params()
    _, runner = KINDS[spec.kind]
    started = time.perf_counter()
    outcome = runner(params, spec.seed, threads)
    wall = time.perf_counter() - started
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, table in outcome.tables.items():
        path = out / f"{name}.csv"
        path.write_text(table.to_csv())
        files.append(path.name)
    manifest = {
        "kind": spec.kind,
        "params": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(params).items()},
        "seed": spec.seed,
        "version": version_string(),
        "wall_time_s": wall,
        "outputs": files,
        "checks": outcome.checks,
        "notes": outcome.notes,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return outcome


def load_spec(path) -> ExperimentSpec:
    obj = json.loads(Path(path).read_text())
    return ExperimentSpec(obj["kind"], obj.get("params", {}), int(obj.get("seed", 0)))
