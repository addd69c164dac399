"""Event-driven simulation of unit transfers over a payment network.

Each demanded pair {i, j} fires at rate 2 lam_ij with a fair coin for the
direction, which is the superposition of the two opposing rate-lam
streams. Every pair draws from its own generator keyed by (seed, i, j),
events are merged by time, and each transfer moves one coin across every
channel on its route. A channel whose side empties is reset to the equal
split and one record is counted.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .netcore import DemandMatrix, Edge, LiquidityAllocation, PaymentNetwork, Topology
from .routing import RoutingPolicy, direct_routing, pack_routes

# events drawn per generation window, on average
CHUNK_EVENTS = 1 << 18


@dataclass(frozen=True)
class SimConfig:
    network: PaymentNetwork
    policy: RoutingPolicy
    demand: DemandMatrix
    seed: int = 0
    horizon: float | None = None  # simulated seconds
    target_resets: int | None = None  # stop once this many resets happened in total
    initial_balance: dict[Edge, int] | None = None  # low-side balances; default equal split

    def __post_init__(self) -> None:
        if (self.horizon is None) == (self.target_resets is None):
            raise ValueError("give exactly one of horizon or target_resets")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.target_resets is not None and self.target_resets < 1:
            raise ValueError("target_resets must be at least 1")
        self.network.integral_liquidity()


@dataclass
class SimResult:
    edges: list[Edge]
    resets: dict[Edge, int]
    elapsed: float
    reset_times: dict[Edge, np.ndarray] = field(repr=False)

    @property
    def total_resets(self) -> int:
        return sum(self.resets.values())

    @property
    def total_rps(self) -> float:
        return self.total_resets / self.elapsed

    def rps(self, e: Edge) -> float:
        return self.resets[e] / self.elapsed

    def lifetimes(self, e: Edge) -> np.ndarray:
        return np.diff(self.reset_times[e], prepend=0.0)

    def mean_lifetime(self, e: Edge) -> float:
        t = self.reset_times[e]
        return float(t[-1] / len(t)) if len(t) else math.inf

    CSV_HEADER = ["edge", "u", "v", "resets", "elapsed", "rps", "mean_lifetime"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_HEADER)
            for k, e in enumerate(self.edges):
                w.writerow([k, e[0], e[1], self.resets[e], repr(self.elapsed), repr(self.rps(e)), repr(self.mean_lifetime(e))])

    def summary(self, batches: int = 20) -> dict:
        est = estimate_rps(self, batches)
        return {
            "elapsed": self.elapsed,
            "total_resets": self.total_resets,
            "total_rps": est.total.rps,
            "total_rps_half_width": est.total.half_width,
            "edges": [
                {"edge": list(e), "resets": self.resets[e], "rps": x.rps, "half_width": x.half_width, "measured": x.measured}
                for e, x in sorted(est.per_edge.items())
            ],
        }

    def write_summary(self, path, batches: int = 20) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(batches), fh, indent=2, sort_keys=True)
            fh.write("\n")


def round_to_even(alloc: LiquidityAllocation) -> LiquidityAllocation:
    """Nearest even integer per channel, never below 2."""
    return LiquidityAllocation({e: max(2, 2 * round(w / 2)) for e, w in alloc.omega.items()})


def _pair_stream(seed: int, i: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, j)))


def simulate(config: SimConfig) -> SimResult:
    net = config.network
    liq = net.integral_liquidity()
    edges = sorted(liq)
    index = {e: k for k, e in enumerate(edges)}
    pairs = [(i, j, lam) for i, j, lam in config.demand.pairs()]
    for i, j, _ in pairs:
        if (i, j) not in config.policy:
            raise ValueError(f"demanded pair {(i, j)} has no route")
    ptr, eidx, signs = pack_routes(config.policy, [(i, j) for i, j, _ in pairs], index)
    omega = np.array([liq[e] for e in edges], dtype=np.int64)
    bal = omega // 2
    if config.initial_balance:
        for e, b in config.initial_balance.items():
            k = index[e]
            if not 0 < b < omega[k]:
                raise ValueError(f"initial balance {b} on {e} must be strictly inside (0, {omega[k]})")
            bal[k] = b
    m = len(edges)
    resets = np.zeros(m, dtype=np.int64)
    rate = math.fsum(2.0 * lam for _, _, lam in pairs)
    if rate == 0:
        if config.horizon is None:
            raise ValueError("no demand: a reset target can never be reached")
        return SimResult(edges, {e: 0 for e in edges}, config.horizon, {e: np.zeros(0) for e in edges})

    streams = [_pair_stream(config.seed, i, j) for i, j, _ in pairs]
    lams = np.array([lam for _, _, lam in pairs])
    max_hops = int(np.diff(ptr).max())
    lam_e = np.zeros(m)
    np.add.at(lam_e, eidx, np.repeat(lams, np.diff(ptr)))
    expected_rps = float(np.sum(8.0 * lam_e / omega.astype(float) ** 2))
    log_e: list[np.ndarray] = []
    log_t: list[np.ndarray] = []
    t0 = 0.0
    elapsed = None
    target = config.target_resets or 0
    while elapsed is None:
        span = CHUNK_EVENTS / rate
        if config.horizon is not None:
            span = min(span, config.horizon - t0)
        else:
            # enough time for the remaining resets plus a margin, so short runs stay cheap
            need = (target - int(resets.sum())) / expected_rps
            span = min(span, 1.25 * need + 16.0 / rate)
        times, pidx, dirs = [], [], []
        for p, rng in enumerate(streams):
            k = rng.poisson(2.0 * lams[p] * span)
            times.append(t0 + np.sort(rng.random(k)) * span)
            dirs.append(rng.integers(0, 2, k) * 2 - 1)
            pidx.append(np.full(k, p, dtype=np.int64))
        times = np.concatenate(times)
        order = np.argsort(times, kind="stable")
        times = times[order]
        pidx = np.concatenate(pidx)[order]
        dirs = np.concatenate(dirs).astype(np.int64)[order]
        buf_e = np.empty(len(times) * max_hops, dtype=np.int64)
        buf_t = np.empty(len(times) * max_hops)
        _, n_log, stop = _kernels.simulate_events(
            times, pidx, dirs, ptr, eidx, signs, omega, bal, resets, buf_e, buf_t, 0, target
        )
        log_e.append(buf_e[:n_log])
        log_t.append(buf_t[:n_log])
        t0 += span
        if stop >= 0:
            elapsed = float(stop)
        elif config.horizon is not None and t0 >= config.horizon:
            elapsed = float(config.horizon)

    all_e = np.concatenate(log_e)
    all_t = np.concatenate(log_t)
    reset_times = {e: all_t[all_e == k] for k, e in enumerate(edges)}
    return SimResult(edges, dict(zip(edges, resets.tolist())), elapsed, reset_times)


@dataclass(frozen=True)
class RpsEstimate:
    rps: float | None  # None when unmeasured
    half_width: float
    resets: int

    @property
    def measured(self) -> bool:
        return self.rps is not None


@dataclass(frozen=True)
class RpsReport:
    per_edge: dict[Edge, RpsEstimate]
    total: RpsEstimate


def _batch_estimate(times: np.ndarray, elapsed: float, batches: int) -> RpsEstimate:
    k = len(times)
    if k == 0:
        return RpsEstimate(None, math.nan, 0)
    counts, _ = np.histogram(times, bins=batches, range=(0.0, elapsed))
    width = elapsed / batches
    per_batch = counts / width
    spread = per_batch.std(ddof=1) / math.sqrt(batches)
    half = float(stats.t.ppf(0.975, batches - 1) * spread)
    return RpsEstimate(k / elapsed, half, k)


def estimate_rps(result: SimResult, batches: int = 20) -> RpsReport:
    """Reset rate per channel and in total, with batch-means 95% half-widths."""
    if batches < 20:
        raise ValueError("use at least 20 batches")
    per_edge = {e: _batch_estimate(result.reset_times[e], result.elapsed, batches) for e in result.edges}
    all_times = np.concatenate([result.reset_times[e] for e in result.edges]) if result.edges else np.zeros(0)
    total = _batch_estimate(all_times, result.elapsed, batches)
    if total.rps is None:
        total = RpsEstimate(0.0, 0.0, 0)
    return RpsReport(per_edge, total)


def first_reset_times(config: SimConfig, trials: int) -> np.ndarray:
    """Time to the first reset over independent trials seeded from ``config.seed``."""
    seeds = np.random.SeedSequence(config.seed).generate_state(trials, dtype=np.uint64)
    out = np.empty(trials)
    for k in range(trials):
        cfg = SimConfig(
            config.network, config.policy, config.demand, seed=int(seeds[k]),
            target_resets=1, initial_balance=config.initial_balance,
        )
        out[k] = simulate(cfg).elapsed
    return out


def single_channel(omega: int, lam: float, seed: int = 0, target_resets: int = 100_000, initial: int | None = None) -> SimConfig:
    """One channel {0, 1} of liquidity ``omega`` carrying rate ``lam`` each way."""
    demand = DemandMatrix.from_pairs(2, {(0, 1): lam})
    net = PaymentNetwork(Topology(2, [(0, 1)]), LiquidityAllocation({(0, 1): omega}))
    init = None if initial is None else {(0, 1): initial}
    return SimConfig(net, direct_routing(demand), demand, seed=seed, target_resets=target_resets, initial_balance=init)
