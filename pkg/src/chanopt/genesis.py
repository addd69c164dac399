"""Scale-free demand matrices: configuration-model graph, Pareto rates."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .netcore import DemandMatrix

MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class GenesisConfig:
    n: int
    degree_exponent: float = 2.5  # P(k) ~ k^-gamma, k >= 1
    rate_exponent: float = 2.5  # density ~ x^-a above rate_min
    rate_min: float = 1.0
    seed: int = 0
    degree_min: int = 2

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("need at least two agents")
        if not (self.degree_exponent > 1 and self.rate_exponent > 1):
            raise ValueError("power-law exponents must exceed 1")
        if not self.rate_min > 0:
            raise ValueError("rate_min must be positive")
        if self.degree_min < 1:
            raise ValueError("degree_min must be at least 1")

    def to_json(self) -> dict:
        return asdict(self)


def sample_zeta(exponent: float, kmin: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draws from P(k) ~ k^-exponent on k >= kmin, by rejection from numpy's zipf."""
    out = np.empty(0, dtype=np.int64)
    while out.size < size:
        k = rng.zipf(exponent, 2 * (size - out.size) + 16)
        out = np.concatenate([out, k[k >= kmin]])
    return out[:size]


def sample_degrees(n: int, exponent: float, rng: np.random.Generator, kmin: int = 2) -> np.ndarray:
    """Power-law degrees clamped to n - 1, resampled until the sum is even."""
    for _ in range(MAX_ATTEMPTS):
        deg = np.minimum(sample_zeta(exponent, kmin, n, rng), n - 1)
        if deg.sum() % 2 == 0:
            return deg
    raise ValueError(f"no even-sum degree sequence after {MAX_ATTEMPTS} draws")


def configuration_edges(deg: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random stub matching, with self-loops and repeated edges dropped."""
    stubs = np.repeat(np.arange(len(deg)), deg)
    rng.shuffle(stubs)
    a, b = stubs[0::2], stubs[1::2]
    keep = a != b
    lo = np.minimum(a, b)[keep]
    hi = np.maximum(a, b)[keep]
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return pairs.reshape(-1, 2)


def connect_components(n: int, pairs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Join every component to the largest one with a single random edge."""
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    count, labels = connected_components(adj, directed=False)
    if count == 1:
        return pairs
    giant = int(np.argmax(np.bincount(labels)))
    giant_nodes = np.flatnonzero(labels == giant)
    extra = []
    for c in range(count):
        if c == giant:
            continue
        u = int(rng.choice(np.flatnonzero(labels == c)))
        v = int(rng.choice(giant_nodes))
        extra.append((min(u, v), max(u, v)))
    return np.concatenate([pairs, np.array(extra, dtype=pairs.dtype).reshape(-1, 2)])


def pareto_rates(k: int, exponent: float, rate_min: float, rng: np.random.Generator) -> np.ndarray:
    return rate_min * (1.0 + rng.pareto(exponent - 1.0, k))


def generate(config: GenesisConfig) -> DemandMatrix:
    rng = np.random.default_rng(config.seed)
    n = config.n
    deg = sample_degrees(n, config.degree_exponent, rng, config.degree_min)
    pairs = configuration_edges(deg, rng)
    pairs = connect_components(n, pairs, rng)
    lam = pareto_rates(len(pairs), config.rate_exponent, config.rate_min, rng)
    rates = np.zeros((n, n))
    rates[pairs[:, 0], pairs[:, 1]] = lam
    rates[pairs[:, 1], pairs[:, 0]] = lam
    return DemandMatrix.checked(rates)


def demand_degrees(demand: DemandMatrix) -> np.ndarray:
    return (demand.rates > 0).sum(axis=1)


def top_share(demand: DemandMatrix) -> float:
    """Fraction of demand edges touching the busiest agent; a centralisation index."""
    deg = demand_degrees(demand)
    m = deg.sum() / 2
    return float(deg.max() / m) if m else 0.0
