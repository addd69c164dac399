"""Core value types: demand matrices, topologies, liquidity allocations, costs."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

Edge = tuple[int, int]


def edge(i: int, j: int) -> Edge:
    """Canonical (low, high) key for the undirected edge {i, j}."""
    if i == j:
        raise ValueError(f"self-loop at agent {i}")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple[int, int]

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}"


@dataclass(frozen=True, eq=False)
class DemandMatrix:
    """Symmetric Poisson rates of unit transfers between agent pairs.

    ``rates[i, j]`` is the rate at which ``i`` sends one coin to ``j``; the
    matrix is stored read-only. Construction does not validate; use
    :func:`validate_demand` or :meth:`checked`.
    """

    rates: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.rates, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"demand must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "rates", arr)

    @classmethod
    def checked(cls, rates) -> "DemandMatrix":
        d = cls(rates)
        v = validate_demand(d)
        if v is not None:
            raise ValueError(f"invalid demand matrix: {v}")
        return d

    @classmethod
    def from_pairs(cls, n: int, pairs: Mapping[tuple[int, int], float]) -> "DemandMatrix":
        arr = np.zeros((n, n))
        for (i, j), lam in pairs.items():
            arr[i, j] = arr[j, i] = lam
        return cls.checked(arr)

    @property
    def n(self) -> int:
        return self.rates.shape[0]

    def pairs(self) -> Iterator[tuple[int, int, float]]:
        """Yield ``(i, j, rate)`` for unordered pairs i < j with positive rate."""
        iu, ju = np.nonzero(np.triu(self.rates, 1) > 0)
        for i, j in zip(iu.tolist(), ju.tolist()):
            yield i, j, float(self.rates[i, j])

    def degree_rates(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    def total_rate(self) -> float:
        return float(np.triu(self.rates, 1).sum())

    def to_json(self) -> dict:
        return {"n": self.n, "rates": self.rates.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "DemandMatrix":
        d = cls.checked(obj["rates"])
        if d.n != obj["n"]:
            raise ValueError(f"n={obj['n']} but rates are {d.n}x{d.n}")
        return d

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DemandMatrix) and np.array_equal(self.rates, other.rates)

    __hash__ = None  # type: ignore[assignment]


def validate_demand(matrix: DemandMatrix) -> Violation | None:
    """Return the first violated invariant, or None when the matrix is valid."""
    r = matrix.rates
    checks = (
        ("non-finite entry", ~np.isfinite(r)),
        ("negative entry", r < 0),
        ("nonzero diagonal", np.diag(np.diag(r) != 0)),
        ("asymmetry", np.triu(r != r.T, 1)),
    )
    for kind, bad in checks:
        if bad.any():
            i, j = np.argwhere(bad)[0]
            return Violation(kind, (int(i), int(j)))
    return None


@dataclass(frozen=True)
class Topology:
    n: int
    edges: frozenset[Edge]

    def __init__(self, n: int, edges: Iterable[Sequence[int]] = ()):
        canon: set[Edge] = set()
        for e in edges:
            i, j = int(e[0]), int(e[1])
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge {e} out of range for n={n}")
            k = edge(i, j)
            if k in canon:
                raise ValueError(f"duplicate edge {k}")
            canon.add(k)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", frozenset(canon))

    @classmethod
    def path(cls, n: int) -> "Topology":
        return cls(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def star(cls, n: int, center: int) -> "Topology":
        return cls(n, [(center, x) for x in range(n) if x != center])

    @classmethod
    def complete(cls, n: int) -> "Topology":
        return cls(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def incident(self, v: int) -> list[Edge]:
        return sorted(e for e in self.edges if v in e)

    def components(self) -> list[list[int]]:
        adj = self.adjacency()
        seen = [False] * self.n
        comps = []
        for s in range(self.n):
            if seen[s]:
                continue
            seen[s] = True
            comp, queue = [s], deque([s])
            while queue:
                u = queue.popleft()
                for w in adj[u]:
                    if not seen[w]:
                        seen[w] = True
                        comp.append(w)
                        queue.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return self.n <= 1 or len(self.components()) == 1

    def without(self, e: Edge) -> "Topology":
        return Topology(self.n, self.edges - {e})

    def with_edge(self, e: Edge) -> "Topology":
        return Topology(self.n, self.edges | {edge(*e)})

    def to_json(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_json(cls, obj: dict) -> "Topology":
        return cls(obj["n"], obj["edges"])


def is_spanning_tree(topology: Topology) -> bool:
    return len(topology.edges) == topology.n - 1 and topology.is_connected()


@dataclass(frozen=True)
class LiquidityAllocation:
    """Coins locked per channel; ``total`` is W."""

    omega: Mapping[Edge, float]
    total: float = field(init=False)

    def __post_init__(self) -> None:
        om = {edge(*e): float(w) for e, w in self.omega.items()}
        for e, w in om.items():
            if not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"liquidity on {e} must be finite and >= 0, got {w}")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "total", math.fsum(om.values()))

    def check_against(self, topology: Topology) -> None:
        missing = [e for e in self.omega if e not in topology.edges]
        if missing:
            raise ValueError(f"allocation keys not in topology: {missing}")

    def scaled(self, c: float) -> "LiquidityAllocation":
        return LiquidityAllocation({e: c * w for e, w in self.omega.items()})

    def __getitem__(self, e: Edge) -> float:
        return self.omega.get(edge(*e), 0.0)


@dataclass(frozen=True)
class PaymentNetwork:
    topology: Topology
    alloc: LiquidityAllocation

    def __post_init__(self) -> None:
        self.alloc.check_against(self.topology)

    def integral_liquidity(self) -> dict[Edge, int]:
        """Per-channel liquidity as ints; each must be an even positive integer."""
        out = {}
        for e in self.topology.sorted_edges():
            w = self.alloc[e]
            if w != int(w) or int(w) < 2 or int(w) % 2:
                raise ValueError(f"channel {e} liquidity {w} is not an even positive integer")
            out[e] = int(w)
        return out


@dataclass(frozen=True)
class CostParams:
    alpha: float = 1.0  # interest per locked coin per second
    phi: float = 1.0  # fee per blockchain record

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.phi > 0):
            raise ValueError(f"alpha and phi must be positive, got {self.alpha}, {self.phi}")


@dataclass
class ChannelState:
    """Balances on both sides of one channel; their sum never changes."""

    side_a: float
    side_b: float

    def __post_init__(self) -> None:
        if self.side_a < 0 or self.side_b < 0:
            raise ValueError(f"negative balance in {self}")

    @property
    def liquidity(self) -> float:
        return self.side_a + self.side_b

    def transfer(self, a_to_b: bool) -> bool:
        """Move one coin; on exhausting a side restore the equal split.

        Returns True when the transfer triggered a reset.
        """
        if a_to_b:
            self.side_a -= 1
            self.side_b += 1
        else:
            self.side_a += 1
            self.side_b -= 1
        if self.side_a < 0 or self.side_b < 0:
            raise ValueError("transfer from an empty side")
        if self.side_a == 0 or self.side_b == 0:
            self.reset()
            return True
        return False

    def reset(self) -> None:
        w = self.side_a + self.side_b
        self.side_a = self.side_b = w // 2 if isinstance(w, int) else w / 2


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
