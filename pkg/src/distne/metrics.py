"""Partition quality, theoretical bounds and validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .graph import Graph

__all__ = [
    "BoundViolation",
    "InvalidAssignment",
    "PartitionAssignment",
    "QualityReport",
    "TightnessFixture",
    "balance",
    "build_tightness_fixture",
    "check_upper_bound",
    "edge_balance",
    "powerlaw_expected_ub",
    "quality_report",
    "replication_factor",
    "theoretical_upper_bound",
    "validate_assignment",
    "vertex_balance",
    "zeta",
]


class InvalidAssignment(ValueError):
    pass


class BoundViolation(AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class PartitionAssignment:
    """Edge records ``edges[i]`` assigned to partition ``parts[i]``."""

    edges: np.ndarray
    parts: np.ndarray
    num_parts: int

    def __post_init__(self):
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "parts", np.asarray(self.parts, dtype=np.int64).ravel())
        if len(self.edges) != len(self.parts):
            raise ValueError("edges and parts differ in length")

    def edge_counts(self) -> np.ndarray:
        return np.bincount(self.parts, minlength=self.num_parts)[: self.num_parts]

    def vertex_covers(self) -> list[np.ndarray]:
        """V(E_p) for every partition."""
        return [np.unique(self.edges[self.parts == p]) for p in range(self.num_parts)]

    def vertex_counts(self) -> np.ndarray:
        if len(self.parts) == 0:
            return np.zeros(self.num_parts, dtype=np.int64)
        n = int(self.edges.max()) + 1
        keys = np.concatenate([self.parts * n + self.edges[:, 0], self.parts * n + self.edges[:, 1]])
        uniq = np.unique(keys)
        return np.bincount(uniq // n, minlength=self.num_parts)[: self.num_parts]

    def write(self, out) -> None:
        for (u, v), p in zip(self.edges.tolist(), self.parts.tolist()):
            out.write(f"{u} {v} {p}\n")

    @classmethod
    def read(cls, source, num_parts: int | None = None) -> "PartitionAssignment":
        rows = []
        for lineno, line in enumerate(source, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InvalidAssignment(f"line {lineno}: expected 'src dst partition'")
            try:
                rows.append(tuple(int(x) for x in parts))
            except ValueError:
                raise InvalidAssignment(f"line {lineno}: non-integer field") from None
        arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
        if num_parts is None:
            num_parts = int(arr[:, 2].max()) + 1 if len(arr) else 1
        return cls(arr[:, :2], arr[:, 2], num_parts)


def validate_assignment(assignment: PartitionAssignment, graph: Graph) -> list[str]:
    """All totality/disjointness/range violations; empty when valid."""
    problems: list[str] = []
    P = assignment.num_parts
    bad = (assignment.parts < 0) | (assignment.parts >= P)
    for i in np.flatnonzero(bad).tolist():
        u, v = assignment.edges[i].tolist()
        problems.append(f"edge ({u},{v}) has partition {int(assignment.parts[i])} outside [0,{P})")
    n = graph.vertex_count
    e = assignment.edges
    lo, hi = np.minimum(e[:, 0], e[:, 1]), np.maximum(e[:, 0], e[:, 1])
    out_of_range = (lo < 0) | (hi >= n)
    for i in np.flatnonzero(out_of_range).tolist():
        problems.append(f"edge ({int(e[i, 0])},{int(e[i, 1])}) has an endpoint outside [0,{n})")
    keys = lo * n + hi
    gkeys = graph.edges[:, 0] * n + graph.edges[:, 1]
    uniq, counts = np.unique(keys, return_counts=True)
    for k in uniq[counts > 1].tolist():
        problems.append(f"edge ({k // n},{k % n}) assigned {int(counts[uniq == k][0])} times")
    for k in np.setdiff1d(gkeys, uniq).tolist():
        problems.append(f"edge ({k // n},{k % n}) missing")
    for k in np.setdiff1d(uniq, gkeys).tolist():
        problems.append(f"edge ({k // n},{k % n}) not in graph")
    return problems


def _require_valid(assignment: PartitionAssignment, graph: Graph) -> None:
    problems = validate_assignment(assignment, graph)
    if problems:
        raise InvalidAssignment(f"{len(problems)} violation(s): " + "; ".join(problems[:5]))


def replication_factor(assignment: PartitionAssignment, graph: Graph, validate: bool = True) -> float:
    """Sum of |V(E_p)| over partitions, divided by |V| (isolated vertices included)."""
    if validate:
        _require_valid(assignment, graph)
    return float(assignment.vertex_counts().sum()) / graph.vertex_count


def balance(values: Sequence[float]) -> float:
    """max / mean."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("balance of an empty sequence")
    if (arr < 0).any():
        raise ValueError("balance needs non-negative values")
    mean = arr.mean()
    if mean <= 0:
        raise ValueError("balance undefined when every value is zero")
    return float(arr.max() / mean)


def edge_balance(assignment: PartitionAssignment) -> float:
    return balance(assignment.edge_counts())


def vertex_balance(assignment: PartitionAssignment) -> float:
    return balance(assignment.vertex_counts())


def theoretical_upper_bound(num_vertices: int, num_edges: int, num_parts: int) -> float:
    if num_vertices <= 0:
        raise ValueError("|V| must be positive")
    if num_edges < 0 or num_parts <= 0:
        raise ValueError("|E| must be >= 0 and |P| positive")
    return (num_edges + num_vertices + num_parts) / num_vertices


def check_upper_bound(assignment: PartitionAssignment, graph: Graph) -> float:
    """Raise :class:`BoundViolation` unless RF <= (|E|+|V|+|P|)/|V|; returns RF.

    Compared exactly as ``sum |V(E_p)| <= |E| + |V| + |P|`` in integers.
    """
    replicas = int(assignment.vertex_counts().sum())
    limit = graph.num_edges + graph.vertex_count + assignment.num_parts
    if replicas > limit:
        raise BoundViolation(
            f"replication factor {replicas / graph.vertex_count:.6f} exceeds "
            f"upper bound {limit / graph.vertex_count:.6f}"
        )
    return replicas / graph.vertex_count


# -- Riemann zeta and the power-law expectation ----------------------------------

# Bernoulli numbers B2, B4, B6, B8 for the Euler-Maclaurin tail
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30)


def zeta(s: float, rtol: float = 1e-9) -> float:
    """Riemann zeta for real s > 1 by direct summation plus a tail estimate.

    The tail past N is the integral N^(1-s)/(s-1) with Euler-Maclaurin
    corrections; N doubles until the first omitted correction is below
    ``rtol`` relative to the result.
    """
    if s <= 1:
        raise ValueError(f"zeta diverges for s={s} <= 1")
    n = 16
    while True:
        head = float(np.sum(np.arange(1, n, dtype=float) ** -s))
        tail = n ** (1 - s) / (s - 1) + 0.5 * n ** -s
        # derivative factor s(s+1)...(s+2j-2) / (2j)! * B_2j * N^(-s-2j+1)
        rising = s
        for j, b in enumerate(_BERNOULLI[:-1], start=1):
            tail += b / math.factorial(2 * j) * rising * n ** (-s - 2 * j + 1)
            rising *= (s + 2 * j - 1) * (s + 2 * j)
        j = len(_BERNOULLI)
        err = abs(_BERNOULLI[-1] / math.factorial(2 * j) * rising * n ** (-s - 2 * j + 1))
        total = head + tail
        if err <= rtol * total:
            return total
        n *= 2


def powerlaw_expected_ub(alpha: float) -> float:
    """Expected bound for a power-law degree distribution with exponent alpha.

    Mean degree is zeta(alpha-1)/zeta(alpha), so E[|E|/|V|] + 1 is half of
    that plus one.
    """
    if alpha <= 2:
        raise ValueError(f"alpha={alpha}: zeta(alpha-1) diverges for alpha <= 2")
    return 0.5 * zeta(alpha - 1) / zeta(alpha) + 1


# -- tightness fixture -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TightnessFixture:
    """Complete graph K_n (vertices 0..n-1) plus a ring of n(n-1)/2 vertices.

    ``ring_picks[p]`` and ``clique_picks[p]`` are the forced random-fallback
    picks of partition p in iterations 0 and 1; ``owner_of`` names the
    partition that wins each contested edge.
    """

    n: int
    graph: Graph
    num_parts: int
    ring_picks: tuple[int, ...]
    clique_picks: tuple[int, ...]
    owner_of: dict
    expected_rf: float
    expected_ub: float

    def random_override(self, partition: int, iteration: int):
        if iteration == 0:
            return self.ring_picks[partition]
        if iteration == 1:
            return self.clique_picks[partition]
        return None

    def arbiter(self, edge_index: int, contenders):
        want = self.owner_of[edge_index]
        return want if want in contenders else contenders[0]


def build_tightness_fixture(n: int) -> TightnessFixture:
    if n < 3:
        raise ValueError("tightness fixture needs n >= 3")
    m = n * (n - 1) // 2
    clique = [(a, b) for a in range(n) for b in range(a + 1, n)]
    ring_vertices = list(range(n, n + m))
    ring = [(ring_vertices[i], ring_vertices[(i + 1) % m]) for i in range(m)]
    graph = Graph.from_edges(clique + ring, vertex_count=n + m)
    index = {tuple(e): i for i, e in enumerate(graph.edges.tolist())}
    owner_of = {}
    # partition i owns ring edge (r_i, r_{i+1}) and clique edge number i
    for i, (u, v) in enumerate(ring):
        owner_of[index[(min(u, v), max(u, v))]] = i
    for i, e in enumerate(clique):
        owner_of[index[e]] = i
    num_v = n + m
    return TightnessFixture(
        n=n,
        graph=graph,
        num_parts=m,
        ring_picks=tuple(ring_vertices),
        clique_picks=tuple(a for a, _ in clique),
        owner_of=owner_of,
        expected_rf=2 * n * (n - 1) / num_v,
        expected_ub=(2 * n * (n - 1) + n) / num_v,
    )


# -- reports ---------------------------------------------------------------------

@dataclass
class QualityReport:
    graph: str
    partitioner: str
    P: int
    alpha: float
    lam: float
    seed: int
    rf: float
    ub: float
    eb: float
    vb: float
    iterations: int
    elapsed_ms: float

    @classmethod
    def header(cls) -> str:
        return ",".join(f.name if f.name != "lam" else "lambda" for f in fields(cls))

    def csv_row(self) -> str:
        vals = []
        for f in fields(self):
            x = getattr(self, f.name)
            vals.append(f"{x:.6f}" if isinstance(x, float) else str(x))
        return ",".join(vals)


def quality_report(
    assignment: PartitionAssignment,
    graph: Graph,
    *,
    name: str = "graph",
    partitioner: str = "",
    alpha: float = 0.0,
    lam: float = 0.0,
    seed: int = 0,
    iterations: int = 0,
    elapsed_ms: float = 0.0,
) -> QualityReport:
    return QualityReport(
        graph=name,
        partitioner=partitioner,
        P=assignment.num_parts,
        alpha=alpha,
        lam=lam,
        seed=seed,
        rf=replication_factor(assignment, graph),
        ub=theoretical_upper_bound(graph.vertex_count, graph.num_edges, assignment.num_parts),
        eb=edge_balance(assignment),
        vb=vertex_balance(assignment),
        iterations=iterations,
        elapsed_ms=elapsed_ms,
    )
