"""Reference partitioners: 1D hash, 2D grid hash, DBH and sequential NE."""

from __future__ import annotations

import enum
import heapq

import numpy as np

from .graph import Graph, GridPlacement, build_csr, mix64
from .metrics import PartitionAssignment

__all__ = [
    "BaselineKind",
    "partition_dbh",
    "partition_grid",
    "partition_random",
    "partition_sequential_ne",
]

EDGE_SALT = 0xD6E8FEB86659FD93
DBH_SALT = 0xA0761D6478BD642F


class BaselineKind(enum.Enum):
    RANDOM_1D = "random"
    GRID_2D = "grid"
    DBH = "dbh"
    SEQUENTIAL_NE = "seqne"


def _check(num_parts: int) -> None:
    if num_parts < 1:
        raise ValueError("num_parts must be >= 1")


def partition_random(graph: Graph, num_parts: int, seed: int = 0) -> PartitionAssignment:
    _check(num_parts)
    salt = EDGE_SALT ^ mix64(seed)
    e = graph.edges
    h = mix64(mix64(e[:, 0], salt) ^ e[:, 1].astype(np.uint64), salt)
    parts = (h % np.uint64(num_parts)).astype(np.int64)
    return PartitionAssignment(graph.edges, parts, num_parts)


def partition_grid(graph: Graph, num_parts: int, seed: int = 0) -> PartitionAssignment:
    _check(num_parts)
    grid = GridPlacement.for_procs(num_parts, seed)
    return PartitionAssignment(graph.edges, grid.proc_of_edges(graph.edges), num_parts)


def partition_dbh(graph: Graph, num_parts: int, seed: int = 0) -> PartitionAssignment:
    """Hash the endpoint of lower degree (ties: the smaller id)."""
    _check(num_parts)
    e = graph.edges
    deg = graph.degrees
    du, dv = deg[e[:, 0]], deg[e[:, 1]]
    # canonical edges have src < dst, so ties fall to src
    pick = np.where(dv < du, e[:, 1], e[:, 0])
    h = mix64(pick, DBH_SALT ^ mix64(seed))
    return PartitionAssignment(graph.edges, (h % np.uint64(num_parts)).astype(np.int64), num_parts)


def partition_sequential_ne(
    graph: Graph, num_parts: int, alpha: float = 1.1, seed: int = 0
) -> PartitionAssignment:
    """Build partitions one at a time by greedy neighbor expansion.

    Each partition grows from a random vertex, always expanding the boundary
    vertex with the fewest unallocated edges and closing two-hop edges whose
    endpoints it already covers, until it holds alpha*|E|/|P| edges. The last
    partition takes whatever remains.
    """
    _check(num_parts)
    m = graph.num_edges
    n = graph.vertex_count
    csr = build_csr(graph.edges, n)
    off = csr.offsets.tolist()
    nbr = csr.neighbors.tolist()
    eid = csr.edge_ids.tolist()
    owner = [-1] * m
    rest = np.diff(csr.offsets).tolist()
    member = [-1] * n  # member[v] == p  <=>  v in V(E_p) for the current p
    rng = np.random.default_rng(seed)
    # candidate pool for random restarts; compacted lazily
    pool = [v for v in range(n) if rest[v] > 0]
    rng.shuffle(pool)
    cap = alpha * m / num_parts
    allocated = 0

    for p in range(num_parts):
        last = p == num_parts - 1
        size = 0
        heap: list[tuple[int, int]] = []

        def take(e, u, w):
            nonlocal size, allocated
            owner[e] = p
            rest[u] -= 1
            rest[w] -= 1
            size += 1
            allocated += 1
            for x in (u, w):
                if member[x] == p and rest[x] > 0:
                    heapq.heappush(heap, (rest[x], x))

        def cover(x):
            # x joins V(E_p); close edges to vertices already covered
            member[x] = p
            for i in range(off[x], off[x + 1]):
                e = eid[i]
                if owner[e] < 0 and member[nbr[i]] == p:
                    take(e, x, nbr[i])
            if rest[x] > 0:
                heapq.heappush(heap, (rest[x], x))

        while allocated < m and (last or size < cap):
            v = -1
            while heap:
                d, x = heapq.heappop(heap)
                if rest[x] == d and d > 0:
                    v = x
                    break
            if v < 0:
                while pool and rest[pool[-1]] == 0:
                    pool.pop()
                if not pool:
                    break
                v = pool[-1]
                if member[v] != p:
                    cover(v)
                    if rest[v] == 0:
                        continue
            for i in range(off[v], off[v + 1]):
                e = eid[i]
                if owner[e] >= 0:
                    continue
                u = nbr[i]
                take(e, v, u)
                if member[u] != p:
                    cover(u)
    parts = np.asarray(owner, dtype=np.int64)
    return PartitionAssignment(graph.edges, parts, num_parts)
