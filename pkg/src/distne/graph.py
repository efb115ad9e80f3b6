"""Graph ingestion, RMAT generation, 2D-hash placement and CSR shards."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

__all__ = [
    "Graph",
    "GraphFormatError",
    "GridPlacement",
    "RmatParams",
    "SubGraph",
    "build_csr",
    "canonicalize",
    "generate_rmat",
    "grid_shape",
    "load_edge_list",
    "mix64",
    "place_edges_2d",
    "write_edge_list",
]

MASK64 = (1 << 64) - 1
ROW_SALT = 0x9E3779B97F4A7C15
COL_SALT = 0xC2B2AE3D27D4EB4F
MAX_SCALE = 62


class GraphFormatError(ValueError):
    pass


def mix64(x, salt: int = 0):
    """splitmix64 finalizer applied to ``x ^ salt``.

    Works on python ints and on numpy integer arrays (returns uint64).
    """
    if isinstance(x, np.ndarray):
        with np.errstate(over="ignore"):
            z = x.astype(np.uint64) ^ np.uint64(salt & MASK64)
            z = z + np.uint64(0x9E3779B97F4A7C15)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            return z ^ (z >> np.uint64(31))
    z = ((int(x) ^ salt) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with canonical edges (src < dst), sorted."""

    vertex_count: int
    edges: np.ndarray
    degrees: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, edges, vertex_count: int | None = None) -> "Graph":
        arr = canonicalize(edges)
        if vertex_count is None:
            vertex_count = int(arr.max()) + 1 if len(arr) else 0
        if len(arr) and int(arr.max()) >= vertex_count:
            raise ValueError("edge endpoint exceeds vertex_count")
        degrees = np.bincount(arr.ravel(), minlength=vertex_count).astype(np.int64)
        arr.setflags(write=False)
        degrees.setflags(write=False)
        return cls(vertex_count, arr, degrees)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def __len__(self) -> int:
        return self.num_edges

    def edge_list(self) -> list[tuple[int, int]]:
        return [tuple(e) for e in self.edges.tolist()]


def canonicalize(edges) -> np.ndarray:
    """Orient every pair as (min, max), drop self-loops, dedup, sort."""
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(arr) and arr.min() < 0:
        raise ValueError("negative vertex id")
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    keep = lo != hi
    out = np.stack([lo[keep], hi[keep]], axis=1)
    if len(out) == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(out, axis=0)


def load_edge_list(source: IO | str | bytes) -> Graph:
    """Parse whitespace-separated ``u v`` lines; ``#`` starts a comment line.

    Vertex ids are densified in order of first appearance.
    """
    if isinstance(source, bytes):
        source = io.StringIO(source.decode())
    elif isinstance(source, str):
        source = io.StringIO(source)
    ids: dict[int, int] = {}
    pairs: list[tuple[int, int]] = []
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode()
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise GraphFormatError(f"line {lineno}: expected 'u v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer vertex id in {line!r}") from None
        if u < 0 or v < 0:
            raise GraphFormatError(f"line {lineno}: negative vertex id")
        if u == v:
            continue
        du = ids.setdefault(u, len(ids))
        dv = ids.setdefault(v, len(ids))
        pairs.append((du, dv))
    if not pairs:
        raise GraphFormatError("empty graph: no edges")
    return Graph.from_edges(pairs, vertex_count=len(ids))


def write_edge_list(graph: Graph, out: IO[str]) -> None:
    for u, v in graph.edges.tolist():
        out.write(f"{u} {v}\n")


@dataclass(frozen=True)
class RmatParams:
    scale: int
    edge_factor: int
    a: float = 0.57
    b: float = 0.19
    c: float = 0.19
    d: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if self.scale > MAX_SCALE:
            raise OverflowError(f"scale {self.scale} overflows 64-bit vertex ids")
        if self.edge_factor < 1:
            raise ValueError("edge_factor must be >= 1")
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("quadrant probabilities must be non-negative")
        if abs(self.a + self.b + self.c + self.d - 1.0) > 1e-9:
            raise ValueError("quadrant probabilities must sum to 1")


def generate_rmat(params: RmatParams) -> Graph:
    """Recursive-quadrant RMAT sampler.

    Emits ``edge_factor * 2**scale`` directed samples, then canonicalizes.
    Isolated vertices are kept, so ``vertex_count == 2**scale``.
    """
    n = 1 << params.scale
    samples = params.edge_factor * n
    rng = np.random.default_rng(params.seed)
    src = np.zeros(samples, dtype=np.int64)
    dst = np.zeros(samples, dtype=np.int64)
    ab = params.a + params.b
    abc = ab + params.c
    for level in range(params.scale):
        r = rng.random(samples)
        # quadrant: a -> (0,0), b -> (0,1), c -> (1,0), d -> (1,1)
        row_bit = r >= ab
        col_bit = ((r >= params.a) & (r < ab)) | (r >= abc)
        bit = np.int64(1) << np.int64(params.scale - 1 - level)
        src |= row_bit.astype(np.int64) * bit
        dst |= col_bit.astype(np.int64) * bit
    return Graph.from_edges(np.stack([src, dst], axis=1), vertex_count=n)


def grid_shape(num_procs: int) -> tuple[int, int]:
    """rows = largest divisor of num_procs not above its square root."""
    if num_procs < 1:
        raise ValueError("num_procs must be >= 1")
    rows = 1
    for d in range(1, math.isqrt(num_procs) + 1):
        if num_procs % d == 0:
            rows = d
    return rows, num_procs // rows


@dataclass(frozen=True)
class GridPlacement:
    """2D-hash grid; a vertex's replica set is derived from its id only."""

    rows: int
    cols: int
    seed: int = 0

    @classmethod
    def for_procs(cls, num_procs: int, seed: int = 0) -> "GridPlacement":
        rows, cols = grid_shape(num_procs)
        return cls(rows, cols, seed)

    @property
    def num_procs(self) -> int:
        return self.rows * self.cols

    def _salts(self) -> tuple[int, int]:
        s = mix64(self.seed, 0x5EED)
        return ROW_SALT ^ s, COL_SALT ^ s

    def row_of(self, v):
        rs, _ = self._salts()
        h = mix64(v, rs)
        return (h % np.uint64(self.rows)).astype(np.int64) if isinstance(h, np.ndarray) else h % self.rows

    def col_of(self, v):
        _, cs = self._salts()
        h = mix64(v, cs)
        return (h % np.uint64(self.cols)).astype(np.int64) if isinstance(h, np.ndarray) else h % self.cols

    def proc_of_edges(self, edges: np.ndarray) -> np.ndarray:
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        return self.row_of(edges[:, 0]) * self.cols + self.col_of(edges[:, 1])

    def replicas(self, v: int) -> tuple[int, ...]:
        """Processes that may hold an edge of ``v``: its row plus its column."""
        r, c = self.row_of(v), self.col_of(v)
        procs = {r * self.cols + j for j in range(self.cols)}
        procs.update(i * self.cols + c for i in range(self.rows))
        return tuple(sorted(procs))


def place_edges_2d(graph: Graph, num_procs: int, seed: int = 0) -> list[np.ndarray]:
    """Per-process arrays of global edge indices (into ``graph.edges``)."""
    grid = GridPlacement.for_procs(num_procs, seed)
    owner = grid.proc_of_edges(graph.edges)
    order = np.argsort(owner, kind="stable")
    bounds = np.searchsorted(owner[order], np.arange(num_procs + 1))
    return [order[bounds[p]:bounds[p + 1]] for p in range(num_procs)]


@dataclass(eq=False)
class SubGraph:
    """CSR adjacency over global vertex ids for one shard's edges.

    Each undirected edge appears twice in ``neighbors``; both slots carry the
    same local edge id in ``edge_ids`` so allocation state is shared.
    """

    vertex_count: int
    edges: np.ndarray
    offsets: np.ndarray
    neighbors: np.ndarray
    edge_ids: np.ndarray
    global_ids: np.ndarray

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree(self, v: int) -> int:
        return int(self.offsets[v + 1] - self.offsets[v])

    def neighbors_of(self, v: int) -> np.ndarray:
        return self.neighbors[self.offsets[v]:self.offsets[v + 1]]

    def vertices(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.offsets))


def build_csr(edges, vertex_count: int, global_ids: Iterable[int] | None = None) -> SubGraph:
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    m = len(arr)
    if m and (arr.min() < 0 or arr.max() >= vertex_count):
        raise ValueError(f"edge endpoint outside [0, {vertex_count})")
    gids = np.arange(m, dtype=np.int64) if global_ids is None else np.asarray(global_ids, dtype=np.int64)
    if len(gids) != m:
        raise ValueError("global_ids length mismatch")
    heads = np.concatenate([arr[:, 0], arr[:, 1]])
    tails = np.concatenate([arr[:, 1], arr[:, 0]])
    eids = np.concatenate([np.arange(m), np.arange(m)]).astype(np.int64)
    order = np.lexsort((tails, heads))
    counts = np.bincount(heads, minlength=vertex_count)
    offsets = np.zeros(vertex_count + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return SubGraph(vertex_count, arr, offsets, tails[order], eids[order], gids)
