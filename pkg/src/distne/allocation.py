"""Edge allocation on one shard of the 2D-hash distributed graph.

Per iteration an allocation process runs four phases over its shard:

1. claim every unallocated local edge of each received ``(v, p)`` for ``p``
   and tag the far endpoint with ``p``;
2. exchange the new ``(vertex, partition)`` tags with the vertex's replicas;
3. claim edges whose two endpoints already share a partition tag, for the
   shard-locally smallest such partition;
4. report each new boundary vertex's count of local unallocated edges.

Edge ownership only ever goes from unallocated to one partition. When a shard
is ``threadsafe`` the transition and its bookkeeping run under a lock so
concurrent workers can race on the same edges.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph import GridPlacement, SubGraph

__all__ = [
    "UNALLOCATED",
    "AllocationBatch",
    "AllocationShard",
    "final_leftover_sweep",
    "merge_sync",
    "sync_messages",
    "sync_vertex_allocations",
]

UNALLOCATED = -1

Arbiter = Callable[[int, Sequence[int]], int]


@dataclass(frozen=True)
class AllocationBatch:
    pairs: tuple[tuple[int, int], ...]

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class AllocationShard:
    def __init__(
        self,
        index: int,
        subgraph: SubGraph,
        num_parts: int,
        grid: GridPlacement | None = None,
        threadsafe: bool = False,
    ):
        self.index = index
        self.subgraph = subgraph
        self.num_parts = num_parts
        self.grid = grid
        self.off = subgraph.offsets.tolist()
        self.nbr = subgraph.neighbors.tolist()
        self.eid = subgraph.edge_ids.tolist()
        self.src = subgraph.edges[:, 0].tolist()
        self.dst = subgraph.edges[:, 1].tolist()
        self.gid = subgraph.global_ids.tolist()
        n = subgraph.vertex_count
        self.owner = [UNALLOCATED] * subgraph.num_edges
        self.rest = np.diff(subgraph.offsets).tolist()
        self.tags = [0] * n
        self.counts = [0] * num_parts
        self._live = [v for v in range(n) if self.rest[v] > 0]
        self._live_pos = {v: i for i, v in enumerate(self._live)}
        self._lock = threading.Lock() if threadsafe else None

    # -- state access ----------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return len(self.owner)

    def partitions_of(self, v: int) -> set[int]:
        return set(_bits(self.tags[v]))

    def unallocated_count(self) -> int:
        return self.owner.count(UNALLOCATED)

    def has_unallocated(self) -> bool:
        return bool(self._live)

    def random_live_vertex(self, rng) -> int | None:
        """Uniform pick among local vertices with an unallocated local edge."""
        if not self._live:
            return None
        return self._live[int(rng.integers(len(self._live)))]

    def _drop_live(self, v: int) -> None:
        i = self._live_pos.pop(v)
        last = self._live.pop()
        if last != v:
            self._live[i] = last
            self._live_pos[last] = i

    # -- the claim primitive -----------------------------------------------------

    def _take(self, e: int, p: int) -> None:
        self.owner[e] = p
        self.counts[p] += 1
        rest = self.rest
        for x in (self.src[e], self.dst[e]):
            rest[x] -= 1
            if rest[x] == 0:
                self._drop_live(x)

    def claim(self, e: int, p: int) -> bool:
        """Unallocated -> ``p`` for local edge ``e``; False if already owned."""
        if self._lock is None:
            if self.owner[e] != UNALLOCATED:
                return False
            self._take(e, p)
            return True
        with self._lock:
            if self.owner[e] != UNALLOCATED:
                return False
            self._take(e, p)
            return True

    def _tag(self, u: int, p: int) -> bool:
        bit = 1 << p
        if self._lock is None:
            if self.tags[u] & bit:
                return False
            self.tags[u] |= bit
            return True
        with self._lock:
            if self.tags[u] & bit:
                return False
            self.tags[u] |= bit
            return True

    # -- phase 1 ---------------------------------------------------------------

    def allocate_one_hop(
        self,
        batch: Iterable[tuple[int, int]],
        arbiter: Arbiter | None = None,
        workers: int = 1,
    ) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
        """Claim the unallocated local edges of every received ``(v, p)``.

        Returns ``(new boundary pairs, claimed (local edge, partition) pairs)``.
        Only first-time ``(u, p)`` tags are reported as boundary pairs.

        ``arbiter(global_edge_id, contenders) -> winner`` picks the winner
        when several pairs of the batch target the same edge; without it the
        first pair in batch order wins.
        """
        pairs = list(batch)
        if arbiter is not None:
            return self._one_hop_arbitrated(pairs, arbiter)
        if workers > 1 and len(pairs) > 1:
            if self._lock is None:
                raise ValueError("concurrent one-hop allocation needs a threadsafe shard")
            chunks = [pairs[i::workers] for i in range(workers)]
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(self._one_hop_serial, chunks))
            bp = [x for r in results for x in r[0]]
            ep = [x for r in results for x in r[1]]
            return bp, ep
        return self._one_hop_serial(pairs)

    def _one_hop_serial(self, pairs):
        off, nbr, eid, owner = self.off, self.nbr, self.eid, self.owner
        bp: list[tuple[int, int]] = []
        ep: list[tuple[int, int]] = []
        fast = self._lock is None
        tags = self.tags
        for v, p in pairs:
            bit = 1 << p
            for i in range(off[v], off[v + 1]):
                e = eid[i]
                if owner[e] != UNALLOCATED:
                    continue
                if fast:
                    self._take(e, p)
                elif not self.claim(e, p):
                    continue
                ep.append((e, p))
                u = nbr[i]
                if fast:
                    if not tags[u] & bit:
                        tags[u] |= bit
                        bp.append((u, p))
                elif self._tag(u, p):
                    bp.append((u, p))
        return bp, ep

    def _one_hop_arbitrated(self, pairs, arbiter: Arbiter):
        off, nbr, eid, owner = self.off, self.nbr, self.eid, self.owner
        contenders: dict[int, list[tuple[int, int]]] = {}
        for v, p in pairs:
            for i in range(off[v], off[v + 1]):
                e = eid[i]
                if owner[e] == UNALLOCATED:
                    contenders.setdefault(e, []).append((p, nbr[i]))
        bp: list[tuple[int, int]] = []
        ep: list[tuple[int, int]] = []
        for e, cands in contenders.items():
            parts = [p for p, _ in cands]
            winner = arbiter(self.gid[e], parts)
            if winner not in parts:
                raise ValueError(f"arbiter chose {winner}, not a contender of edge {self.gid[e]}")
            u = next(u for p, u in cands if p == winner)
            self.claim(e, winner)
            ep.append((e, winner))
            if self._tag(u, winner):
                bp.append((u, winner))
        return bp, ep

    # -- phase 2 -----------------------------------------------------------------

    def apply_tags(self, pairs: Iterable[tuple[int, int]]) -> None:
        for u, p in pairs:
            self._tag(u, p)

    # -- phase 3 -----------------------------------------------------------------

    def _argmin_count(self, mask: int) -> int:
        counts = self.counts
        best = -1
        best_count = 0
        while mask:
            low = mask & -mask
            p = low.bit_length() - 1
            c = counts[p]
            if best < 0 or c < best_count:
                best, best_count = p, c
            mask ^= low
        return best

    def allocate_two_hop(self, bp_new: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
        """Claim ``e(u, w)`` for new boundary ``u`` when tags(u) & tags(w) != {}.

        The winner is the common partition with the fewest edges on this
        shard, ties to the smaller id. Such a claim adds no vertex replica.
        """
        off, nbr, eid, owner, tags = self.off, self.nbr, self.eid, self.owner, self.tags
        fast = self._lock is None
        ep: list[tuple[int, int]] = []
        for u in dict.fromkeys(u for u, _ in bp_new):
            tu = tags[u]
            for i in range(off[u], off[u + 1]):
                e = eid[i]
                if owner[e] != UNALLOCATED:
                    continue
                common = tu & tags[nbr[i]]
                if not common:
                    continue
                p = self._argmin_count(common)
                if fast:
                    self._take(e, p)
                elif not self.claim(e, p):
                    continue
                ep.append((e, p))
        return ep

    # -- phase 4 -----------------------------------------------------------------

    def compute_local_drest(self, bp_new: Iterable[tuple[int, int]]) -> list[tuple[int, int, int]]:
        rest = self.rest
        return [(u, p, rest[u]) for u, p in bp_new]

    # -- leftovers ---------------------------------------------------------------

    def unallocated_edges(self) -> list[int]:
        return [e for e, o in enumerate(self.owner) if o == UNALLOCATED]


def sync_messages(
    shard: AllocationShard, bp_local: Iterable[tuple[int, int]]
) -> dict[int, list[tuple[int, int]]]:
    """Route new tags to every other shard in the vertex's replica set."""
    if shard.grid is None:
        return {}
    out: dict[int, list[tuple[int, int]]] = defaultdict(list)
    cache: dict[int, tuple[int, ...]] = {}
    for u, p in bp_local:
        reps = cache.get(u)
        if reps is None:
            reps = cache[u] = shard.grid.replicas(u)
        for s in reps:
            if s != shard.index:
                out[s].append((u, p))
    return dict(out)


def merge_sync(
    shard: AllocationShard,
    bp_local: Iterable[tuple[int, int]],
    received: Iterable[tuple[int, int]],
) -> list[tuple[int, int]]:
    """Apply replica tags received from other shards; return this shard's BP_new."""
    received = list(received)
    if shard.grid is not None:
        for u, _ in received:
            if shard.index not in shard.grid.replicas(u):
                raise RuntimeError(f"shard {shard.index} received a tag for non-replica vertex {u}")
    shard.apply_tags(received)
    return list(dict.fromkeys([*bp_local, *received]))


def sync_vertex_allocations(
    shards: Sequence[AllocationShard], bp_locals: Sequence[Iterable[tuple[int, int]]]
) -> list[list[tuple[int, int]]]:
    """In-memory phase 2 over all shards at once (same routing as the runtime)."""
    bp_locals = [list(b) for b in bp_locals]
    inbox: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for shard, bp in zip(shards, bp_locals):
        for target, pairs in sync_messages(shard, bp).items():
            inbox[target].extend(pairs)
    return [merge_sync(s, bp, inbox.get(s.index, ())) for s, bp in zip(shards, bp_locals)]


def final_leftover_sweep(
    shards: Sequence[AllocationShard], sizes: list[int]
) -> list[tuple[int, int]]:
    """Assign every still-unallocated edge; returns ``(global edge id, partition)``.

    Each leftover goes to the currently smallest partition already covering one
    of its endpoints, or to the globally smallest when none does. ``sizes`` is
    updated in place.
    """
    cover: dict[int, int] = defaultdict(int)
    for s in shards:
        for e, o in enumerate(s.owner):
            if o != UNALLOCATED:
                bit = 1 << o
                cover[s.src[e]] |= bit
                cover[s.dst[e]] |= bit
    every = (1 << len(sizes)) - 1
    out = []
    for s in shards:
        for e in s.unallocated_edges():
            u, w = s.src[e], s.dst[e]
            cand = cover[u] | cover[w] or every
            p = min(_bits(cand), key=lambda x: (sizes[x], x))
            s.claim(e, p)
            sizes[p] += 1
            cover[u] |= 1 << p
            cover[w] |= 1 << p
            out.append((s.gid[e], p))
    return out
