"""Distributed neighbor expansion on the in-process runtime.

``partition_dne`` launches |P| expansion processes and |P| allocation
processes. Every iteration runs four barrier-separated phases:

``select``  expansion processes pick boundary vertices and multicast them to
            the allocation processes holding a replica;
``onehop``  allocation processes claim one-hop edges and sync new tags;
``twohop``  allocation processes merge tags, claim two-hop edges, compute
            local scores and reply;
``update``  expansion processes merge replies, then two all-gathers decide
            termination.
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Callable

import numpy as np

from .allocation import AllocationShard, final_leftover_sweep, merge_sync, sync_messages
from .expansion import ExpansionConfig, ExpansionState, select_expansion_vertices, update_boundary
from .graph import Graph, GridPlacement, build_csr, place_edges_2d
from .metrics import PartitionAssignment, check_upper_bound
from .runtime import (
    BoundarySync,
    NewBoundary,
    NewEdges,
    ProcessId,
    ProtocolError,
    Runtime,
    VertexMulticast,
)

__all__ = ["DneResult", "Engine", "PHASES", "VARIANT_PHASE", "partition_dne"]

PHASES = {"select": 0, "onehop": 1, "twohop": 2, "update": 3, "gather": 4}
VARIANT_PHASE = {
    "VertexMulticast": "select",
    "BoundarySync": "onehop",
    "NewBoundary": "twohop",
    "NewEdges": "twohop",
    "GatherCount": "gather",
}

# observer(event, engine, **info)
Observer = Callable[..., None]
# (partition, iteration) -> vertex, replacing the random fallback pick
RandomOverride = Callable[[int, int], "int | None"]


@dataclass
class DneResult:
    assignment: PartitionAssignment
    iterations: int
    states: list[ExpansionState]
    leftovers: int = 0
    elapsed: float = 0.0
    stats: dict = field(default_factory=dict)


class Engine:
    def __init__(
        self,
        graph: Graph,
        num_parts: int,
        config: ExpansionConfig = ExpansionConfig(),
        mode: str = "deterministic",
        workers: int | None = None,
        trace: IO[str] | None = None,
        observer: Observer | None = None,
        random_override: RandomOverride | None = None,
        arbiter: Callable[[int, list[int]], int] | None = None,
    ):
        if num_parts < 1:
            raise ValueError("num_parts must be >= 1")
        if graph.num_edges == 0:
            raise ValueError("graph has no edges")
        self.graph = graph
        self.num_parts = num_parts
        self.config = config
        self.observer = observer
        self.random_override = random_override
        self.arbiter = arbiter
        self.grid = GridPlacement.for_procs(num_parts, config.seed)
        threadsafe = mode == "parallel"
        self.shards = [
            AllocationShard(
                s, build_csr(graph.edges[idx], graph.vertex_count, idx), num_parts, self.grid, threadsafe
            )
            for s, idx in enumerate(place_edges_2d(graph, num_parts, config.seed))
        ]
        self.cap = config.alpha * graph.num_edges / num_parts
        self.states = [ExpansionState(p, self.cap) for p in range(num_parts)]
        self.runtime = Runtime(
            [ProcessId.expansion(p) for p in range(num_parts)]
            + [ProcessId.allocation(p) for p in range(num_parts)],
            mode=mode,
            workers=workers if workers is not None else (num_parts if mode == "parallel" else 1),
            trace=trace,
        )
        self.iterations = 0
        self._replicas: dict[int, tuple[int, ...]] = {}

    # -- helpers shared by expansion processes ---------------------------------

    def replicas(self, v: int) -> tuple[int, ...]:
        r = self._replicas.get(v)
        if r is None:
            r = self._replicas[v] = self.grid.replicas(v)
        return r

    def rest_of(self, v: int) -> int:
        """Global unallocated degree of ``v``, summed over its replica shards."""
        shards = self.shards
        return sum(shards[s].rest[v] for s in self.replicas(v))

    def random_vertex(self, p: int, rng) -> int | None:
        """Colocated shard first, then the others in ring order."""
        n = self.num_parts
        for k in range(n):
            v = self.shards[(p + k) % n].random_live_vertex(rng)
            if v is not None:
                return v
        return None

    def _notify(self, event: str, **info) -> None:
        if self.observer is not None:
            self.observer(event, self, **info)

    # -- process bodies ------------------------------------------------------------

    def _expansion(self, p: int):
        state = self.states[p]
        config = self.config
        total_edges = self.graph.num_edges
        rng = np.random.default_rng([config.seed, p])
        me = p

        def pick():
            if self.random_override is not None:
                v = self.random_override(me, state.iteration)
                if v is not None:
                    return v
            return self.random_vertex(me, rng)

        def body(ctx):
            live = True
            it = 0
            while True:
                ctx.iteration = state.iteration = it
                ctx.phase = "select"
                if live:
                    chosen = select_expansion_vertices(state, config, self.rest_of, pick)
                    buckets: dict[int, list[int]] = defaultdict(list)
                    for v in chosen:
                        for s in self.replicas(v):
                            buckets[s].append(v)
                    for s in sorted(buckets):
                        ctx.send(ProcessId.allocation(s), VertexMulticast(tuple(buckets[s]), me))
                yield ctx.barrier()
                yield ctx.barrier()
                yield ctx.barrier()
                ctx.phase = "update"
                entries = []
                for env in ctx.receive():
                    msg = env.payload
                    if isinstance(msg, NewBoundary):
                        entries.extend((v, d) for v, q, d in msg.entries if q == me)
                    elif isinstance(msg, NewEdges):
                        state.edges.extend(msg.edges)
                    else:
                        raise ProtocolError(f"E{me}: unexpected {type(msg).__name__} in update")
                scores = update_boundary(state, entries)
                self._notify("scores", partition=me, iteration=it, scores=scores)
                ctx.phase = "gather"
                allocated = yield ctx.all_gather_sum(state.size)
                if live and (state.size > self.cap or allocated == total_edges):
                    live = False
                nlive = yield ctx.all_gather_sum(int(live))
                if nlive == 0:
                    return
                it += 1

        return body

    def _allocation(self, s: int):
        shard = self.shards[s]
        arbiter = self.arbiter

        def body(ctx):
            it = 0
            while True:
                ctx.iteration = it
                ctx.phase = "select"
                yield ctx.barrier()
                ctx.phase = "onehop"
                batch = []
                for env in ctx.receive():
                    msg = env.payload
                    if not isinstance(msg, VertexMulticast):
                        raise ProtocolError(f"A{s}: unexpected {type(msg).__name__} in onehop")
                    batch.extend((v, msg.partition) for v in msg.vertices)
                bp_local, ep1 = shard.allocate_one_hop(batch, arbiter)
                for target, pairs in sorted(sync_messages(shard, bp_local).items()):
                    ctx.send(ProcessId.allocation(target), BoundarySync(tuple(pairs)))
                yield ctx.barrier()
                ctx.phase = "twohop"
                received = []
                for env in ctx.receive():
                    if not isinstance(env.payload, BoundarySync):
                        raise ProtocolError(f"A{s}: unexpected {type(env.payload).__name__} in twohop")
                    received.extend(env.payload.pairs)
                bp_new = merge_sync(shard, bp_local, received)
                self._notify("before_two_hop", shard=s, iteration=it)
                ep2 = shard.allocate_two_hop(bp_new)
                self._notify("after_two_hop", shard=s, iteration=it, claimed=len(ep2))
                ld = shard.compute_local_drest(bp_new)
                per_part: dict[int, list] = defaultdict(list)
                for entry in ld:
                    per_part[entry[1]].append(entry)
                for p in sorted(per_part):
                    ctx.send(ProcessId.expansion(p), NewBoundary(tuple(per_part[p])))
                edges: dict[int, list[int]] = defaultdict(list)
                gid = shard.gid
                for e, p in ep1:
                    edges[p].append(gid[e])
                for e, p in ep2:
                    edges[p].append(gid[e])
                for p in sorted(edges):
                    ctx.send(ProcessId.expansion(p), NewEdges(tuple(edges[p]), p))
                yield ctx.barrier()
                ctx.phase = "gather"
                yield ctx.barrier()
                nlive = yield ctx.all_gather_sum(0)
                if nlive == 0:
                    return
                it += 1

        return body

    # -- driver ----------------------------------------------------------------------

    def run(self) -> DneResult:
        t0 = time.perf_counter()
        procs = {}
        for p in range(self.num_parts):
            procs[ProcessId.expansion(p)] = self._expansion(p)
            procs[ProcessId.allocation(p)] = self._allocation(p)
        self.runtime.run(procs)
        self.iterations = max(s.iteration for s in self.states) + 1

        sizes = [s.size for s in self.states]
        leftovers = final_leftover_sweep(self.shards, sizes)
        for gid, p in leftovers:
            self.states[p].edges.append(gid)

        m = self.graph.num_edges
        parts = np.full(m, -1, dtype=np.int64)
        seen = np.zeros(m, dtype=np.int64)
        for st in self.states:
            idx = np.asarray(st.edges, dtype=np.int64)
            np.add.at(seen, idx, 1)
            parts[idx] = st.partition
        if (seen != 1).any():
            bad = np.flatnonzero(seen != 1)[:5].tolist()
            raise ProtocolError(f"edges not owned exactly once, e.g. {bad}")
        assignment = PartitionAssignment(self.graph.edges, parts, self.num_parts)
        return DneResult(
            assignment,
            self.iterations,
            self.states,
            leftovers=len(leftovers),
            elapsed=time.perf_counter() - t0,
            stats={"messages": self.runtime.delivered, "barriers": self.runtime.barriers},
        )


def partition_dne(
    graph: Graph,
    num_parts: int,
    config: ExpansionConfig = ExpansionConfig(),
    mode: str = "deterministic",
    check_bound: bool = True,
    **kwargs,
) -> DneResult:
    """Partition ``graph``'s edges into ``num_parts`` parts.

    With ``check_bound`` the result's replication factor is checked against
    ``(|E| + |V| + |P|) / |V|`` and :class:`~distne.metrics.BoundViolation` is
    raised when it is exceeded.
    """
    result = Engine(graph, num_parts, config, mode, **kwargs).run()
    if check_bound:
        check_upper_bound(result.assignment, graph)
    return result
