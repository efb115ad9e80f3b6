"""Bulk-synchronous message passing between expansion and allocation processes.

Processes are generator functions. A process sends messages through its
:class:`Context` and yields a token from :meth:`Context.barrier` or
:meth:`Context.all_gather_sum` to wait for everybody else. Messages sent
during a phase are delivered when the phase's barrier completes and must be
consumed with :meth:`Context.receive` before the next barrier.

Two scheduling modes share the same process code:

* ``deterministic``: one worker steps every process in id order; pending
  messages are delivered sorted by (sender, enqueue order).
* ``parallel``: processes are spread over worker threads joined by a
  :class:`threading.Barrier`; delivery follows arrival order.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import IO, Callable, Generator, Iterable, Mapping

__all__ = [
    "AllGatherSum",
    "Barrier",
    "BoundarySync",
    "Context",
    "Envelope",
    "GatherCount",
    "Kind",
    "NewBoundary",
    "NewEdges",
    "ProcessId",
    "ProtocolError",
    "Runtime",
    "VertexMulticast",
    "check_trace",
]


class ProtocolError(RuntimeError):
    pass


class Kind(enum.IntEnum):
    EXPANSION = 0
    ALLOCATION = 1


@dataclass(frozen=True, order=True)
class ProcessId:
    kind: Kind
    index: int

    def __str__(self) -> str:
        return ("E" if self.kind == Kind.EXPANSION else "A") + str(self.index)

    @classmethod
    def expansion(cls, index: int) -> "ProcessId":
        return cls(Kind.EXPANSION, index)

    @classmethod
    def allocation(cls, index: int) -> "ProcessId":
        return cls(Kind.ALLOCATION, index)


# -- message payloads -------------------------------------------------------

@dataclass(frozen=True)
class VertexMulticast:
    vertices: tuple[int, ...]
    partition: int

    def __len__(self):
        return len(self.vertices)


@dataclass(frozen=True)
class BoundarySync:
    pairs: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class NewBoundary:
    # (vertex, partition, local unallocated degree)
    entries: tuple[tuple[int, int, int], ...]

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class NewEdges:
    # global edge indices, all allocated to ``partition``
    edges: tuple[int, ...]
    partition: int

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class GatherCount:
    value: int

    def __len__(self):
        return 1


@dataclass(frozen=True)
class Envelope:
    iteration: int
    phase: str
    sender: ProcessId
    receiver: ProcessId
    seq: int
    payload: object


# -- tokens yielded by processes ----------------------------------------------

@dataclass(frozen=True)
class Barrier:
    pid: ProcessId
    iteration: int


@dataclass(frozen=True)
class AllGatherSum:
    pid: ProcessId
    iteration: int
    value: int


_STOPPED = object()


class Context:
    """A process's handle on the runtime."""

    def __init__(self, runtime: "Runtime", pid: ProcessId):
        self.runtime = runtime
        self.pid = pid
        self.iteration = 0
        self.phase = "init"
        self._seq = 0
        self._inbox: list[Envelope] = []

    def send(self, target: ProcessId, msg) -> None:
        self.multicast((target,), msg)

    def multicast(self, targets: Iterable[ProcessId], msg) -> None:
        targets = tuple(targets)
        if not targets:
            raise ProtocolError(f"{self.pid}: multicast with no targets")
        known = self.runtime._known
        envs = []
        for t in dict.fromkeys(targets):
            if t not in known:
                raise ProtocolError(f"{self.pid}: unknown target {t}")
            envs.append(Envelope(self.iteration, self.phase, self.pid, t, self._seq, msg))
            self._seq += 1
        self.runtime._post(envs)

    def receive(self) -> list[Envelope]:
        inbox, self._inbox = self._inbox, []
        return inbox

    def barrier(self) -> Barrier:
        return Barrier(self.pid, self.iteration)

    def all_gather_sum(self, local: int) -> AllGatherSum:
        return AllGatherSum(self.pid, self.iteration, int(local))


ProcessFn = Callable[[Context], Generator]


class Runtime:
    def __init__(
        self,
        pids: Iterable[ProcessId],
        mode: str = "deterministic",
        workers: int | None = None,
        trace: IO[str] | None = None,
    ):
        if mode not in ("deterministic", "parallel"):
            raise ValueError(f"unknown mode {mode!r}")
        self.pids = sorted(set(pids))
        self._known = frozenset(self.pids)
        self.mode = mode
        self.trace = trace
        if mode == "deterministic":
            workers = 1
        self.workers = max(1, min(workers or len(self.pids), len(self.pids)))
        self.contexts = {pid: Context(self, pid) for pid in self.pids}
        self._pending: list[Envelope] = []
        self._lock = threading.Lock()
        self._tokens: dict[ProcessId, object] = {}
        self._results: dict[ProcessId, int | None] = {}
        self._done = False
        self._error: BaseException | None = None
        self.barriers = 0
        self.delivered = 0

    # -- messaging -----------------------------------------------------------

    def _post(self, envs: list[Envelope]) -> None:
        if self.workers == 1:
            self._pending.extend(envs)
        else:
            with self._lock:
                self._pending.extend(envs)

    def _deliver(self) -> None:
        pending, self._pending = self._pending, []
        if self.mode == "deterministic":
            pending.sort(key=lambda e: (e.sender, e.seq))
        for pid, ctx in self.contexts.items():
            if ctx._inbox:
                raise ProtocolError(
                    f"{pid}: {len(ctx._inbox)} message(s) not received before barrier "
                    f"(iteration {ctx._inbox[0].iteration}, phase {ctx._inbox[0].phase})"
                )
        for env in pending:
            self.contexts[env.receiver]._inbox.append(env)
            if self.trace is not None:
                self.trace.write(
                    f"{env.iteration} {env.phase} {env.sender} {env.receiver} "
                    f"{type(env.payload).__name__} {len(env.payload)}\n"
                )
        self.delivered += len(pending)

    # -- synchronization -----------------------------------------------------

    def _resolve(self) -> None:
        tokens = self._tokens
        stopped = [pid for pid, t in tokens.items() if t is _STOPPED]
        if len(stopped) == len(tokens):
            if self._pending:
                raise ProtocolError(f"{len(self._pending)} message(s) sent after the last barrier")
            self._done = True
            return
        if stopped:
            waiting = sorted(pid for pid in tokens if pid not in stopped)
            raise ProtocolError(
                "deadlock: process(es) "
                + ", ".join(map(str, sorted(stopped)))
                + f" exited while {len(waiting)} process(es) wait at iteration "
                + str(tokens[waiting[0]].iteration)
            )
        iterations = {t.iteration for t in tokens.values()}
        if len(iterations) != 1:
            detail = ", ".join(f"{pid}@{t.iteration}" for pid, t in sorted(tokens.items()))
            raise ProtocolError(f"iteration mismatch at barrier: {detail}")
        total = sum(t.value for t in tokens.values() if isinstance(t, AllGatherSum))
        gathered = [pid for pid, t in tokens.items() if isinstance(t, AllGatherSum)]
        if gathered and self.trace is not None:
            it = next(iter(iterations))
            for pid in sorted(gathered):
                self.trace.write(f"{it} gather {pid} * GatherCount 1\n")
        self._results = {
            pid: (total if isinstance(t, AllGatherSum) else None) for pid, t in tokens.items()
        }
        self._tokens = {}
        self.barriers += 1
        self._deliver()

    def _step(self, gens: dict, send_vals: dict) -> dict:
        tokens = {}
        for pid, gen in gens.items():
            try:
                tok = gen.send(send_vals.get(pid))
            except StopIteration:
                tok = _STOPPED
            else:
                if not isinstance(tok, (Barrier, AllGatherSum)) or tok.pid != pid:
                    raise ProtocolError(f"{pid}: yielded {tok!r}, expected its own barrier token")
            tokens[pid] = tok
        return tokens

    def run(self, processes: Mapping[ProcessId, ProcessFn]) -> None:
        """Start one generator per process and drive them to completion."""
        missing = self._known.difference(processes)
        if missing:
            raise ProtocolError("no process body for " + ", ".join(map(str, sorted(missing))))
        gens = {pid: processes[pid](self.contexts[pid]) for pid in self.pids}
        if self.workers == 1:
            self._run_single(gens)
        else:
            self._run_threads(gens)

    def _run_single(self, gens: dict) -> None:
        send_vals: dict = {}
        active = dict(gens)
        while True:
            tokens = self._step(active, send_vals)
            self._tokens.update(tokens)
            # stopped processes keep reporting as stopped
            for pid in gens:
                self._tokens.setdefault(pid, _STOPPED)
            self._resolve()
            if self._done:
                return
            active = {pid: g for pid, g in active.items() if tokens[pid] is not _STOPPED}
            send_vals = self._results

    def _run_threads(self, gens: dict) -> None:
        groups: list[dict] = [dict() for _ in range(self.workers)]
        for i, pid in enumerate(self.pids):
            groups[i % self.workers][pid] = gens[pid]
        all_pids = list(gens)

        def action():
            try:
                for pid in all_pids:
                    self._tokens.setdefault(pid, _STOPPED)
                self._resolve()
            except BaseException as exc:
                self._error = exc
                raise

        barrier = threading.Barrier(self.workers, action=action)

        def worker(group: dict):
            send_vals: dict = {}
            active = dict(group)
            try:
                while True:
                    tokens = self._step(active, send_vals)
                    with self._lock:
                        self._tokens.update(tokens)
                    barrier.wait()
                    if self._done:
                        return
                    active = {pid: g for pid, g in active.items() if tokens[pid] is not _STOPPED}
                    send_vals = self._results
            except threading.BrokenBarrierError:
                return
            except BaseException as exc:
                with self._lock:
                    if self._error is None:
                        self._error = exc
                barrier.abort()

        threads = [threading.Thread(target=worker, args=(g,), daemon=True) for g in groups]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if self._error is not None:
            raise self._error


def check_trace(
    lines: Iterable[str],
    phase_order: Mapping[str, int],
    variant_phase: Mapping[str, str] | None = None,
) -> list[str]:
    """Return phase-ordering violations found in a delivery trace.

    Deliveries must be nondecreasing in (iteration, phase rank); when
    ``variant_phase`` is given each message variant must travel in its phase.
    """
    problems = []
    last = (-1, -1)
    for n, line in enumerate(lines, start=1):
        parts = line.split()
        if len(parts) != 6:
            problems.append(f"line {n}: malformed {line!r}")
            continue
        it, phase, _, _, variant, _ = parts
        if phase not in phase_order:
            problems.append(f"line {n}: unknown phase {phase}")
            continue
        key = (int(it), phase_order[phase])
        if key < last:
            problems.append(f"line {n}: {phase}@{it} delivered after phase rank {last[1]}@{last[0]}")
        last = max(last, key)
        if variant_phase is not None and variant_phase.get(variant, phase) != phase:
            problems.append(f"line {n}: {variant} delivered in phase {phase}")
    return problems

