"""Per-partition greedy expansion state and vertex selection."""

from __future__ import annotations

import heapq
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable

log = logging.getLogger(__name__)

__all__ = [
    "Boundary",
    "ExpansionConfig",
    "ExpansionState",
    "expansion_count",
    "select_expansion_vertices",
    "update_boundary",
]


@dataclass(frozen=True)
class ExpansionConfig:
    alpha: float = 1.1
    lam: float = 0.1
    seed: int = 0
    # stop adding boundary vertices once their scores would overrun the cap
    budget_aware: bool = True

    def __post_init__(self):
        if not self.alpha >= 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must be in (0, 1], got {self.lam}")


class Boundary:
    """Min-priority set of ``(d_rest, vertex)`` with lazy deletion.

    Each vertex appears at most once; re-inserting replaces its score.
    """

    def __init__(self):
        self._heap: list[tuple[int, int]] = []
        self._score: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._score)

    def __contains__(self, v: int) -> bool:
        return v in self._score

    def __bool__(self) -> bool:
        return bool(self._score)

    def score(self, v: int) -> int:
        return self._score[v]

    def items(self) -> dict[int, int]:
        return dict(self._score)

    def insert(self, v: int, d_rest: int) -> None:
        if d_rest <= 0:
            self._score.pop(v, None)
            return
        if self._score.get(v) == d_rest:
            return
        self._score[v] = d_rest
        heapq.heappush(self._heap, (d_rest, v))
        if len(self._heap) > 4 * len(self._score) + 64:
            self._heap = [(d, u) for u, d in self._score.items()]
            heapq.heapify(self._heap)

    def pop_min(self) -> tuple[int, int]:
        heap, score = self._heap, self._score
        while heap:
            d, v = heapq.heappop(heap)
            if score.get(v) == d:
                del score[v]
                return v, d
        raise IndexError("pop from empty boundary")


@dataclass
class ExpansionState:
    partition: int
    cap: float
    edges: list[int] = field(default_factory=list)
    boundary: Boundary = field(default_factory=Boundary)
    iteration: int = 0
    history: list[tuple[int, int, int, int]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.edges)


def expansion_count(lam: float, boundary_size: int) -> int:
    """k = max(1, ceil(lam * |B|)); the product is rounded to absorb float noise."""
    return max(1, math.ceil(round(lam * boundary_size, 9)))


def select_expansion_vertices(
    state: ExpansionState,
    config: ExpansionConfig,
    rest_of: Callable[[int], int] | None = None,
    random_vertex: Callable[[], int | None] | None = None,
) -> list[int]:
    """Pop the k lowest-scored boundary vertices (ties to the lower id).

    ``rest_of(v)`` reads v's current unallocated degree; popped vertices that
    have none left are skipped. With an empty boundary a single vertex from
    ``random_vertex()`` is returned. An empty list means nothing is left to
    allocate anywhere.
    """
    b = state.boundary
    k = expansion_count(config.lam, len(b))
    budget = state.cap - state.size
    chosen: list[int] = []
    spent = 0
    while b and len(chosen) < k:
        v, d = b.pop_min()
        actual = d if rest_of is None else rest_of(v)
        if actual <= 0:
            continue
        if config.budget_aware and chosen and spent + actual > budget:
            b.insert(v, actual)
            break
        chosen.append(v)
        spent += actual
    if not chosen and random_vertex is not None:
        v = random_vertex()
        if v is not None:
            chosen.append(v)
    state.history.append((state.iteration, len(b) + len(chosen), state.size, len(chosen)))
    if log.isEnabledFor(logging.DEBUG):
        log.debug(
            "partition %d iteration %d |B|=%d |E_p|=%d k=%d",
            state.partition, state.iteration, len(b) + len(chosen), state.size, len(chosen),
        )
    return chosen


def update_boundary(state: ExpansionState, entries: Iterable[tuple[int, int]]) -> dict[int, int]:
    """Sum per-allocator contributions per vertex and insert the totals.

    Returns the summed scores (including zeros, which are not inserted).
    """
    sums: dict[int, int] = defaultdict(int)
    for v, d in entries:
        sums[v] += d
    for v, d in sums.items():
        state.boundary.insert(v, d)
    return dict(sums)
