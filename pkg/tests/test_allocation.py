import threading

import numpy as np
import pytest

from distne.allocation import (
    UNALLOCATED,
    AllocationBatch,
    AllocationShard,
    final_leftover_sweep,
    merge_sync,
    sync_messages,
    sync_vertex_allocations,
)
from distne.graph import GridPlacement, RmatParams, build_csr, generate_rmat, place_edges_2d


def _shard(edges, n=None, parts=4, threadsafe=False):
    n = n if n is not None else max(max(e) for e in edges) + 1
    return AllocationShard(0, build_csr(edges, n), parts, threadsafe=threadsafe)


def _owner_of(shard, u, v):
    for e in range(shard.num_edges):
        if {shard.src[e], shard.dst[e]} == {u, v}:
            return shard.owner[e]
    raise KeyError((u, v))


def test_one_hop_single_claimer():
    sh = _shard([(0, 1), (0, 2), (0, 3), (2, 3)])
    bp, ep = sh.allocate_one_hop(AllocationBatch(((0, 1),)))
    assert sorted(bp) == [(1, 1), (2, 1), (3, 1)]
    assert len(ep) == 3 and {p for _, p in ep} == {1}
    assert sh.counts[1] == 3
    assert _owner_of(sh, 2, 3) == UNALLOCATED


def test_one_hop_nothing_left():
    sh = _shard([(0, 1)])
    sh.allocate_one_hop([(0, 2)])
    assert sh.allocate_one_hop([(0, 3)]) == ([], [])
    assert sh.allocate_one_hop([(1, 3)]) == ([], [])


def test_one_hop_first_writer_wins_and_duplicates_are_idempotent():
    sh = _shard([(0, 1), (1, 2)])
    bp, ep = sh.allocate_one_hop([(1, 0), (1, 0), (1, 3)])
    assert _owner_of(sh, 0, 1) == 0 and _owner_of(sh, 1, 2) == 0
    assert sorted(bp) == [(0, 0), (2, 0)]


def test_one_hop_does_not_report_known_tags():
    sh = _shard([(0, 1), (1, 2), (0, 3)])
    sh.allocate_one_hop([(0, 2)])  # tags 1 and 3 with 2
    bp, ep = sh.allocate_one_hop([(2, 2)])  # claims (1,2) but 1 already carries 2
    assert len(ep) == 1
    assert bp == []


def test_one_hop_arbiter_decides_contested_edges():
    sh = _shard([(0, 1)])
    bp, ep = sh.allocate_one_hop([(0, 1), (1, 3)], arbiter=lambda gid, parts: 3)
    assert ep == [(0, 3)]
    assert bp == [(0, 3)]


def test_one_hop_arbiter_must_pick_a_contender():
    sh = _shard([(0, 1)])
    with pytest.raises(ValueError):
        sh.allocate_one_hop([(0, 1), (1, 3)], arbiter=lambda gid, parts: 2)


def test_concurrent_one_hop_needs_threadsafe_shard():
    sh = _shard([(0, 1), (1, 2)])
    with pytest.raises(ValueError):
        sh.allocate_one_hop([(0, 1), (1, 2)], workers=2)


def test_concurrent_one_hop_single_ownership():
    g = generate_rmat(RmatParams(9, 8, seed=2))
    sh = AllocationShard(0, build_csr(g.edges, g.vertex_count), 8, threadsafe=True)
    rng = np.random.default_rng(0)
    batch = [(int(v), int(p)) for v, p in zip(rng.integers(0, g.vertex_count, 400), rng.integers(0, 8, 400))]
    bp, ep = sh.allocate_one_hop(batch, workers=4)
    claimed = [e for e, _ in ep]
    assert len(claimed) == len(set(claimed))
    for e, p in ep:
        assert sh.owner[e] == p
    assert sum(sh.counts) == len(ep)


def test_raw_claim_race():
    sh = _shard([(0, 1), (1, 2), (2, 3)], parts=8, threadsafe=True)
    wins = []
    lock = threading.Lock()
    start = threading.Barrier(8)

    def racer(p):
        start.wait()
        for e in range(3):
            if sh.claim(e, p):
                with lock:
                    wins.append(e)

    ts = [threading.Thread(target=racer, args=(p,)) for p in range(8)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert sorted(wins) == [0, 1, 2]
    assert sum(sh.counts) == 3


def test_two_hop_claims_common_tag():
    # mirrors the blue-tagged pair scenario: u and w both tagged only by 1
    sh = _shard([(5, 6), (5, 7)], parts=3)
    sh.apply_tags([(5, 1), (6, 1)])
    ep = sh.allocate_two_hop([(5, 1)])
    assert len(ep) == 1 and ep[0][1] == 1
    assert _owner_of(sh, 5, 6) == 1
    assert _owner_of(sh, 5, 7) == UNALLOCATED


def test_two_hop_disjoint_tags_untouched():
    sh = _shard([(0, 1)], parts=3)
    sh.apply_tags([(0, 1), (1, 2)])
    assert sh.allocate_two_hop([(0, 1), (1, 2)]) == []


def test_two_hop_argmin_local_count():
    sh = _shard([(0, 1)], parts=3)
    sh.counts[1], sh.counts[2] = 10, 7
    sh.apply_tags([(0, 1), (0, 2), (1, 1), (1, 2)])
    assert sh.allocate_two_hop([(0, 1)]) == [(0, 2)]


def test_two_hop_tie_goes_to_smaller_id():
    sh = _shard([(0, 1)], parts=4)
    sh.counts[1] = sh.counts[3] = 4
    sh.apply_tags([(0, 1), (0, 3), (1, 1), (1, 3)])
    assert sh.allocate_two_hop([(1, 3)]) == [(0, 1)]


def test_local_drest():
    sh = _shard([(0, 1), (0, 2), (0, 3), (0, 4), (5, 6)], parts=2)
    sh.allocate_one_hop([(1, 0)])
    assert sh.compute_local_drest([(0, 0), (1, 0)]) == [(0, 0, 3), (1, 0, 0)]


def test_local_drest_matches_scan():
    g = generate_rmat(RmatParams(8, 8, seed=6))
    sh = AllocationShard(0, build_csr(g.edges, g.vertex_count), 4)
    rng = np.random.default_rng(1)
    sh.allocate_one_hop([(int(v), int(rng.integers(4))) for v in rng.integers(0, g.vertex_count, 30)])
    verts = range(g.vertex_count)
    got = sh.compute_local_drest([(v, 0) for v in verts])
    for v, _, d in got:
        scan = sum(1 for e in range(sh.num_edges) if sh.owner[e] == UNALLOCATED and v in (sh.src[e], sh.dst[e]))
        assert d == scan


def _grid_shards(g, P, seed=0):
    grid = GridPlacement.for_procs(P, seed)
    return [
        AllocationShard(s, build_csr(g.edges[idx], g.vertex_count, idx), P, grid)
        for s, idx in enumerate(place_edges_2d(g, P, seed))
    ], grid


def test_sync_reaches_every_replica():
    g = generate_rmat(RmatParams(6, 4, seed=1))
    shards, grid = _grid_shards(g, 9)
    v = int(g.edges[0, 0])
    reps = grid.replicas(v)
    assert len(reps) == 5
    src = reps[0]
    shards[src].apply_tags([(v, 2)])
    sync_vertex_allocations(shards, [[(v, 2)] if s.index == src else [] for s in shards])
    for s in reps:
        assert 2 in shards[s].partitions_of(v)


def test_sync_without_tags_sends_nothing():
    g = generate_rmat(RmatParams(5, 4, seed=1))
    shards, _ = _grid_shards(g, 4)
    assert all(sync_messages(s, []) == {} for s in shards)


def test_merge_rejects_tags_for_foreign_vertices():
    g = generate_rmat(RmatParams(6, 4, seed=1))
    shards, grid = _grid_shards(g, 9)
    v = next(x for x in range(g.vertex_count) if 0 not in grid.replicas(x))
    with pytest.raises(RuntimeError, match="non-replica"):
        merge_sync(shards[0], [], [(v, 1)])


def test_replica_coherence_after_random_rounds():
    g = generate_rmat(RmatParams(8, 8, seed=3))
    P = 6
    shards, grid = _grid_shards(g, P)
    rng = np.random.default_rng(8)
    for _ in range(4):
        bps = []
        for s in shards:
            batch = [(int(v), int(rng.integers(P))) for v in rng.integers(0, g.vertex_count, 10)]
            bps.append(s.allocate_one_hop(batch)[0])
        new = sync_vertex_allocations(shards, bps)
        for s, b in zip(shards, new):
            s.allocate_two_hop(b)
    for v in range(g.vertex_count):
        tagsets = {frozenset(shards[s].partitions_of(v)) for s in grid.replicas(v)}
        assert len(tagsets) == 1


def test_leftover_sweep_nothing_left():
    sh = _shard([(0, 1)], parts=2)
    sh.allocate_one_hop([(0, 0)])
    assert final_leftover_sweep([sh], [1, 0]) == []


def test_leftover_sweep_prefers_covering_partition():
    sh = _shard([(0, 1), (1, 2), (3, 4)], parts=4)
    sh.allocate_one_hop([(0, 3)])  # (0,1) -> 3 covers vertex 1
    sizes = [0, 0, 0, 1]
    out = dict(final_leftover_sweep([sh], sizes))
    gid = {(sh.src[e], sh.dst[e]): sh.gid[e] for e in range(sh.num_edges)}
    assert out[gid[(1, 2)]] == 3
    assert out[gid[(3, 4)]] == 0
    assert sizes == [1, 0, 0, 2]


def test_leftover_sweep_after_cap_exhaustion_is_complete():
    g = generate_rmat(RmatParams(8, 8, seed=9))
    shards, _ = _grid_shards(g, 4)
    rng = np.random.default_rng(2)
    for s in shards:
        s.allocate_one_hop([(int(v), int(rng.integers(4))) for v in rng.integers(0, g.vertex_count, 5)])
    sizes = [0] * 4
    for s in shards:
        for o in s.owner:
            if o >= 0:
                sizes[o] += 1
    final_leftover_sweep(shards, sizes)
    owned = sorted(s.gid[e] for s in shards for e in range(s.num_edges) if s.owner[e] >= 0)
    assert owned == list(range(g.num_edges))
    assert sum(sizes) == g.num_edges
