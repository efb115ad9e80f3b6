import numpy as np
import pytest

from distne.graph import Graph, RmatParams, generate_rmat


def erdos_renyi(n: int, m: int, seed: int) -> Graph:
    """G(n, m): m distinct random edges over n vertices."""
    rng = np.random.default_rng(seed)
    seen = set()
    while len(seen) < m:
        u, v = rng.integers(n, size=2).tolist()
        if u != v:
            seen.add((min(u, v), max(u, v)))
    return Graph.from_edges(sorted(seen), vertex_count=n)


def real_graphs() -> dict[str, Graph]:
    nx = pytest.importorskip("networkx")
    out = {}
    for name, make in [
        ("karate", nx.karate_club_graph),
        ("florentine", nx.florentine_families_graph),
        ("davis", nx.davis_southern_women_graph),
        ("lesmis", nx.les_miserables_graph),
    ]:
        g = nx.convert_node_labels_to_integers(make(), ordering="sorted")
        out[name] = Graph.from_edges(list(g.edges()), vertex_count=g.number_of_nodes())
    return out


def small_graphs() -> dict[str, Graph]:
    """Everything here has at most 200 edges."""
    graphs = {
        "path4": Graph.from_edges([(0, 1), (1, 2), (2, 3)]),
        "triangle": Graph.from_edges([(0, 1), (1, 2), (0, 2)]),
        "star9": Graph.from_edges([(0, i) for i in range(1, 10)]),
        "two-triangles": Graph.from_edges([(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], 7),
        "k6": Graph.from_edges([(a, b) for a in range(6) for b in range(a + 1, 6)]),
        "er-40-120": erdos_renyi(40, 120, 3),
        "er-100-150": erdos_renyi(100, 150, 4),
        "rmat-5-4": generate_rmat(RmatParams(5, 4, seed=2)),
        "rmat-6-3": generate_rmat(RmatParams(6, 3, seed=5)),
    }
    for name, g in real_graphs().items():
        if g.num_edges <= 200:
            graphs[name] = g
    assert all(g.num_edges <= 200 for g in graphs.values())
    return graphs


def brute_rf(edges, parts, num_vertices) -> float:
    covers: dict[int, set] = {}
    for (u, v), p in zip(edges, parts):
        covers.setdefault(p, set()).update((u, v))
    return sum(len(c) for c in covers.values()) / num_vertices


def brute_counts(edges, parts, num_parts):
    ecount = [0] * num_parts
    vsets = [set() for _ in range(num_parts)]
    for (u, v), p in zip(edges, parts):
        ecount[p] += 1
        vsets[p].update((u, v))
    return ecount, [len(s) for s in vsets]


def global_owner(engine) -> dict[int, int]:
    """Global edge id -> owning partition (or -1) read from every shard."""
    owner = {}
    for s in engine.shards:
        for e, o in enumerate(s.owner):
            owner[s.gid[e]] = o
    return owner


def replica_total(engine) -> int:
    """sum_p |V(E_p)| over the edges allocated so far."""
    pairs = set()
    for s in engine.shards:
        for e, o in enumerate(s.owner):
            if o >= 0:
                pairs.add((s.src[e], o))
                pairs.add((s.dst[e], o))
    return len(pairs)


# -- acceptance summary ----------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
