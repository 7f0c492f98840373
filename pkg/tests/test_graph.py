"""Graph construction and weighted-Laplacian tests."""

import numpy as np
import pytest

from ppnsim import (
    ConfigError,
    NodeKind,
    PowerPhase,
    TopologySpec,
    build_graph,
    chain5_topology,
    edge_weight,
    trimesh9_topology,
    weighted_laplacian,
)


def brute_force_laplacian(n, weighted_edges, order):
    """Independent assembly straight from the definition: L[i][j] = -w_ij,
    L[i][i] = sum of incident weights."""
    L = [[0.0] * n for _ in range(n)]
    for a, b, w in weighted_edges:
        L[a][a] += w
        L[b][b] += w
        L[a][b] -= w
        L[b][a] -= w
    perm = [[L[i][j] for j in order] for i in order]
    return np.array(perm)


def test_chain5_shape():
    g = build_graph(chain5_topology())
    assert g.n_nodes == 5
    assert g.n_edges == 4
    kinds = [n.kind for n in g.nodes]
    assert kinds == [
        NodeKind.SOURCE,
        NodeKind.STORAGE,
        NodeKind.STORAGE,
        NodeKind.STORAGE,
        NodeKind.SINK,
    ]


def test_trimesh9_shape():
    g = build_graph(trimesh9_topology())
    assert g.n_nodes == 9
    assert g.n_edges == 12
    assert len(g.source_ids) == 1
    assert len(g.storage_ids) == 6
    assert len(g.sink_ids) == 2
    # sink paths hang off the bottom corners
    sink_edges = [(e.a, e.b) for e in g.edges if not e.switchable]
    assert sorted(sink_edges) == [(4, 7), (6, 8)]


def test_resistance_folding():
    g = build_graph(chain5_topology(), switch_resistance=1.0, load_resistance=50.0)
    # router-router paths: one switch per endpoint
    assert g.edges[0].line_resistance == pytest.approx(2.0)
    assert g.edges[0].weight == pytest.approx(0.5)
    # sink path: one switch plus the load
    assert g.edges[3].line_resistance == pytest.approx(51.0)
    assert g.edges[3].weight == pytest.approx(1.0 / 51.0)


def test_edge_weight_rules():
    g = build_graph(chain5_topology())
    e = g.edges[0]  # switchable, initially open
    assert edge_weight(e) == 0.0
    e.routed = True
    assert edge_weight(e, PowerPhase.PAYLOAD) == pytest.approx(0.5)
    assert edge_weight(e, PowerPhase.TAG) == 0.0
    e.routed = False
    sink = g.edges[3]  # always conducting
    assert edge_weight(sink, PowerPhase.TAG) == pytest.approx(1.0 / 51.0)
    assert edge_weight(sink) == pytest.approx(1.0 / 51.0)


def test_two_node_laplacian():
    spec = TopologySpec(
        nodes=[(0, NodeKind.SOURCE), (1, NodeKind.STORAGE), (2, NodeKind.SINK)],
        edges=[(0, 1, 0.0), (1, 2, 0.0)],
    )
    g = build_graph(spec)
    g.set_routed(0, True)
    blocks = weighted_laplacian(g)
    w, wk = 0.5, 1.0 / 51.0
    expected = np.array(
        [[w, -w, 0.0], [-w, w + wk, -wk], [0.0, -wk, wk]]
    )
    np.testing.assert_allclose(blocks.full, expected, atol=0)


def test_all_unrouted_leaves_only_sink_paths():
    g = build_graph(trimesh9_topology())
    blocks = weighted_laplacian(g)
    L22 = blocks.L22
    off_diag = L22 - np.diag(np.diag(L22))
    assert np.all(off_diag == 0.0)
    # only the two sink-connected storages have conductance
    diag = np.diag(L22)
    nz = {int(g.storage_ids[i]) for i in np.nonzero(diag)[0]}
    assert nz == {4, 6}


def test_chain_laplacian_matches_brute_force():
    g = build_graph(chain5_topology())
    for e in g.edges:
        e.routed = True
    blocks = weighted_laplacian(g)
    weighted = [(e.a, e.b, e.weight) for e in g.edges]
    expected = brute_force_laplacian(5, weighted, list(g.layer_order))
    np.testing.assert_array_equal(blocks.full, expected)


def test_laplacian_property_sweep():
    """Symmetry, zero row sums, PSD, tiling and routing idempotence over
    random switch patterns."""
    g = build_graph(trimesh9_topology())
    switchable = [i for i, e in enumerate(g.edges) if e.switchable]
    rng = np.random.Generator(np.random.Philox(key=np.array([3, 1], dtype=np.uint64)))
    for _ in range(100):
        pattern = rng.integers(0, 2, size=len(switchable))
        for ei, bit in zip(switchable, pattern):
            g.set_routed(ei, bool(bit))
        blocks = weighted_laplacian(g)
        full = blocks.full
        assert np.array_equal(full, full.T)
        assert np.abs(full.sum(axis=1)).max() < 1e-12
        eigs = np.linalg.eigvalsh(full)
        assert eigs.min() >= -1e-9
        tiled = np.block(
            [
                [blocks.L11, blocks.L12, blocks.L13],
                [blocks.L21, blocks.L22, blocks.L23],
                [blocks.L31, blocks.L32, blocks.L33],
            ]
        )
        assert np.array_equal(tiled, full)
        # zero eigenvalue count equals conducting components
        n_zero = int(np.sum(np.abs(eigs) < 1e-9))
        assert n_zero == _n_components(g)


def _n_components(g):
    adj = {i: [] for i in range(g.n_nodes)}
    for e in g.edges:
        if edge_weight(e) > 0:
            adj[e.a].append(e.b)
            adj[e.b].append(e.a)
    seen, comps = set(), 0
    for start in range(g.n_nodes):
        if start in seen:
            continue
        comps += 1
        stack = [start]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            stack.extend(adj[u])
    return comps


def test_route_unroute_restores_matrix():
    g = build_graph(trimesh9_topology())
    before = weighted_laplacian(g).full
    g.set_routed(0, True)
    g.set_routed(0, False)
    after = weighted_laplacian(g).full
    assert np.array_equal(before, after)


def test_build_errors():
    base = chain5_topology()
    with pytest.raises(ConfigError, match="disconnected"):
        build_graph(
            TopologySpec(
                nodes=base.nodes + [(5, NodeKind.STORAGE)], edges=base.edges
            )
        )
    with pytest.raises(ConfigError, match="duplicate"):
        build_graph(
            TopologySpec(nodes=base.nodes, edges=base.edges + [(1, 0, 0.0)])
        )
    with pytest.raises(ConfigError, match="unknown node"):
        build_graph(TopologySpec(nodes=base.nodes, edges=base.edges + [(1, 9, 0.0)]))
    with pytest.raises(ConfigError, match="self-loop"):
        build_graph(TopologySpec(nodes=base.nodes, edges=base.edges + [(2, 2, 0.0)]))
    with pytest.raises(ConfigError, match="at least one sink"):
        build_graph(
            TopologySpec(
                nodes=[(0, NodeKind.SOURCE), (1, NodeKind.STORAGE)],
                edges=[(0, 1, 0.0)],
            )
        )
    with pytest.raises(ConfigError, match="dense"):
        build_graph(
            TopologySpec(
                nodes=[(0, NodeKind.SOURCE), (2, NodeKind.STORAGE)],
                edges=[(0, 2, 0.0)],
            )
        )
