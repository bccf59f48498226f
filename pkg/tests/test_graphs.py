import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrgen import graphs as gr
from tests.helpers import (
    all_partitions,
    brute_force_modularity,
    clique_edges,
    partition_to_assign,
    random_graph,
    two_cliques_bridge,
)


def triangle_pair_bridge():
    """Two triangles 0-1-2 and 3-4-5 joined by edge (2,3)."""
    edges = clique_edges([0, 1, 2]) + clique_edges([3, 4, 5]) + [(2, 3, 1)]
    return gr.WeightedGraph(6, tuple(edges), leaf=True)


# ---------------------------------------------------------------------------
# data model


def test_graph_invariants():
    with pytest.raises(ValueError):
        gr.WeightedGraph(2, ((0, 1, 0),))
    with pytest.raises(ValueError):
        gr.WeightedGraph(2, ((0, 2, 1),))
    with pytest.raises(ValueError):
        gr.WeightedGraph(2, ((0, 1, 1), (0, 1, 2)))
    with pytest.raises(ValueError):
        gr.WeightedGraph(2, ((1, 1, 1),), leaf=True)
    g = gr.WeightedGraph(2, ((1, 1, 3),), leaf=False)
    assert g.total_weight == 3


def test_strengths_double_self_loops():
    g = gr.WeightedGraph(2, ((0, 0, 2), (0, 1, 1)))
    assert g.strengths().tolist() == [5, 1]


def test_assignment_requires_compact_ids():
    with pytest.raises(ValueError):
        gr.CommunityAssignment((0, 2), 3)
    a = gr.CommunityAssignment.from_labels([5, 5, 9])
    assert a.assign == (0, 0, 1)


# ---------------------------------------------------------------------------
# modularity & louvain


def test_modularity_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(20):
        g = random_graph(rng, 7, 0.4)
        if g.total_weight == 0:
            continue
        assign = rng.integers(0, 3, size=g.n)
        assign = gr.CommunityAssignment.from_labels(assign.tolist()).assign
        assert gr.modularity(g, assign) == pytest.approx(brute_force_modularity(g, assign))


def test_modularity_with_self_loops_matches_brute_force():
    g = gr.WeightedGraph(3, ((0, 0, 4), (0, 1, 2), (1, 2, 1), (2, 2, 3)))
    for assign in ([0, 0, 0], [0, 1, 1], [0, 0, 1], [0, 1, 2], [0, 1, 0]):
        assert gr.modularity(g, assign) == pytest.approx(brute_force_modularity(g, assign))


def test_louvain_two_cliques():
    g = two_cliques_bridge(5)
    a = gr.louvain(g)
    assert a.num_communities == 2
    assert len(set(a.assign[:5])) == 1 and len(set(a.assign[5:])) == 1
    # brute-force check: the clique split beats the single community and singletons
    clique_q = brute_force_modularity(g, a.assign)
    assert clique_q > brute_force_modularity(g, [0] * 10)
    assert clique_q > brute_force_modularity(g, list(range(10)))


def test_louvain_single_node():
    a = gr.louvain(gr.WeightedGraph(1, (), leaf=True))
    assert a.num_communities == 1


def test_louvain_edgeless():
    a = gr.louvain(gr.WeightedGraph(4, (), leaf=True))
    assert a.num_communities == 4


def test_louvain_triangle_is_one_community():
    g = gr.WeightedGraph(3, tuple(clique_edges([0, 1, 2])), leaf=True)
    a = gr.louvain(g)
    assert a.num_communities == 1
    # enumerate all partitions of 3 nodes: none beats all-in-one (Q=0)
    best = max(
        brute_force_modularity(g, partition_to_assign(3, p)) for p in all_partitions(range(3))
    )
    assert best == pytest.approx(0.0)


def test_louvain_beats_singletons_randomly():
    rng = np.random.default_rng(9)
    for _ in range(10):
        g = random_graph(rng, 12, 0.3)
        if g.total_weight == 0:
            continue
        a = gr.louvain(g)
        assert gr.modularity(g, a.assign) >= gr.modularity(g, range(g.n)) - 1e-12


def test_louvain_deterministic():
    rng = np.random.default_rng(13)
    g = random_graph(rng, 20, 0.2)
    assert gr.louvain(g) == gr.louvain(g)


# ---------------------------------------------------------------------------
# coarsen_once


def test_coarsen_triangles_example():
    g = triangle_pair_bridge()
    a = gr.CommunityAssignment((0, 0, 0, 1, 1, 1), 2)
    coarse, pmap = gr.coarsen_once(g, a)
    assert coarse.n == 2
    assert set(coarse.edges) == {(0, 0, 3), (0, 1, 1), (1, 1, 3)}
    assert coarse.total_weight == g.total_weight == 7
    assert pmap == (0, 0, 0, 1, 1, 1)


def test_coarsen_identity_partition():
    g = gr.WeightedGraph(3, ((0, 0, 2), (0, 1, 1), (1, 2, 4)))
    coarse, _ = gr.coarsen_once(g, gr.CommunityAssignment.singletons(3))
    assert coarse.n == g.n and set(coarse.edges) == set(g.edges)


def test_coarsen_k4_single_community():
    g = gr.WeightedGraph(4, tuple(clique_edges(range(4))), leaf=True)
    coarse, _ = gr.coarsen_once(g, gr.CommunityAssignment.all_in_one(4))
    assert coarse.n == 1 and coarse.edges == ((0, 0, 6),)


def test_coarsen_is_pure():
    rng = np.random.default_rng(3)
    g = random_graph(rng, 10, 0.4)
    a = gr.louvain(g)
    assert gr.coarsen_once(g, a) == gr.coarsen_once(g, a)


# ---------------------------------------------------------------------------
# build_hierarchy


def test_hierarchy_triangle_pair():
    hg = gr.build_hierarchy(triangle_pair_bridge(), target_depth=2)
    assert hg.depth == 2
    assert [g.n for g in hg.levels] == [1, 2, 6]
    assert all(g.total_weight == 7 for g in hg.levels)


def test_hierarchy_single_node_leaf():
    hg = gr.build_hierarchy(gr.WeightedGraph(1, (), leaf=True), target_depth=1)
    assert hg.depth == 1
    assert hg.levels[0].total_weight == 0


def test_hierarchy_weight_conservation_random():
    rng = np.random.default_rng(17)
    for _ in range(15):
        g = random_graph(rng, int(rng.integers(2, 25)), 0.3)
        hg = gr.build_hierarchy(g, target_depth=int(rng.integers(1, 4)))
        totals = {lv.total_weight for lv in hg.levels}
        assert len(totals) == 1


def test_hierarchy_splice_keeps_leaf_side():
    # nested structure: 4 triangles pairing into 2 super-communities
    blocks = [clique_edges(range(3 * i, 3 * i + 3)) for i in range(4)]
    extra = [(0, 3, 1), (6, 9, 1), (2, 8, 1)]
    g = gr.WeightedGraph(12, tuple(sum(blocks, []) + extra), leaf=True)
    deep = gr.build_hierarchy(g, target_depth=3)
    shallow = gr.build_hierarchy(g, target_depth=2)
    if deep.depth == 3:  # natural chain deeper than 2
        assert shallow.levels[-1] == deep.levels[-1]
        assert shallow.levels[-2] == deep.levels[-2]
        assert shallow.levels[0].n == 1


def test_hierarchy_pads_shallow_chains():
    g = gr.WeightedGraph(3, tuple(clique_edges(range(3))), leaf=True)
    hg = gr.build_hierarchy(g, target_depth=3)
    assert hg.depth == 3
    assert hg.levels[1].n == hg.levels[2].n
    assert [lv.total_weight for lv in hg.levels] == [3, 3, 3, 3]
    # identity padding: middle map is the identity
    assert hg.parents[1] == tuple(range(hg.levels[2].n))


def test_hierarchy_depth_validation():
    with pytest.raises(ValueError):
        gr.build_hierarchy(triangle_pair_bridge(), target_depth=0)
    with pytest.raises(ValueError):
        gr.build_hierarchy(gr.WeightedGraph(2, ((0, 1, 1),), leaf=False), target_depth=1)


# ---------------------------------------------------------------------------
# blocks + ordering


def test_extract_blocks_triangle_pair():
    hg = gr.build_hierarchy(triangle_pair_bridge(), target_depth=2)
    blocks = gr.extract_blocks(hg, 2)
    parts = [b for b in blocks if b.kind == "partition"]
    bips = [b for b in blocks if b.kind == "bipartite"]
    assert len(parts) == 2 and len(bips) == 1
    assert sorted(len(b.edges) for b in parts) == [3, 3]
    assert len(bips[0].edges) == 1


def test_blocks_partition_edge_multiset():
    rng = np.random.default_rng(23)
    for _ in range(10):
        g = random_graph(rng, 18, 0.25)
        hg = gr.build_hierarchy(g, target_depth=2)
        for level in (1, 2):
            blocks = gr.extract_blocks(hg, level)
            union = sorted(e for b in blocks for e in b.edges)
            assert union == sorted(hg.levels[level].edges)


def test_no_cross_edges_no_bipartites():
    g = gr.WeightedGraph(6, tuple(clique_edges(range(3)) + clique_edges(range(3, 6))), leaf=True)
    hg = gr.build_hierarchy(g, target_depth=2)
    assert all(b.kind == "partition" for b in gr.extract_blocks(hg, 2))


def test_bfs_order_path_with_forced_start():
    block = gr.SubgraphBlock("partition", 1, 0, (0, 1, 2), ((0, 1, 1), (1, 2, 1)))
    assert gr.bfs_weighted_order(block, start=0) == (0, 1, 2)
    # default rule starts at the max-degree midpoint
    assert gr.bfs_weighted_order(block) == (1, 0, 2)


def test_bfs_order_star():
    block = gr.SubgraphBlock(
        "partition", 1, 0, (0, 1, 2, 3), ((0, 1, 1), (0, 2, 1), (0, 3, 1))
    )
    assert gr.bfs_weighted_order(block) == (0, 1, 2, 3)


def test_bfs_order_weighted_triangle():
    block = gr.SubgraphBlock(
        "partition", 1, 0, (0, 1, 2), ((0, 1, 5), (0, 2, 1), (1, 2, 1))
    )
    assert gr.bfs_weighted_order(block) == (0, 1, 2)


def test_bfs_order_is_permutation():
    rng = np.random.default_rng(31)
    for _ in range(20):
        g = random_graph(rng, 9, 0.3)
        hg = gr.build_hierarchy(g, target_depth=1)
        for b in gr.extract_blocks(hg, 1):
            if b.kind == "partition" and b.nodes:
                order = gr.bfs_weighted_order(b)
                assert sorted(order) == sorted(b.nodes)


def test_bfs_order_empty_block_raises():
    with pytest.raises(ValueError):
        gr.bfs_weighted_order(gr.SubgraphBlock("partition", 1, 0, (), ()))


def test_ordering_invariance_of_blocks():
    """Permutations preserving community membership and in-community order
    reproduce the same local block structure at every level."""
    rng = np.random.default_rng(37)
    g = two_cliques_bridge(4)
    hg = gr.build_hierarchy(g, target_depth=2)
    assign = hg.parents[-1]

    # interleave communities while keeping each community's id order
    comm_nodes = [[v for v in range(g.n) if assign[v] == c] for c in range(hg.levels[-2].n)]
    perm = [0] * g.n  # old -> new
    slots = iter(np.argsort(rng.permutation(g.n)).tolist())
    new_of_old = {}
    pos = 0
    order = []
    while any(comm_nodes):
        c = int(rng.integers(0, len(comm_nodes)))
        if comm_nodes[c]:
            order.append(comm_nodes[c].pop(0))
    for new_id, old in enumerate(order):
        new_of_old[old] = new_id
    g2 = gr.WeightedGraph(
        g.n,
        tuple(sorted(
            (min(new_of_old[u], new_of_old[v]), max(new_of_old[u], new_of_old[v]), w)
            for u, v, w in g.edges
        )),
        leaf=True,
    )
    assign2 = [0] * g.n
    for old, new in new_of_old.items():
        assign2[new] = assign[old]
    hg2 = gr.HierarchicalGraph(
        levels=hg.levels[:-1] + (g2,), parents=hg.parents[:-1] + (tuple(assign2),)
    )

    def local(block, order_fn):
        order = order_fn(block)
        idx = {v: i for i, v in enumerate(order)}
        return sorted((min(idx[u], idx[v]), max(idx[u], idx[v]), w) for u, v, w in block.edges)

    b1 = [b for b in gr.extract_blocks(hg, 2) if b.kind == "partition"]
    b2 = [b for b in gr.extract_blocks(hg2, 2) if b.kind == "partition"]
    for x, y in zip(b1, b2):
        assert local(x, gr.bfs_weighted_order) == local(y, gr.bfs_weighted_order)


# ---------------------------------------------------------------------------
# serialization


def test_serialize_round_trip():
    hg = gr.build_hierarchy(triangle_pair_bridge(), target_depth=2)
    assert gr.deserialize(gr.serialize(hg)) == hg


def test_serialize_round_trip_edgeless_leaf():
    hg = gr.build_hierarchy(gr.WeightedGraph(3, (), leaf=True), target_depth=1)
    assert gr.deserialize(gr.serialize(hg)) == hg


def test_deserialize_truncated_is_parse_error():
    data = gr.serialize(gr.build_hierarchy(triangle_pair_bridge(), 2))
    with pytest.raises(gr.HGParseError):
        gr.deserialize(data[: len(data) // 2])


def test_deserialize_names_offending_field():
    with pytest.raises(gr.HGParseError, match="depth"):
        gr.deserialize(b'{"levels": [], "parent_node": []}')
    with pytest.raises(gr.HGParseError, match=r"levels\[0\]"):
        gr.deserialize(b'{"depth": 1, "levels": [{"n": 1, "leaf": false}, '
                       b'{"n": 1, "leaf": true, "edges": []}], "parent_node": [[0]]}')


def test_parse_edge_list():
    g = gr.parse_edge_list("0 5\n5 9 3\n# comment\n\n9 0\n")
    assert g.n == 3
    assert set(g.edges) == {(0, 1, 1), (1, 2, 3), (0, 2, 1)}
    assert g.leaf


def test_parse_edge_list_rejects_self_loop():
    with pytest.raises(gr.HGParseError, match="line 1"):
        gr.parse_edge_list("3 3\n")


def test_edge_list_round_trip():
    g = two_cliques_bridge(3)
    assert gr.parse_edge_list(gr.format_edge_list(g)) == g


@given(st.integers(2, 12), st.floats(0.1, 0.9), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_hierarchy_conservation_property(n, p, seed):
    g = random_graph(np.random.default_rng(seed), n, p)
    hg = gr.build_hierarchy(g, target_depth=2)
    assert len({lv.total_weight for lv in hg.levels}) == 1
    assert hg.levels[0].n == 1
