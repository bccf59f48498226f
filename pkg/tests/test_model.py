import logging
import math

import numpy as np
import pytest

from mrgen import dist
from mrgen import graphs as gr
from mrgen import model as md
from mrgen import ndiff
from tests.helpers import clique_edges, random_graph, rel_err, two_cliques_bridge


def tiny_hg():
    edges = clique_edges([0, 1, 2]) + clique_edges([3, 4, 5]) + [(2, 3, 1)]
    g = gr.WeightedGraph(6, tuple(edges), leaf=True)
    return gr.build_hierarchy(g, 2)


def tiny_model(seed=1, leaf_head="multihot", depth=2, shared=False, K=3):
    return md.init_model(
        seed=seed, depth=depth, input_width=8, d_h=6, K=K, gnn_layers=2,
        leaf_head=leaf_head, shared=shared,
    )


def fitted_model(**kw):
    m = tiny_model(**kw)
    md.fit_histograms(m, [tiny_hg()])
    return m


def zero_heads(m):
    """Zero all output-head parameters so activations hit their neutral points."""
    for lm in m.param_groups().values():
        for head in (lm.head_theta, lm.head_eta, lm.head_beta):
            for layer in head.layers:
                layer.w[:] = 0
                layer.b[:] = 0
    return m


# ---------------------------------------------------------------------------
# row / bipartite distributions


def test_zero_heads_give_neutral_distribution():
    m = zero_heads(fitted_model())
    lm = m.level(2)
    adj = np.zeros((4, 4), dtype=np.int64)
    adj[1, 0] = adj[0, 1] = 1
    rd = md.partition_row_distribution(lm, adj, 2, True, np.zeros(lm.d_h))
    np.testing.assert_allclose(rd.lam, 0.5)  # two candidates, uniform
    np.testing.assert_allclose(rd.eta, 0.5)
    np.testing.assert_allclose(rd.beta, 1.0 / lm.K)


def test_multihot_zero_logits_pair():
    logits = np.zeros((2, 1))
    out = md._edge_activation(logits, "multihot")
    np.testing.assert_allclose(out, 0.5)


def test_row_distribution_simplex_and_ranges():
    m = fitted_model()
    lm = m.level(2)
    adj = np.zeros((5, 5), dtype=np.int64)
    adj[1, 0] = adj[0, 1] = 1
    adj[2, 1] = adj[1, 2] = 1
    rd = md.partition_row_distribution(lm, adj, 3, True, np.ones(lm.d_h))
    np.testing.assert_allclose(rd.lam.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((rd.eta > 0) & (rd.eta < 1))
    assert rd.beta.sum() == pytest.approx(1.0)


def test_first_leaf_row_signals_skip():
    m = fitted_model()
    with pytest.raises(md.NoCandidateEdges):
        md.partition_row_distribution(m.level(2), np.zeros((3, 3), dtype=np.int64), 0, True, np.zeros(6))


def test_nonleaf_first_row_has_diagonal_candidate():
    m = fitted_model()
    lm = m.level(1)
    rd = md.partition_row_distribution(lm, np.zeros((2, 2), dtype=np.int64), 0, False, np.zeros(lm.d_h))
    assert rd.lam.shape == (lm.K, 1)
    np.testing.assert_allclose(rd.lam, 1.0)


def test_row_loglik_single_candidate_reduces_to_binomial():
    rd = md.RowDistribution(
        kind="multinomial", beta=np.array([1.0]), eta=np.array([0.3]), lam=np.array([[1.0]])
    )
    for v, rem in ((0, 4), (2, 5), (5, 5)):
        assert md.row_loglik(rd, [v], rem) == pytest.approx(dist.bi_logpmf(v, rem, 0.3))


def test_row_loglik_zero_remaining_is_certain():
    rd = md.RowDistribution(
        kind="multinomial", beta=np.array([0.5, 0.5]), eta=np.array([0.4, 0.9]),
        lam=np.array([[0.5, 0.5], [0.2, 0.8]]),
    )
    assert md.row_loglik(rd, [0, 0], 0) == pytest.approx(0.0, abs=1e-12)


def test_row_loglik_mixture_collapse_is_exact():
    # equal quarters with identical components must equal the K=1 value bitwise
    lam = np.array([0.25, 0.3, 0.45])
    one = md.RowDistribution(kind="multinomial", beta=np.array([1.0]), eta=np.array([0.6]),
                             lam=lam[None, :])
    four = md.RowDistribution(kind="multinomial", beta=np.full(4, 0.25), eta=np.full(4, 0.6),
                              lam=np.tile(lam, (4, 1)))
    u = [1, 0, 2]
    assert md.row_loglik(four, u, 5) == md.row_loglik(one, u, 5)


def test_row_loglik_monotone_in_candidate_probability():
    lam_hi = np.array([[0.6, 0.4]])
    lam_lo = np.array([[0.3, 0.7]])
    rd_hi = md.RowDistribution("multinomial", np.array([1.0]), np.array([0.5]), lam_hi)
    rd_lo = md.RowDistribution("multinomial", np.array([1.0]), np.array([0.5]), lam_lo)
    assert md.row_loglik(rd_hi, [2, 0], 2) > md.row_loglik(rd_lo, [2, 0], 2)


def test_row_chain_matches_group_chain_factorization():
    """Rows with the true multinomial parameters reproduce the grouped pmf."""
    rng = np.random.default_rng(3)
    n, w = 5, 9  # non-leaf block: rows are 0..n-1, candidates include diagonal
    sizes = [t + 1 for t in range(n)]
    E = sum(sizes)
    theta = rng.dirichlet(np.ones(E))
    x = dist.group_chain_sample(rng, w, theta, sizes)

    total = 0.0
    off = 0
    rem = w
    used = 0.0
    for t in range(n):
        seg = slice(off, off + sizes[t])
        mass = float(theta[seg].sum())
        eta = 1.0 if t == n - 1 else mass / (1.0 - used)
        lam = theta[seg] / mass
        rd = md.RowDistribution("multinomial", np.array([1.0]), np.array([eta]), lam[None, :])
        total += md.row_loglik(rd, x[seg], rem)
        rem -= int(x[seg].sum())
        used += mass
        off += sizes[t]
    assert total == pytest.approx(dist.group_chain_logpmf(x, w, theta, sizes), abs=1e-9)


def test_bipartite_1x1_certain():
    m = fitted_model()
    lm = m.level(2)
    bd = md.bipartite_distribution(lm, np.zeros((1, 1), dtype=np.int64),
                                   np.zeros((1, 1), dtype=np.int64), True, np.zeros(lm.d_h))
    assert md.bipartite_loglik(bd, [5], 5) == pytest.approx(0.0, abs=1e-12)


def test_bipartite_zero_candidates_error():
    m = fitted_model()
    with pytest.raises(ValueError):
        md.bipartite_distribution(m.level(2), np.zeros((0, 0), dtype=np.int64),
                                  np.zeros((1, 1), dtype=np.int64), True, np.zeros(6))


def test_bipartite_zero_heads_uniform():
    m = zero_heads(fitted_model())
    lm = m.level(2)
    bd = md.bipartite_distribution(lm, np.zeros((2, 2), dtype=np.int64),
                                   np.zeros((3, 3), dtype=np.int64), True, np.zeros(lm.d_h))
    np.testing.assert_allclose(bd.theta, 1.0 / 6.0)


# ---------------------------------------------------------------------------
# level / hierarchy likelihoods


def test_level_loglik_zero_weight_level():
    g = gr.WeightedGraph(4, (), leaf=True)
    hg = gr.build_hierarchy(g, 1)
    m = md.init_model(seed=0, depth=1, input_width=8, d_h=6, K=2, gnn_layers=1)
    md.fit_histograms(m, [hg])
    assert md.level_loglik(m, hg, 1) == pytest.approx(0.0, abs=1e-9)


def test_hg_loglik_is_block_additive():
    hg = tiny_hg()
    m = fitted_model()
    for l in (1, 2):
        whole = md.level_loglik(m, hg, l)
        parts = md.block_logliks(m, hg, l)
        assert whole == pytest.approx(sum(parts), abs=1e-9)
    root = math.log(1.0)  # single training graph: its root weight has probability 1
    assert md.hg_loglik(m, hg) == pytest.approx(
        root + sum(md.level_loglik(m, hg, l) for l in (1, 2)), abs=1e-9
    )


def test_batched_matches_single_row_path():
    """The fused per-level pass agrees with the one-row-at-a-time reference."""
    hg = tiny_hg()
    m = fitted_model()
    for l in (1, 2):
        lm = m.level(l)
        leaf = l == hg.depth
        parent_h = md._parent_context(lm, hg.levels[l - 1])
        total = 0.0
        for b in gr.extract_blocks(hg, l):
            if b.kind == "partition":
                order = gr.bfs_weighted_order(b)
                adj = md._block_local_adjacency(b, order)
                rem = b.parent_weight
                rows = range(1, len(order)) if leaf else range(len(order))
                for t in rows:
                    rd = md.partition_row_distribution(lm, adj, t, leaf, parent_h[b.parent])
                    cols = list(range(t)) + ([] if leaf else [t])
                    u = adj[t, cols]
                    total += md.row_loglik(rd, u, rem)
                    rem -= int(u.sum())
            else:
                i, j = b.parent
                oi = gr.bfs_weighted_order([x for x in gr.extract_blocks(hg, l) if x.parent == i][0])
                oj = gr.bfs_weighted_order([x for x in gr.extract_blocks(hg, l) if x.parent == j][0])
                adj_i = md._block_local_adjacency([x for x in gr.extract_blocks(hg, l) if x.parent == i][0], oi)
                adj_j = md._block_local_adjacency([x for x in gr.extract_blocks(hg, l) if x.parent == j][0], oj)
                pos_i = {v: p for p, v in enumerate(oi)}
                pos_j = {v: p for p, v in enumerate(oj)}
                cross = np.zeros((len(oi), len(oj)), dtype=np.int64)
                for u, v, w in b.edges:
                    if u in pos_i:
                        cross[pos_i[u], pos_j[v]] = w
                    else:
                        cross[pos_i[v], pos_j[u]] = w
                bd = md.bipartite_distribution(lm, adj_i, adj_j, leaf, parent_h[i] - parent_h[j])
                total += md.bipartite_loglik(bd, cross.reshape(-1), b.parent_weight)
        assert md.level_loglik(m, hg, l) == pytest.approx(total, abs=1e-9)


def test_unseen_root_weight_is_minus_inf(caplog):
    m = fitted_model()
    other = gr.build_hierarchy(two_cliques_bridge(4), 2)
    with caplog.at_level(logging.WARNING):
        ll = md.hg_loglik(m, other)
    assert ll == float("-inf")
    assert any("root weight" in r.message for r in caplog.records)


def test_depth_mismatch_rejected():
    m = fitted_model()
    hg1 = gr.build_hierarchy(two_cliques_bridge(3), 1)
    with pytest.raises(ValueError):
        md.hg_loglik(m, hg1)


def test_ordering_invariance_bit_identical():
    """Interleaving communities without touching in-community order must leave
    the hierarchy log-likelihood bit-identical."""
    rng = np.random.default_rng(11)
    g = two_cliques_bridge(4)
    hg = gr.build_hierarchy(g, 2)
    assign = hg.parents[-1]
    m = tiny_model(seed=5)
    md.fit_histograms(m, [hg])

    comm_nodes = [[v for v in range(g.n) if assign[v] == c] for c in range(hg.levels[-2].n)]
    order = []
    pools = [list(c) for c in comm_nodes]
    while any(pools):
        c = int(rng.integers(0, len(pools)))
        if pools[c]:
            order.append(pools[c].pop(0))
    new_of_old = {old: new for new, old in enumerate(order)}
    g2 = gr.WeightedGraph(
        g.n,
        tuple((min(new_of_old[u], new_of_old[v]), max(new_of_old[u], new_of_old[v]), w)
              for u, v, w in g.edges),
        leaf=True,
    )
    assign2 = [0] * g.n
    for old, new in new_of_old.items():
        assign2[new] = assign[old]
    hg2 = gr.HierarchicalGraph(hg.levels[:-1] + (g2,), hg.parents[:-1] + (tuple(assign2),))

    assert md.hg_loglik(m, hg) == md.hg_loglik(m, hg2)  # exact float equality


# ---------------------------------------------------------------------------
# gradients end to end


def test_level_gradients_match_finite_differences():
    hg = tiny_hg()
    m = tiny_model(seed=2, K=2)
    md.fit_histograms(m, [hg])
    lm = m.level(2)
    # jitter every parameter so no rectifier sits exactly on its kink (zero
    # biases + structurally zero feature rows put some pre-activations at 0,
    # where central differences straddle the non-differentiable point)
    rng = np.random.default_rng(0)
    for _, arr in ndiff.named_arrays(lm):
        arr += rng.normal(0.0, 0.02, size=arr.shape)
    data = md._level_data(hg, 2, lm.input_width)

    grads = md._zero_grads(lm)
    md._level_value_and_grads(lm, data, grads)

    eps = 1e-5
    gmap = dict(ndiff.named_arrays(grads))
    for name, arr in ndiff.named_arrays(lm):
        flat = arr.reshape(-1)
        gflat = gmap[name].reshape(-1)
        idx = np.linspace(0, flat.size - 1, min(flat.size, 5)).astype(int)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = md._level_value_and_grads(lm, data)
            flat[i] = orig - eps
            fm = md._level_value_and_grads(lm, data)
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            scale = max(abs(num), abs(gflat[i]), 1.0)
            assert abs(num - gflat[i]) / scale < 1e-3, f"{name}[{i}]"


# ---------------------------------------------------------------------------
# training


def test_training_reduces_nll():
    hgs = [tiny_hg(), gr.build_hierarchy(two_cliques_bridge(3), 2)]
    m = tiny_model(seed=3)
    md.fit_histograms(m, [hgs[0]])
    res = md.train(m, hgs, md.TrainConfig(epochs=40, batch_size=2, lr=3e-3, seed=0))
    assert res.loss_trace[-1] < res.loss_trace[0]


def test_zero_learning_rate_keeps_parameters():
    hg = tiny_hg()
    m = tiny_model(seed=4)
    before = {n: a.copy() for n, a in ndiff.named_arrays(m.param_groups())}
    md.train(m, [hg], md.TrainConfig(epochs=2, batch_size=1, lr=0.0))
    after = dict(ndiff.named_arrays(m.param_groups()))
    for n in before:
        np.testing.assert_array_equal(before[n], after[n])


def test_shared_parameters_receive_gradients_from_all_levels():
    hg = tiny_hg()
    m = tiny_model(seed=6, shared=True)
    assert m.levels[0].gnn is m.levels[1].gnn
    assert list(m.param_groups()) == ["shared"]
    md.fit_histograms(m, [hg])
    grads = {"shared": md._zero_grads(m.levels[0])}
    only_l1 = md._level_value_and_grads(m.level(1), md._level_data(hg, 1, m.input_width),
                                        md._zero_grads(m.levels[0]))
    g1 = md._zero_grads(m.levels[0])
    md._level_value_and_grads(m.level(1), md._level_data(hg, 1, m.input_width), g1)
    g12 = md._zero_grads(m.levels[0])
    md._level_value_and_grads(m.level(1), md._level_data(hg, 1, m.input_width), g12)
    md._level_value_and_grads(m.level(2), md._level_data(hg, 2, m.input_width), g12)
    d1 = dict(ndiff.named_arrays(g1))
    d12 = dict(ndiff.named_arrays(g12))
    assert any(not np.array_equal(d1[n], d12[n]) for n in d1)


def test_training_diverged_raises():
    hg = tiny_hg()
    m = tiny_model(seed=7)
    m.levels[0].embed.w[0, 0] = np.nan
    with pytest.raises((md.TrainingDiverged, ValueError)):
        md.train(m, [hg], md.TrainConfig(epochs=1, batch_size=1))


# ---------------------------------------------------------------------------
# generation


def trained_tiny(seed=8, leaf_head="multihot"):
    hgs = [gr.build_hierarchy(two_cliques_bridge(k), 2) for k in (3, 4, 5)]
    m = md.init_model(seed=seed, depth=2, input_width=12, d_h=6, K=2, gnn_layers=1,
                      leaf_head=leaf_head)
    md.fit_histograms(m, hgs)
    return m


def test_generation_conserves_weight():
    m = trained_tiny()
    for s in range(25):
        hg = md.generate(m, s)
        assert len({lv.total_weight for lv in hg.levels}) == 1
        assert hg.leaf.leaf and hg.levels[0].n == 1


def test_generation_binary_leaf():
    m = trained_tiny(leaf_head="multihot")
    hg = md.generate(m, 3)
    assert all(w == 1 for _, _, w in hg.leaf.edges)


def test_generation_bernoulli_leaf_conserves_after_fixup():
    m = trained_tiny(leaf_head="bernoulli")
    for s in range(10):
        hg = md.generate(m, s)
        assert len({lv.total_weight for lv in hg.levels}) == 1
        assert all(w == 1 for _, _, w in hg.leaf.edges)


def test_generation_deterministic_per_seed():
    m = trained_tiny()
    assert md.generate(m, 123) == md.generate(m, 123)
    assert md.generate(m, 123) != md.generate(m, 124)


def test_generate_many_thread_invariant():
    m = trained_tiny()
    serial = md.generate_many(m, 6, seed=42, threads=1)
    threaded = md.generate_many(m, 6, seed=42, threads=4)
    assert serial == threaded


def test_zero_root_weight_yields_isolated_nodes():
    g = gr.WeightedGraph(5, (), leaf=True)
    hg = gr.build_hierarchy(g, 2)
    m = md.init_model(seed=9, depth=2, input_width=8, d_h=4, K=2, gnn_layers=1)
    md.fit_histograms(m, [hg])
    out = md.generate(m, 0)
    assert out.leaf.num_edges == 0
    assert out.root_weight == 0


def test_generation_requires_fit():
    m = tiny_model()
    with pytest.raises(ValueError):
        md.generate(m, 0)


# ---------------------------------------------------------------------------
# persistence


def test_checkpoint_round_trip_exact(tmp_path):
    m = trained_tiny()
    md.train(m, [gr.build_hierarchy(two_cliques_bridge(3), 2)],
             md.TrainConfig(epochs=2, batch_size=1))
    path = tmp_path / "model.npz"
    md.save_model(m, path)
    m2 = md.load_model(path)
    a = dict(ndiff.named_arrays(m.param_groups()))
    b = dict(ndiff.named_arrays(m2.param_groups()))
    assert set(a) == set(b)
    for n in a:
        np.testing.assert_array_equal(a[n], b[n])
    assert m2.root_hist == m.root_hist
    assert m2.count_hists == m.count_hists
    hg = gr.build_hierarchy(two_cliques_bridge(4), 2)
    assert md.hg_loglik(m2, hg) == md.hg_loglik(m, hg)


def test_checkpoint_preserves_head_kinds(tmp_path):
    m = trained_tiny(leaf_head="bernoulli")
    path = tmp_path / "model.npz"
    md.save_model(m, path)
    m2 = md.load_model(path)
    assert [lm.head_kind for lm in m2.levels] == ["multinomial", "bernoulli"]


def test_train_deterministic_per_seed():
    hgs = [tiny_hg(), gr.build_hierarchy(two_cliques_bridge(3), 2)]
    r1 = md.train(tiny_model(seed=3), hgs, md.TrainConfig(epochs=3, batch_size=1, seed=5))
    r2 = md.train(tiny_model(seed=3), hgs, md.TrainConfig(epochs=3, batch_size=1, seed=5))
    assert r1.loss_trace == r2.loss_trace
    a = dict(ndiff.named_arrays(r1.model.param_groups()))
    b = dict(ndiff.named_arrays(r2.model.param_groups()))
    for n in a:
        np.testing.assert_array_equal(a[n], b[n])


def test_init_node_features_rules():
    m = fitted_model()
    lm = m.level(2)
    # the zero row maps to the embedding bias alone
    lm.embed.b[:] = np.arange(lm.d_h, dtype=float)
    out = md.init_node_features(lm, np.zeros((1, lm.input_width)))
    np.testing.assert_array_equal(out[0], lm.embed.b)
    # identical rows give identical features
    rows = np.tile(np.arange(lm.input_width, dtype=float), (2, 1))
    out = md.init_node_features(lm, rows)
    np.testing.assert_array_equal(out[0], out[1])
    with pytest.raises(ValueError):
        md.init_node_features(lm, np.zeros((1, lm.input_width + 1)))


def test_pad_row_keeps_trailing_entries():
    row = np.arange(10, dtype=float)
    out = md._pad_row(row, 4)
    np.testing.assert_array_equal(out, [6, 7, 8, 9])
    short = md._pad_row(np.array([5.0, 6.0]), 4)
    np.testing.assert_array_equal(short, [0, 0, 5, 6])
