"""Coarse-to-fine generative model over graph hierarchies.

One level model owns a GNN, a feature embedding and three output-head MLPs.
Given the level above, every community block factorizes row by row: a
binomial picks how much of the community's remaining weight the new node
takes, a multinomial spreads it over the candidate edges, and a K-mixture
wraps both.  Cross-community blocks are single multinomial mixtures over all
node pairs.  Likelihood evaluation is teacher forced and batched; generation
walks the same factorization top-down, sampling block by block.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from mrgen import dist, ndiff
from mrgen.graphs import (
    HierarchicalGraph,
    SubgraphBlock,
    WeightedGraph,
    bfs_weighted_order,
    extract_blocks,
)
from mrgen.ndiff import (
    Dense,
    GNNParams,
    MLPParams,
    log_sigmoid,
    mlp_backward,
    mlp_forward_cached,
    sigmoid,
)

logger = logging.getLogger(__name__)

__all__ = [
    "LevelModel",
    "MRGModel",
    "RowDistribution",
    "BipartiteDistribution",
    "NoCandidateEdges",
    "TrainingDiverged",
    "TrainConfig",
    "TrainResult",
    "init_model",
    "fit_histograms",
    "init_node_features",
    "partition_row_distribution",
    "row_loglik",
    "bipartite_distribution",
    "bipartite_loglik",
    "level_loglik",
    "block_logliks",
    "hg_loglik",
    "mean_nll",
    "train",
    "generate",
    "generate_many",
    "save_model",
    "load_model",
    "weight_bucket",
]

HEAD_KINDS = ("multinomial", "multihot", "bernoulli")


class NoCandidateEdges(ValueError):
    """A row with no candidate edges: the caller should skip it."""


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# model containers


@dataclass
class LevelModel:
    """Per-level parameters: GNN, feature embedding and the mixture heads.

    ``head_theta`` maps one candidate-edge representation to K logits (one per
    mixture); ``head_eta`` and ``head_beta`` map a pooled block representation
    to the K binomial logits and mixture logits.
    """

    gnn: GNNParams
    embed: Dense
    head_theta: MLPParams
    head_eta: MLPParams
    head_beta: MLPParams
    K: int
    head_kind: str
    d_h: int
    input_width: int


@dataclass
class MRGModel:
    levels: list[LevelModel]
    shared: bool
    depth: int
    input_width: int
    root_hist: dict[int, int] = field(default_factory=dict)
    count_hists: list[dict[int, dict[int, int]]] = field(default_factory=list)

    def level(self, l: int) -> LevelModel:
        if not (1 <= l <= self.depth):
            raise ValueError(f"level must be in 1..{self.depth}")
        return self.levels[l - 1]

    def param_groups(self) -> dict[str, LevelModel]:
        """Unique parameter trees (one entry when levels share weights)."""
        if self.shared:
            return {"shared": self.levels[0]}
        return {f"level{i + 1}": lm for i, lm in enumerate(self.levels)}

    @property
    def fitted(self) -> bool:
        return bool(self.root_hist)


@dataclass(frozen=True)
class RowDistribution:
    """Mixture over one adjacency row: weights beta, binomial eta per mixture,
    and per-mixture candidate-edge parameters lam (simplex rows, or independent
    probabilities for the bernoulli head)."""

    kind: str
    beta: np.ndarray  # (K,)
    eta: np.ndarray  # (K,)
    lam: np.ndarray  # (K, E)


@dataclass(frozen=True)
class BipartiteDistribution:
    kind: str
    beta: np.ndarray  # (K,)
    theta: np.ndarray  # (K, P)


def init_model(
    seed: int,
    depth: int,
    input_width: int,
    d_h: int = 64,
    K: int = 20,
    gnn_layers: int = 7,
    leaf_head: str = "multihot",
    shared: bool = False,
) -> MRGModel:
    """Fresh model with seeded Glorot-uniform weights.

    Non-leaf levels always use the softmax (multinomial) head; the leaf level
    uses ``leaf_head``.  With ``shared`` one parameter set serves every level.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if leaf_head not in HEAD_KINDS:
        raise ValueError(f"leaf_head must be one of {HEAD_KINDS}")
    rng = np.random.default_rng(seed)

    def make(head_kind: str) -> LevelModel:
        return LevelModel(
            gnn=ndiff.init_gnn(rng, d_h, gnn_layers),
            embed=ndiff.init_dense(rng, input_width, d_h),
            head_theta=ndiff.init_mlp(rng, (2 * d_h, d_h, d_h, K)),
            head_eta=ndiff.init_mlp(rng, (2 * d_h, d_h, d_h, K)),
            head_beta=ndiff.init_mlp(rng, (2 * d_h, d_h, d_h, K)),
            K=K,
            head_kind=head_kind,
            d_h=d_h,
            input_width=input_width,
        )

    kinds = ["multinomial"] * (depth - 1) + [leaf_head]
    if shared:
        base = make(kinds[0])
        levels = [dataclasses.replace(base, head_kind=kind) for kind in kinds]
    else:
        levels = [make(kind) for kind in kinds]
    return MRGModel(levels=levels, shared=shared, depth=depth, input_width=input_width)


# ---------------------------------------------------------------------------
# empirical histograms (root law + per-level community sizes)


def weight_bucket(w: int) -> int:
    """Bucket key: exact weight below 32, then power-of-two ranges keyed by lower bound."""
    if w < 0:
        raise ValueError("weights are non-negative")
    if w < 32:
        return w
    return 1 << (int(w).bit_length() - 1)


def fit_histograms(model: MRGModel, hgs: Sequence[HierarchicalGraph]) -> MRGModel:
    """Collect the empirical root-weight law and, per level, the community-size
    law bucketed by the parent node's self-weight."""
    if not hgs:
        raise ValueError("need at least one training hierarchy")
    root_hist: dict[int, int] = {}
    count_hists: list[dict[int, dict[int, int]]] = [dict() for _ in range(model.depth)]
    for hg in hgs:
        if hg.depth != model.depth:
            raise ValueError(f"hierarchy depth {hg.depth} does not match model depth {model.depth}")
        w0 = hg.root_weight
        root_hist[w0] = root_hist.get(w0, 0) + 1
        for l in range(1, hg.depth + 1):
            parent_g = hg.levels[l - 1]
            self_w = {u: w for u, v, w in parent_g.edges if u == v}
            sizes = [0] * parent_g.n
            for child_parent in hg.parents[l - 1]:
                sizes[child_parent] += 1
            hist = count_hists[l - 1]
            for i in range(parent_g.n):
                b = weight_bucket(self_w.get(i, 0))
                hist.setdefault(b, {})
                hist[b][sizes[i]] = hist[b].get(sizes[i], 0) + 1
    model.root_hist = root_hist
    model.count_hists = count_hists
    return model


def _sample_hist(hist: dict[int, int], rng: np.random.Generator) -> int:
    keys = sorted(hist)
    counts = np.array([hist[k] for k in keys], dtype=np.float64)
    return int(keys[rng.choice(len(keys), p=counts / counts.sum())])


def _sample_count(level_hist: dict[int, dict[int, int]], w: int, rng: np.random.Generator) -> int:
    if not level_hist:
        raise ValueError("model has no fitted size histograms; call fit_histograms first")
    b = weight_bucket(w)
    if b not in level_hist:
        b = min(level_hist, key=lambda k: (abs(k - b), k))
    return _sample_hist(level_hist[b], rng)


# ---------------------------------------------------------------------------
# feature construction


def _pad_row(row: np.ndarray, width: int) -> np.ndarray:
    """Right-align a row into ``width`` slots: the last slot is the newest column."""
    out = np.zeros(width)
    if row.size >= width:
        out[:] = row[-width:]
    else:
        out[width - row.size :] = row
    return out


def _block_feature_rows(adj: np.ndarray, known_rows: int, leaf: bool, width: int,
                        total_nodes: int | None = None) -> np.ndarray:
    """Raw features for the first ``total_nodes`` nodes of a block whose rows up
    to ``known_rows`` (exclusive) have been generated; later nodes get zeros."""
    n = adj.shape[0] if total_nodes is None else total_nodes
    feats = np.zeros((n, width))
    for i in range(min(known_rows, n)):
        hi = i if leaf else i + 1
        feats[i] = _pad_row(adj[i, :hi].astype(np.float64), width)
    return feats


def init_node_features(lm: LevelModel, raw_rows: np.ndarray) -> np.ndarray:
    """Linearly map raw (right-aligned) adjacency rows into the hidden width."""
    raw_rows = np.asarray(raw_rows, dtype=np.float64)
    if raw_rows.ndim != 2 or raw_rows.shape[1] != lm.input_width:
        raise ValueError(f"expected rows of width {lm.input_width}, got {raw_rows.shape}")
    return ndiff.dense_forward(lm.embed, raw_rows)


def _graph_feature_rows(g: WeightedGraph, width: int) -> np.ndarray:
    """Full symmetric adjacency rows of a finished graph (parent-context input)."""
    if g.n == 0:
        return np.zeros((0, width))
    adj = g.adjacency().astype(np.float64)
    return np.stack([_pad_row(adj[i], width) for i in range(g.n)])


def _block_local_adjacency(block: SubgraphBlock, order: Sequence[int]) -> np.ndarray:
    idx = {v: i for i, v in enumerate(order)}
    n = len(order)
    adj = np.zeros((n, n), dtype=np.int64)
    for u, v, w in block.edges:
        a, b = idx[u], idx[v]
        adj[a, b] = w
        adj[b, a] = w
    return adj


# ---------------------------------------------------------------------------
# single-row interface (used by generation and as a slow reference path)


def _row_candidate_count(t: int, leaf: bool) -> int:
    return t if leaf else t + 1


def _row_graph(adj: np.ndarray, t: int, leaf: bool):
    """Node set 0..t with generated prefix edges plus the row-t candidates."""
    edges = []
    for u in range(t):
        lo = u if leaf else u + 1
        for v in range(lo):
            if adj[u, v] > 0:
                edges.append((u, v))
        if not leaf and adj[u, u] > 0:
            edges.append((u, u))
    cand = [(t, s) for s in range(t)]
    if not leaf:
        cand.append((t, t))
    return edges + cand, cand


def partition_row_distribution(
    lm: LevelModel, adj_prefix: np.ndarray, t: int, leaf: bool, parent_rep: np.ndarray
) -> RowDistribution:
    """Mixture distribution of row ``t`` given the generated prefix of a block.

    Candidates are the edges from node ``t`` to every earlier node, in column
    order, plus the self edge at non-leaf levels.  Raises
    :class:`NoCandidateEdges` for the first leaf row.
    """
    if _row_candidate_count(t, leaf) == 0:
        raise NoCandidateEdges(f"row {t} of a leaf block has no candidates")
    edges, cand = _row_graph(adj_prefix, t, leaf)
    feats = _block_feature_rows(adj_prefix, t, leaf, lm.input_width, total_nodes=t + 1)
    h = ndiff.gnn_forward(lm.gnn, init_node_features(lm, feats), edges)

    ctx = np.asarray(parent_rep, dtype=np.float64).reshape(1, -1)
    delta = h[[t] * len(cand)] - h[[s for _, s in cand]]
    tlogits = ndiff.mlp_forward(lm.head_theta, np.concatenate([delta, np.repeat(ctx, len(cand), axis=0)], axis=1))
    pooled = h[:t].sum(axis=0, keepdims=True)
    eb_in = np.concatenate([pooled, ctx], axis=1)
    eta = sigmoid(ndiff.mlp_forward(lm.head_eta, eb_in))[0]
    blogits = ndiff.mlp_forward(lm.head_beta, eb_in)[0]
    beta = np.exp(blogits - _lse(blogits))

    lam = _edge_activation(tlogits, lm.head_kind).T  # (K, E)
    return RowDistribution(kind=lm.head_kind, beta=beta, eta=eta, lam=lam)


def _lse(v: np.ndarray) -> float:
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(v - m))))


def _edge_activation(logits: np.ndarray, kind: str) -> np.ndarray:
    """Per-mixture candidate parameters from (E, K) logits, still (E, K)."""
    if kind == "multinomial":
        m = logits.max(axis=0, keepdims=True)
        e = np.exp(logits - m)
        return e / e.sum(axis=0, keepdims=True)
    if kind == "multihot":
        s = sigmoid(logits)
        return s / s.sum(axis=0, keepdims=True)
    if kind == "bernoulli":
        return sigmoid(logits)
    raise ValueError(f"unknown head kind {kind!r}")


def row_loglik(rd: RowDistribution, u: Sequence[int], remaining: int) -> float:
    """log-probability of an observed row under the mixture distribution."""
    u = np.asarray(u, dtype=np.int64)
    v = int(u.sum())
    if v > remaining:
        raise ValueError("row total exceeds remaining weight")
    comps = np.empty(rd.beta.size)
    for k in range(rd.beta.size):
        if rd.kind == "bernoulli":
            p = rd.lam[k]
            with np.errstate(divide="ignore"):
                comps[k] = float(np.sum(np.where(u > 0, np.log(p), np.log1p(-p))))
        else:
            comps[k] = dist.bi_logpmf(v, remaining, float(np.clip(rd.eta[k], 0.0, 1.0)))
            if comps[k] != float("-inf"):
                lam = rd.lam[k]
                if np.any((lam == 0) & (u > 0)):
                    comps[k] = float("-inf")
                else:
                    pos = u > 0
                    comps[k] += float(
                        gammaln(v + 1) - gammaln(u + 1).sum() + np.sum(u[pos] * np.log(lam[pos]))
                    )
    return _mixture_lse(np.log(rd.beta), comps)


def _mixture_lse(log_beta: np.ndarray, comps: np.ndarray) -> float:
    with np.errstate(invalid="ignore"):
        a = log_beta + comps
    a = np.where(np.isnan(a), -np.inf, a)
    m = np.max(a)
    if m == float("-inf"):
        return float("-inf")
    return float(m + np.log(np.sum(np.exp(a - m))))


def bipartite_distribution(
    lm: LevelModel,
    adj_left: np.ndarray,
    adj_right: np.ndarray,
    leaf: bool,
    parent_edge_rep: np.ndarray,
) -> BipartiteDistribution:
    """Mixture multinomial over every cross pair of two generated blocks.

    Pairs are ordered row-major over (left position, right position).  The
    GNN runs over both blocks' generated edges plus all candidate cross
    pairs; realized cross edges are deliberately not part of the graph, so
    evaluation matches the information state at generation time.
    """
    nl, nr = adj_left.shape[0], adj_right.shape[0]
    if nl * nr == 0:
        raise ValueError("impossible event: bipartite block with no candidate pairs")
    edges = []
    for adj, off in ((adj_left, 0), (adj_right, nl)):
        n = adj.shape[0]
        for u in range(n):
            hi = u if leaf else u + 1
            for v in range(hi):
                if adj[u, v] > 0:
                    edges.append((off + u, off + v))
            if not leaf and adj[u, u] > 0:
                edges.append((off + u, off + u))
    pairs = [(a, nl + b) for a in range(nl) for b in range(nr)]
    edges.extend(pairs)

    feats = np.concatenate(
        [
            _block_feature_rows(adj_left, nl, leaf, lm.input_width),
            _block_feature_rows(adj_right, nr, leaf, lm.input_width),
        ]
    )
    h = ndiff.gnn_forward(lm.gnn, init_node_features(lm, feats), edges)
    delta = h[[a for a, _ in pairs]] - h[[b for _, b in pairs]]
    ctx = np.asarray(parent_edge_rep, dtype=np.float64).reshape(1, -1)
    tlogits = ndiff.mlp_forward(lm.head_theta, np.concatenate([delta, np.repeat(ctx, len(pairs), axis=0)], axis=1))
    theta = _edge_activation(tlogits, lm.head_kind).T
    pooled = delta.sum(axis=0, keepdims=True)
    blogits = ndiff.mlp_forward(lm.head_beta, np.concatenate([pooled, ctx], axis=1))[0]
    beta = np.exp(blogits - _lse(blogits))
    return BipartiteDistribution(kind=lm.head_kind, beta=beta, theta=theta)


def bipartite_loglik(bd: BipartiteDistribution, w_vec: Sequence[int], total: int) -> float:
    u = np.asarray(w_vec, dtype=np.int64)
    comps = np.empty(bd.beta.size)
    for k in range(bd.beta.size):
        if bd.kind == "bernoulli":
            p = bd.theta[k]
            with np.errstate(divide="ignore"):
                comps[k] = float(np.sum(np.where(u > 0, np.log(p), np.log1p(-p))))
        else:
            th = bd.theta[k]
            if int(u.sum()) != total:
                raise ValueError("cross weights do not sum to the parent edge weight")
            if np.any((th == 0) & (u > 0)):
                comps[k] = float("-inf")
            else:
                pos = u > 0
                comps[k] = float(
                    gammaln(total + 1) - gammaln(u + 1).sum() + np.sum(u[pos] * np.log(th[pos]))
                )
    return _mixture_lse(np.log(bd.beta), comps)


# ---------------------------------------------------------------------------
# batched teacher-forced evaluation
#
# For every block all rows are evaluated in one GNN pass: the row-t subgraph
# (nodes 0..t, generated prefix edges plus candidates from node t) is laid out
# as a disjoint component of one union graph per hierarchy level.  Index
# arrays below address that union; candidate entries are contiguous per row.


@dataclass
class _PartBatch:
    feats: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    row_node: np.ndarray  # union index of the new node per row
    row_parent: np.ndarray  # parent-graph node per row
    row_v: np.ndarray
    row_rem: np.ndarray
    cand_prev: np.ndarray  # union index of the candidate's earlier endpoint
    cand_row: np.ndarray
    cand_u: np.ndarray
    starts: np.ndarray  # candidate segment starts, one per row
    pool_node: np.ndarray
    pool_row: np.ndarray
    n_union: int


@dataclass
class _BipBatch:
    feats: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    pair_a: np.ndarray
    pair_b: np.ndarray
    pair_block: np.ndarray
    pair_u: np.ndarray
    starts: np.ndarray  # pair segment starts, one per block
    block_total: np.ndarray
    block_pi: np.ndarray
    block_pj: np.ndarray
    n_union: int


@dataclass
class _LevelData:
    parent_feats: np.ndarray
    parent_src: np.ndarray
    parent_dst: np.ndarray
    n_parent: int
    part: _PartBatch | None
    bip: _BipBatch | None


def _directed(pairs: list[tuple[int, int]]) -> list[tuple[int, int]]:
    out = []
    for u, v in pairs:
        out.append((u, v))
        if u != v:
            out.append((v, u))
    return out


def _intra_pairs(adj: np.ndarray, upto: int, leaf: bool, offset: int) -> list[tuple[int, int]]:
    """Generated edges among the first ``upto`` nodes (diagonal included off-leaf)."""
    pairs = []
    for u in range(upto):
        hi = u if leaf else u + 1
        for v in range(hi):
            if adj[u, v] > 0:
                pairs.append((offset + u, offset + v))
    return pairs


def _build_part_batch(blocks: list[tuple[np.ndarray, int, int]], leaf: bool, width: int) -> _PartBatch | None:
    """``blocks``: (ordered local adjacency, block total weight, parent node)."""
    feats_l: list[np.ndarray] = []
    src_l: list[int] = []
    dst_l: list[int] = []
    row_node, row_parent, row_v, row_rem = [], [], [], []
    cand_prev, cand_row, cand_u, starts = [], [], [], []
    pool_node, pool_row = [], []
    n_union = 0
    for adj, w_total, parent in blocks:
        n = adj.shape[0]
        rows = range(1, n) if leaf else range(n)
        rem = int(w_total)
        for t in rows:
            off = n_union
            feats_l.append(_block_feature_rows(adj, t, leaf, width, total_nodes=t + 1))
            pairs = _intra_pairs(adj, t, leaf, off)
            cols = list(range(t)) + ([] if leaf else [t])
            pairs.extend((off + t, off + s) for s in cols)
            for a, b in _directed(pairs):
                src_l.append(a)
                dst_l.append(b)
            r = len(row_node)
            starts.append(len(cand_u))
            for s in cols:
                cand_prev.append(off + s)
                cand_row.append(r)
                cand_u.append(int(adj[t, s]))
            for i in range(t):
                pool_node.append(off + i)
                pool_row.append(r)
            v = int(sum(adj[t, s] for s in cols))
            row_node.append(off + t)
            row_parent.append(parent)
            row_v.append(v)
            row_rem.append(rem)
            rem -= v
            n_union += t + 1
        if rem != 0:
            raise ValueError("block rows do not exhaust the parent weight")
    if not row_node:
        return None
    return _PartBatch(
        feats=np.concatenate(feats_l),
        src=np.array(src_l, dtype=np.int64),
        dst=np.array(dst_l, dtype=np.int64),
        row_node=np.array(row_node, dtype=np.int64),
        row_parent=np.array(row_parent, dtype=np.int64),
        row_v=np.array(row_v, dtype=np.int64),
        row_rem=np.array(row_rem, dtype=np.int64),
        cand_prev=np.array(cand_prev, dtype=np.int64),
        cand_row=np.array(cand_row, dtype=np.int64),
        cand_u=np.array(cand_u, dtype=np.int64),
        starts=np.array(starts, dtype=np.int64),
        pool_node=np.array(pool_node, dtype=np.int64),
        pool_row=np.array(pool_row, dtype=np.int64),
        n_union=n_union,
    )


def _build_bip_batch(
    blocks: list[tuple[np.ndarray, np.ndarray, np.ndarray, int, int, int]], leaf: bool, width: int
) -> _BipBatch | None:
    """``blocks``: (adj_left, adj_right, cross, total, parent_i, parent_j)."""
    feats_l, src_l, dst_l = [], [], []
    pair_a, pair_b, pair_block, pair_u, starts = [], [], [], [], []
    block_total, block_pi, block_pj = [], [], []
    n_union = 0
    for adj_l, adj_r, cross, total, pi, pj in blocks:
        nl, nr = adj_l.shape[0], adj_r.shape[0]
        off = n_union
        feats_l.append(_block_feature_rows(adj_l, nl, leaf, width))
        feats_l.append(_block_feature_rows(adj_r, nr, leaf, width))
        pairs = _intra_pairs(adj_l, nl, leaf, off) + _intra_pairs(adj_r, nr, leaf, off + nl)
        b = len(block_total)
        starts.append(len(pair_u))
        for a in range(nl):
            for c in range(nr):
                pairs.append((off + a, off + nl + c))
                pair_a.append(off + a)
                pair_b.append(off + nl + c)
                pair_block.append(b)
                pair_u.append(int(cross[a, c]))
        for x, y in _directed(pairs):
            src_l.append(x)
            dst_l.append(y)
        block_total.append(int(total))
        block_pi.append(pi)
        block_pj.append(pj)
        n_union += nl + nr
    if not block_total:
        return None
    return _BipBatch(
        feats=np.concatenate(feats_l),
        src=np.array(src_l, dtype=np.int64),
        dst=np.array(dst_l, dtype=np.int64),
        pair_a=np.array(pair_a, dtype=np.int64),
        pair_b=np.array(pair_b, dtype=np.int64),
        pair_block=np.array(pair_block, dtype=np.int64),
        pair_u=np.array(pair_u, dtype=np.int64),
        starts=np.array(starts, dtype=np.int64),
        block_total=np.array(block_total, dtype=np.int64),
        block_pi=np.array(block_pi, dtype=np.int64),
        block_pj=np.array(block_pj, dtype=np.int64),
        n_union=n_union,
    )


def _level_data(hg: HierarchicalGraph, l: int, width: int,
                only_block: int | None = None) -> _LevelData:
    leaf = l == hg.depth
    parent_g = hg.levels[l - 1]
    blocks = extract_blocks(hg, l)
    orders = {
        b.parent: bfs_weighted_order(b) for b in blocks if b.kind == "partition"
    }
    adjs = {
        b.parent: _block_local_adjacency(b, orders[b.parent])
        for b in blocks
        if b.kind == "partition"
    }
    part_items, bip_items = [], []
    for bi, b in enumerate(blocks):
        if only_block is not None and bi != only_block:
            continue
        if b.kind == "partition":
            part_items.append((adjs[b.parent], b.parent_weight, b.parent))
        else:
            i, j = b.parent
            pos_l = {v: p for p, v in enumerate(orders[i])}
            pos_r = {v: p for p, v in enumerate(orders[j])}
            cross = np.zeros((len(pos_l), len(pos_r)), dtype=np.int64)
            for u, v, w in b.edges:
                if u in pos_l:
                    cross[pos_l[u], pos_r[v]] = w
                else:
                    cross[pos_l[v], pos_r[u]] = w
            bip_items.append((adjs[i], adjs[j], cross, b.parent_weight, i, j))
    psrc, pdst = ndiff.canonical_directed_edges([(u, v) for u, v, _ in parent_g.edges], parent_g.n)
    return _LevelData(
        parent_feats=_graph_feature_rows(parent_g, width),
        parent_src=psrc,
        parent_dst=pdst,
        n_parent=parent_g.n,
        part=_build_part_batch(part_items, leaf, width),
        bip=_build_bip_batch(bip_items, leaf, width),
    )


def _scatter_rows(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(index, weights=values[:, c], minlength=n)
    return out


def _add_tree(dst, src) -> None:
    for (na, a), (nb, b) in zip(ndiff.named_arrays(dst), ndiff.named_arrays(src)):
        if na != nb:
            raise ValueError("parameter trees out of alignment")
        a += b


def _scale_tree(tree, c: float) -> None:
    for _, a in ndiff.named_arrays(tree):
        a *= c


def _seg_logsumexp(vals: np.ndarray, starts: np.ndarray, seg_of: np.ndarray):
    m = np.maximum.reduceat(vals, starts, axis=0)
    z = np.exp(vals - m[seg_of])
    s = np.add.reduceat(z, starts, axis=0)
    return m + np.log(s), z, s


def _zero_grads(lm: LevelModel) -> LevelModel:
    return ndiff.map_arrays(np.zeros_like, lm)


def _part_pass(lm: LevelModel, pb: _PartBatch, parent_h: np.ndarray,
               dparent_h: np.ndarray | None, grads: LevelModel | None) -> float:
    d = lm.d_h
    want = grads is not None
    x = ndiff.dense_forward(lm.embed, pb.feats)
    if want:
        h, gcache = ndiff.gnn_forward_cached(lm.gnn, x, (pb.src, pb.dst))
    else:
        h = ndiff.gnn_forward(lm.gnn, x, (pb.src, pb.dst))

    cand_new = pb.row_node[pb.cand_row]
    delta = h[cand_new] - h[pb.cand_prev]
    ctx_row = parent_h[pb.row_parent]
    theta_in = np.concatenate([delta, ctx_row[pb.cand_row]], axis=1)
    tlogits, tcache = mlp_forward_cached(lm.head_theta, theta_in)
    u = pb.cand_u.astype(np.float64)[:, None]
    v = pb.row_v.astype(np.float64)[:, None]
    rem = pb.row_rem.astype(np.float64)[:, None]
    coeff = (gammaln(pb.row_v + 1) - np.add.reduceat(gammaln(pb.cand_u + 1.0), pb.starts))[:, None]

    if lm.head_kind == "multinomial":
        logz, z, s = _seg_logsumexp(tlogits, pb.starts, pb.cand_row)
        lam = z / s[pb.cand_row]
        term = np.add.reduceat(u * tlogits, pb.starts, axis=0) - v * logz + coeff
    elif lm.head_kind == "multihot":
        sg = sigmoid(tlogits)
        ssum = np.add.reduceat(sg, pb.starts, axis=0)
        lam = sg / ssum[pb.cand_row]
        term = np.add.reduceat(u * log_sigmoid(tlogits), pb.starts, axis=0) - v * np.log(ssum) + coeff
    elif lm.head_kind == "bernoulli":
        if pb.cand_u.max(initial=0) > 1:
            raise ValueError("bernoulli head requires binary edge weights")
        per = u * log_sigmoid(tlogits) + (1.0 - u) * log_sigmoid(-tlogits)
        term = np.add.reduceat(per, pb.starts, axis=0)
    else:
        raise ValueError(f"unknown head kind {lm.head_kind!r}")

    pooled = _scatter_rows(h[pb.pool_node], pb.pool_row, len(pb.row_node))
    eb_in = np.concatenate([pooled, ctx_row], axis=1)
    blogits, bcache = mlp_forward_cached(lm.head_beta, eb_in)
    log_beta = blogits - _seg_lse_rows(blogits)
    if lm.head_kind == "bernoulli":
        a = log_beta + term
        elogits = ecache = None
    else:
        elogits, ecache = mlp_forward_cached(lm.head_eta, eb_in)
        lc = (gammaln(pb.row_rem + 1) - gammaln(pb.row_v + 1) - gammaln(pb.row_rem - pb.row_v + 1))[:, None]
        log_bi = lc + v * log_sigmoid(elogits) + (rem - v) * log_sigmoid(-elogits)
        a = log_beta + log_bi + term
    row_ll = _seg_lse_rows(a)
    total = float(row_ll.sum())
    if not want:
        return total

    resp = np.exp(a - row_ll)
    dblogits = resp - np.exp(log_beta)
    if lm.head_kind == "multinomial":
        dt = resp[pb.cand_row] * (u - v[pb.cand_row] * lam)
    elif lm.head_kind == "multihot":
        dt = resp[pb.cand_row] * (1.0 - sg) * (u - v[pb.cand_row] * lam)
    else:
        dt = resp[pb.cand_row] * (u - sigmoid(tlogits))

    dtheta_in, theta_g = mlp_backward(lm.head_theta, tcache, dt)
    _add_tree(grads.head_theta, theta_g)
    ddelta = dtheta_in[:, :d]
    dctx_row = _scatter_rows(dtheta_in[:, d:], pb.cand_row, len(pb.row_node))

    deb = np.zeros_like(eb_in)
    dbb, beta_g = mlp_backward(lm.head_beta, bcache, dblogits)
    _add_tree(grads.head_beta, beta_g)
    deb += dbb
    if lm.head_kind != "bernoulli":
        delog = resp * (v - rem * sigmoid(elogits))
        dee, eta_g = mlp_backward(lm.head_eta, ecache, delog)
        _add_tree(grads.head_eta, eta_g)
        deb += dee
    dctx_row += deb[:, d:]
    dpooled = deb[:, :d]

    dh = _scatter_rows(ddelta, cand_new, pb.n_union)
    dh -= _scatter_rows(ddelta, pb.cand_prev, pb.n_union)
    dh += _scatter_rows(dpooled[pb.pool_row], pb.pool_node, pb.n_union)
    dx, gnn_g = ndiff.gnn_backward(lm.gnn, gcache, dh)
    _add_tree(grads.gnn, gnn_g)
    grads.embed.w += pb.feats.T @ dx
    grads.embed.b += dx.sum(axis=0)
    if dparent_h is not None:
        dparent_h += _scatter_rows(dctx_row, pb.row_parent, dparent_h.shape[0])
    return total


def _seg_lse_rows(mat: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp, kept (R, 1) for broadcasting."""
    m = mat.max(axis=1, keepdims=True)
    return m + np.log(np.exp(mat - m).sum(axis=1, keepdims=True))


def _bip_pass(lm: LevelModel, bb: _BipBatch, parent_h: np.ndarray,
              dparent_h: np.ndarray | None, grads: LevelModel | None) -> float:
    d = lm.d_h
    want = grads is not None
    x = ndiff.dense_forward(lm.embed, bb.feats)
    if want:
        h, gcache = ndiff.gnn_forward_cached(lm.gnn, x, (bb.src, bb.dst))
    else:
        h = ndiff.gnn_forward(lm.gnn, x, (bb.src, bb.dst))

    delta = h[bb.pair_a] - h[bb.pair_b]
    ctx = parent_h[bb.block_pi] - parent_h[bb.block_pj]
    theta_in = np.concatenate([delta, ctx[bb.pair_block]], axis=1)
    tlogits, tcache = mlp_forward_cached(lm.head_theta, theta_in)
    u = bb.pair_u.astype(np.float64)[:, None]
    total_w = bb.block_total.astype(np.float64)[:, None]
    coeff = (gammaln(bb.block_total + 1) - np.add.reduceat(gammaln(bb.pair_u + 1.0), bb.starts))[:, None]

    if lm.head_kind == "multinomial":
        logz, z, s = _seg_logsumexp(tlogits, bb.starts, bb.pair_block)
        lam = z / s[bb.pair_block]
        term = np.add.reduceat(u * tlogits, bb.starts, axis=0) - total_w * logz + coeff
    elif lm.head_kind == "multihot":
        sg = sigmoid(tlogits)
        ssum = np.add.reduceat(sg, bb.starts, axis=0)
        lam = sg / ssum[bb.pair_block]
        term = np.add.reduceat(u * log_sigmoid(tlogits), bb.starts, axis=0) - total_w * np.log(ssum) + coeff
    elif lm.head_kind == "bernoulli":
        if bb.pair_u.max(initial=0) > 1:
            raise ValueError("bernoulli head requires binary edge weights")
        per = u * log_sigmoid(tlogits) + (1.0 - u) * log_sigmoid(-tlogits)
        term = np.add.reduceat(per, bb.starts, axis=0)
    else:
        raise ValueError(f"unknown head kind {lm.head_kind!r}")

    pooled = _scatter_rows(delta, bb.pair_block, len(bb.block_total))
    bb_in = np.concatenate([pooled, ctx], axis=1)
    blogits, bcache = mlp_forward_cached(lm.head_beta, bb_in)
    log_beta = blogits - _seg_lse_rows(blogits)
    a = log_beta + term
    blk_ll = _seg_lse_rows(a)
    total = float(blk_ll.sum())
    if not want:
        return total

    resp = np.exp(a - blk_ll)
    dblogits = resp - np.exp(log_beta)
    if lm.head_kind == "multinomial":
        dt = resp[bb.pair_block] * (u - total_w[bb.pair_block] * lam)
    elif lm.head_kind == "multihot":
        dt = resp[bb.pair_block] * (1.0 - sg) * (u - total_w[bb.pair_block] * lam)
    else:
        dt = resp[bb.pair_block] * (u - sigmoid(tlogits))

    dtheta_in, theta_g = mlp_backward(lm.head_theta, tcache, dt)
    _add_tree(grads.head_theta, theta_g)
    ddelta = dtheta_in[:, :d].copy()
    dctx = _scatter_rows(dtheta_in[:, d:], bb.pair_block, len(bb.block_total))

    dbb_in, beta_g = mlp_backward(lm.head_beta, bcache, dblogits)
    _add_tree(grads.head_beta, beta_g)
    ddelta += dbb_in[:, :d][bb.pair_block]
    dctx += dbb_in[:, d:]

    dh = _scatter_rows(ddelta, bb.pair_a, bb.n_union)
    dh -= _scatter_rows(ddelta, bb.pair_b, bb.n_union)
    dx, gnn_g = ndiff.gnn_backward(lm.gnn, gcache, dh)
    _add_tree(grads.gnn, gnn_g)
    grads.embed.w += bb.feats.T @ dx
    grads.embed.b += dx.sum(axis=0)
    if dparent_h is not None:
        dparent_h += _scatter_rows(dctx, bb.block_pi, dparent_h.shape[0])
        dparent_h -= _scatter_rows(dctx, bb.block_pj, dparent_h.shape[0])
    return total


def _level_value_and_grads(lm: LevelModel, data: _LevelData,
                           grads: LevelModel | None = None) -> float:
    """Log-likelihood of one hierarchy level; accumulates gradients when asked."""
    want = grads is not None
    px = ndiff.dense_forward(lm.embed, data.parent_feats)
    if want:
        parent_h, pcache = ndiff.gnn_forward_cached(lm.gnn, px, (data.parent_src, data.parent_dst))
        dparent_h = np.zeros_like(parent_h)
    else:
        parent_h = ndiff.gnn_forward(lm.gnn, px, (data.parent_src, data.parent_dst))
        dparent_h = None
    total = 0.0
    if data.part is not None:
        total += _part_pass(lm, data.part, parent_h, dparent_h, grads)
    if data.bip is not None:
        total += _bip_pass(lm, data.bip, parent_h, dparent_h, grads)
    if want and (data.part is not None or data.bip is not None):
        dpx, gnn_g = ndiff.gnn_backward(lm.gnn, pcache, dparent_h)
        _add_tree(grads.gnn, gnn_g)
        grads.embed.w += data.parent_feats.T @ dpx
        grads.embed.b += dpx.sum(axis=0)
    return total


# ---------------------------------------------------------------------------
# public likelihood API


def level_loglik(model: MRGModel, hg: HierarchicalGraph, l: int) -> float:
    """Teacher-forced log-likelihood of level ``l`` given level ``l-1``."""
    lm = model.level(l)
    return _level_value_and_grads(lm, _level_data(hg, l, lm.input_width))


def block_logliks(model: MRGModel, hg: HierarchicalGraph, l: int) -> list[float]:
    """Per-block log-likelihoods at level ``l``, aligned with extract_blocks."""
    lm = model.level(l)
    out = []
    for bi in range(len(extract_blocks(hg, l))):
        out.append(_level_value_and_grads(lm, _level_data(hg, l, lm.input_width, only_block=bi)))
    return out


def _root_logprob(model: MRGModel, w0: int) -> float:
    total = sum(model.root_hist.values())
    if total == 0:
        raise ValueError("model has no fitted root histogram; call fit_histograms first")
    count = model.root_hist.get(w0, 0)
    if count == 0:
        logger.warning("root weight %d never seen in training; log-likelihood is -inf", w0)
        return float("-inf")
    return float(np.log(count) - np.log(total))


def hg_loglik(model: MRGModel, hg: HierarchicalGraph) -> float:
    """Full hierarchy log-likelihood: every level's blocks plus the root term."""
    if hg.depth != model.depth:
        raise ValueError(f"hierarchy depth {hg.depth} does not match model depth {model.depth}")
    total = _root_logprob(model, hg.root_weight)
    for l in range(1, model.depth + 1):
        total += level_loglik(model, hg, l)
    return total


def mean_nll(model: MRGModel, hgs: Sequence[HierarchicalGraph]) -> float:
    return float(np.mean([-hg_loglik(model, hg) for hg in hgs]))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 5e-4
    batch_size: int = 16
    seed: int = 0
    shuffle: bool = True
    log_every: int = 0  # epochs between info-level loss lines; 0 disables


@dataclass
class TrainResult:
    model: MRGModel
    loss_trace: list[float]


def train(model: MRGModel, hgs: Sequence[HierarchicalGraph], cfg: TrainConfig | None = None) -> TrainResult:
    """Teacher-forced maximum likelihood with Adam.

    The loss trace records the mean per-graph negative log-likelihood of each
    epoch (computed on the pre-update parameters of each batch, as usual).
    Raises :class:`TrainingDiverged` on a non-finite loss.
    """
    cfg = cfg or TrainConfig()
    if not hgs:
        raise ValueError("empty training set")
    fit_histograms(model, hgs)
    datasets = [
        [_level_data(hg, l, model.input_width) for l in range(1, model.depth + 1)] for hg in hgs
    ]
    root_lp = [_root_logprob(model, hg.root_weight) for hg in hgs]

    params = model.param_groups()
    state = ndiff.adam_init(params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    trace: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(hgs)) if cfg.shuffle else np.arange(len(hgs))
        epoch_nll = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            grads = {name: _zero_grads(lm) for name, lm in params.items()}
            batch_ll = 0.0
            for gi in batch:
                for l in range(1, model.depth + 1):
                    group = "shared" if model.shared else f"level{l}"
                    batch_ll += _level_value_and_grads(model.level(l), datasets[gi][l - 1], grads[group])
                batch_ll += root_lp[gi]
            nll = -batch_ll / len(batch)
            if not np.isfinite(nll):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {lo}: {nll!r}"
                )
            for g in grads.values():
                _scale_tree(g, -1.0 / len(batch))
            ndiff.adam_step(state, params, grads)
            epoch_nll += nll * len(batch)
        trace.append(epoch_nll / len(hgs))
        if cfg.log_every and epoch % cfg.log_every == 0:
            logger.info("epoch %d: mean NLL %.4f", epoch, trace[-1])
    return TrainResult(model=model, loss_trace=trace)


# ---------------------------------------------------------------------------
# generation


def _block_rng(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master & (2**63 - 1), *key]))


def _parent_context(lm: LevelModel, g: WeightedGraph) -> np.ndarray:
    feats = _graph_feature_rows(g, lm.input_width)
    return ndiff.gnn_forward(lm.gnn, init_node_features(lm, feats), [(u, v) for u, v, _ in g.edges])


def _sample_without_replacement(rng: np.random.Generator, probs: np.ndarray, v: int) -> np.ndarray:
    out = np.zeros(probs.size, dtype=np.int64)
    avail = np.maximum(probs.astype(np.float64), 0.0).copy()
    for _ in range(v):
        s = avail.sum()
        if s <= 0:
            free = np.flatnonzero(out == 0)
            out[rng.choice(free)] = 1
            continue
        i = int(rng.choice(probs.size, p=avail / s))
        out[i] = 1
        avail[i] = 0.0
    return out


def _generate_partition(lm: LevelModel, n: int, w_total: int, leaf: bool,
                        parent_rep: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    adj = np.zeros((n, n), dtype=np.int64)
    rows = list(range(1, n)) if leaf else list(range(n))
    rem = int(w_total)
    binary = leaf and lm.head_kind in ("multihot", "bernoulli")
    for pos, t in enumerate(rows):
        rd = partition_row_distribution(lm, adj, t, leaf, parent_rep)
        n_cand = rd.lam.shape[1]
        k = int(rng.choice(lm.K, p=rd.beta / rd.beta.sum()))
        if rd.kind == "bernoulli":
            u = (rng.random(n_cand) < rd.lam[k]).astype(np.int64)
        else:
            if pos == len(rows) - 1:
                v = rem
            elif rem > 0:
                v = int(rng.binomial(rem, float(np.clip(rd.eta[k], 0.0, 1.0))))
            else:
                v = 0
            if binary:
                future_cap = sum(_row_candidate_count(s, leaf) for s in rows[pos + 1 :])
                v = max(min(v, n_cand, rem), rem - future_cap)
                v = min(v, n_cand)
                u = _sample_without_replacement(rng, rd.lam[k], v)
            elif v > 0:
                lam = rd.lam[k] / rd.lam[k].sum()
                u = rng.multinomial(v, lam).astype(np.int64)
            else:
                u = np.zeros(n_cand, dtype=np.int64)
        cols = list(range(t)) + ([] if leaf else [t])
        for ci, c in enumerate(cols):
            if u[ci] > 0:
                adj[t, c] = adj[c, t] = int(u[ci])
        rem -= int(u.sum())
    return adj


def _generate_bipartite(lm: LevelModel, adj_l: np.ndarray, adj_r: np.ndarray, leaf: bool,
                        ctx: np.ndarray, w: int, rng: np.random.Generator) -> np.ndarray:
    nl, nr = adj_l.shape[0], adj_r.shape[0]
    bd = bipartite_distribution(lm, adj_l, adj_r, leaf, ctx)
    k = int(rng.choice(lm.K, p=bd.beta / bd.beta.sum()))
    n_pairs = nl * nr
    if bd.kind == "bernoulli":
        u = (rng.random(n_pairs) < bd.theta[k]).astype(np.int64)
    elif leaf and bd.kind == "multihot":
        u = _sample_without_replacement(rng, bd.theta[k], min(int(w), n_pairs))
    else:
        theta = bd.theta[k] / bd.theta[k].sum()
        u = rng.multinomial(int(w), theta).astype(np.int64) if w > 0 else np.zeros(n_pairs, dtype=np.int64)
    return u.reshape(nl, nr)


def _aggregate(child: WeightedGraph, pmap: Sequence[int], n_parent: int) -> WeightedGraph:
    agg: dict[tuple[int, int], int] = {}
    for u, v, w in child.edges:
        a, b = pmap[u], pmap[v]
        key = (a, b) if a <= b else (b, a)
        agg[key] = agg.get(key, 0) + w
    return WeightedGraph(n_parent, tuple((a, b, w) for (a, b), w in agg.items() if w > 0), leaf=False)


def generate(model: MRGModel, seed: int | np.random.Generator) -> HierarchicalGraph:
    """Sample one hierarchy top-down.

    The root weight and community sizes come from the fitted empirical
    histograms; each block then samples its rows (or pairs) from the mixture
    heads, with the last row absorbing the remaining weight so totals are
    conserved by construction.  Blocks inside a level draw from independent
    per-block random streams keyed by (seed, level, kind, index), so any
    evaluation order, including a parallel one, yields the same hierarchy.
    Binary leaf heads may deviate from an infeasible budget (and the
    bernoulli head carries none), so coarse weights are finally re-aggregated
    bottom-up; for multinomial paths that pass is the identity.
    """
    if not model.fitted:
        raise ValueError("model has no fitted histograms; call fit_histograms or train first")
    if isinstance(seed, np.random.Generator):
        master = int(seed.integers(2**63))
    else:
        master = int(seed)
    rng_root = _block_rng(master, 0)
    w0 = _sample_hist(model.root_hist, rng_root)
    root = WeightedGraph(1, ((0, 0, w0),) if w0 > 0 else (), leaf=False)

    levels: list[WeightedGraph] = [root]
    parents: list[tuple[int, ...]] = []
    for l in range(1, model.depth + 1):
        lm = model.level(l)
        leaf = l == model.depth
        parent_g = levels[-1]
        parent_h = _parent_context(lm, parent_g)
        self_w = {u: w for u, v, w in parent_g.edges if u == v}
        binary = leaf and lm.head_kind == "multihot"

        adjs: list[np.ndarray] = []
        for i in range(parent_g.n):
            rng_i = _block_rng(master, l, 0, i)
            w_ii = self_w.get(i, 0)
            n_i = _sample_count(model.count_hists[l - 1], w_ii, rng_i)
            if binary:
                tries = 0
                while n_i * (n_i - 1) // 2 < w_ii and tries < 32:
                    n_i = _sample_count(model.count_hists[l - 1], w_ii, rng_i)
                    tries += 1
                while n_i * (n_i - 1) // 2 < w_ii:
                    n_i += 1
            adjs.append(_generate_partition(lm, n_i, w_ii, leaf, parent_h[i], rng_i))

        offsets = np.concatenate([[0], np.cumsum([a.shape[0] for a in adjs])])
        edges: list[tuple[int, int, int]] = []
        for i, adj in enumerate(adjs):
            off = int(offsets[i])
            for a in range(adj.shape[0]):
                hi = a if leaf else a + 1
                for b in range(hi):
                    if adj[a, b] > 0:
                        lo_, hi_ = sorted((off + a, off + b))
                        edges.append((lo_, hi_, int(adj[a, b])))
        nonself = [(u, v, w) for u, v, w in parent_g.edges if u != v]
        for ei, (pu, pv, pw) in enumerate(nonself):
            rng_e = _block_rng(master, l, 1, ei)
            cross = _generate_bipartite(
                lm, adjs[pu], adjs[pv], leaf, parent_h[pu] - parent_h[pv], pw, rng_e
            )
            for a in range(cross.shape[0]):
                for b in range(cross.shape[1]):
                    if cross[a, b] > 0:
                        x, y = int(offsets[pu]) + a, int(offsets[pv]) + b
                        lo_, hi_ = sorted((x, y))
                        edges.append((lo_, hi_, int(cross[a, b])))
        g_l = WeightedGraph(int(offsets[-1]), tuple(edges), leaf=leaf)
        pmap = tuple(i for i in range(parent_g.n) for _ in range(adjs[i].shape[0]))
        levels.append(g_l)
        parents.append(pmap)

    # re-aggregate coarse weights from the realized leaf (identity for exact paths)
    for li in range(len(levels) - 2, -1, -1):
        levels[li] = _aggregate(levels[li + 1], parents[li], levels[li].n)
    return HierarchicalGraph(tuple(levels), tuple(parents))


def generate_many(model: MRGModel, count: int, seed: int, threads: int = 1) -> list[HierarchicalGraph]:
    """Independent samples with per-sample seeds; thread count never changes results."""
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]
    if threads <= 1:
        return [generate(model, s) for s in seeds]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: generate(model, s), seeds))


# ---------------------------------------------------------------------------
# persistence


def save_model(model: MRGModel, path) -> None:
    """One-file checkpoint: named float64 tensors plus a JSON config record."""
    named: dict[str, np.ndarray] = {}
    for gname, lm in model.param_groups().items():
        for n, arr in ndiff.named_arrays(lm):
            named[f"{gname}.{n}"] = arr
    lm0 = model.levels[0]
    config = {
        "depth": model.depth,
        "shared": model.shared,
        "input_width": model.input_width,
        "K": lm0.K,
        "d_h": lm0.d_h,
        "gnn_layers": len(lm0.gnn.layers),
        "head_kinds": [lm.head_kind for lm in model.levels],
        "root_hist": {str(k): v for k, v in model.root_hist.items()},
        "count_hists": [
            {str(b): {str(n): c for n, c in h.items()} for b, h in level.items()}
            for level in model.count_hists
        ],
    }
    np.savez(path, __config__=np.array(json.dumps(config, sort_keys=True)), **named)


def load_model(path) -> MRGModel:
    with np.load(path, allow_pickle=False) as data:
        config = json.loads(str(data["__config__"]))
        arrays = {k: data[k].copy() for k in data.files if k != "__config__"}
    model = init_model(
        seed=0,
        depth=config["depth"],
        input_width=config["input_width"],
        d_h=config["d_h"],
        K=config["K"],
        gnn_layers=config["gnn_layers"],
        leaf_head=config["head_kinds"][-1],
        shared=config["shared"],
    )
    for gname, lm in model.param_groups().items():
        slots = dict(ndiff.named_arrays(lm))
        for n, slot in slots.items():
            slot[...] = arrays[f"{gname}.{n}"]
    model.root_hist = {int(k): v for k, v in config["root_hist"].items()}
    model.count_hists = [
        {int(b): {int(n): c for n, c in h.items()} for b, h in level.items()}
        for level in config["count_hists"]
    ]
    return model
