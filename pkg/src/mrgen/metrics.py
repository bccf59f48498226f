"""Graph statistics, histogramming and the TV-kernel MMD two-sample score.

Generated and reference graph sets are compared through per-graph histograms
of four statistics: node degrees, local clustering coefficients, 4-node
graphlet orbit counts, and the normalized-Laplacian spectrum.  The squared
maximum mean discrepancy uses the biased estimator with kernel
``exp(-tv(x, y)^2 / (2 sigma^2))`` over aligned histograms, sigma = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from mrgen.graphs import WeightedGraph

__all__ = [
    "StatHistogram",
    "STATISTICS",
    "degree_hist",
    "clustering_hist",
    "orbit_counts_4",
    "orbit_hists",
    "laplacian_spectrum",
    "laplacian_spectrum_hist",
    "tv_distance",
    "mmd",
    "mmd_report",
    "erdos_renyi_sample",
    "er_reference_set",
]

STATISTICS = ("degree", "clustering", "orbit", "spectrum")
N_ORBITS = 11  # orbits 4..14: the connected 4-node graphlets
KERNEL_SIGMA = 1.0
CLUSTERING_BINS = 100
SPECTRUM_BINS = 200


@dataclass(frozen=True)
class StatHistogram:
    """Normalized histogram of one statistic for one graph."""

    tag: str
    edges: np.ndarray  # bin edges, len(counts) + 1
    counts: np.ndarray  # sums to 1, or all zeros for an empty graph

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.float64)
        if np.any(counts < 0):
            raise ValueError("histogram counts must be non-negative")
        total = counts.sum()
        if total > 0 and abs(total - 1.0) > 1e-9:
            raise ValueError("histogram counts must sum to 1")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=np.float64))

    @property
    def empty(self) -> bool:
        return float(self.counts.sum()) == 0.0


def _normalized(tag: str, edges: np.ndarray, raw: np.ndarray) -> StatHistogram:
    total = raw.sum()
    counts = raw / total if total > 0 else np.zeros_like(raw, dtype=np.float64)
    return StatHistogram(tag, edges, counts)


def _simple_adjacency(g: WeightedGraph) -> list[set[int]]:
    adj = [set() for _ in range(g.n)]
    for u, v, _ in g.edges:
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    return adj


def degree_hist(g: WeightedGraph) -> StatHistogram:
    """Node-degree histogram on integer bins 0..max degree."""
    degs = np.zeros(g.n, dtype=np.int64)
    for u, v, _ in g.edges:
        if u != v:
            degs[u] += 1
            degs[v] += 1
    top = int(degs.max(initial=0))
    raw = np.bincount(degs, minlength=top + 1).astype(np.float64) if g.n else np.zeros(1)
    return _normalized("degree", np.arange(raw.size + 1, dtype=np.float64) - 0.5, raw)


def clustering_hist(g: WeightedGraph) -> StatHistogram:
    """Local clustering coefficients on 100 uniform bins over [0, 1]."""
    adj = _simple_adjacency(g)
    coeffs = []
    for v in range(g.n):
        d = len(adj[v])
        if d < 2:
            coeffs.append(0.0)
            continue
        nbrs = sorted(adj[v])
        tri = sum(
            1
            for i in range(d)
            for j in range(i + 1, d)
            if nbrs[j] in adj[nbrs[i]]
        )
        coeffs.append(2.0 * tri / (d * (d - 1)))
    edges = np.linspace(0.0, 1.0, CLUSTERING_BINS + 1)
    raw, _ = np.histogram(np.clip(coeffs, 0.0, 1.0), bins=edges) if coeffs else (np.zeros(CLUSTERING_BINS), None)
    return _normalized("clustering", edges, raw.astype(np.float64))


def orbit_counts_4(g: WeightedGraph) -> np.ndarray:
    """Per-node participation counts in graphlet orbits 4..14.

    Enumerates connected induced 4-node subgraphs by expanding around each
    edge, classifies each by its induced degree sequence, and credits every
    node with its automorphism orbit.  Column j holds orbit 4+j.
    """
    adj = _simple_adjacency(g)
    counts = np.zeros((g.n, N_ORBITS), dtype=np.int64)
    seen: set[tuple[int, int, int, int]] = set()
    for u, v, _ in g.edges:
        if u == v:
            continue
        third = (adj[u] | adj[v]) - {u, v}
        for w in third:
            fourth = (adj[u] | adj[v] | adj[w]) - {u, v, w}
            for x in fourth:
                quad = tuple(sorted((u, v, w, x)))
                if quad in seen:
                    continue
                seen.add(quad)
                _credit_quad(adj, quad, counts)
    return counts


def _credit_quad(adj: list[set[int]], quad: tuple[int, int, int, int], counts: np.ndarray) -> None:
    deg = {}
    m = 0
    for a in quad:
        d = sum(1 for b in quad if b != a and b in adj[a])
        deg[a] = d
        m += d
    m //= 2
    if m < 3 or min(deg.values()) == 0:
        return
    if m == 3:
        # path (ends 4, middles 5) or star (leaves 6, center 7)
        star = max(deg.values()) == 3
        if not _quad_connected(adj, quad):
            return
        for a in quad:
            if star:
                counts[a, (6 if deg[a] == 1 else 7) - 4] += 1
            else:
                counts[a, (4 if deg[a] == 1 else 5) - 4] += 1
    elif m == 4:
        if max(deg.values()) == 2:  # 4-cycle
            for a in quad:
                counts[a, 8 - 4] += 1
        else:  # paw: pendant 9, far pair 10, cut vertex 11
            for a in quad:
                counts[a, {1: 9, 2: 10, 3: 11}[deg[a]] - 4] += 1
    elif m == 5:  # diamond: rim 12, hubs 13
        for a in quad:
            counts[a, (12 if deg[a] == 2 else 13) - 4] += 1
    else:  # complete
        for a in quad:
            counts[a, 14 - 4] += 1


def _quad_connected(adj: list[set[int]], quad) -> bool:
    seen = {quad[0]}
    stack = [quad[0]]
    members = set(quad)
    while stack:
        cur = stack.pop()
        for nxt in adj[cur] & members:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == 4


def orbit_hists(g: WeightedGraph) -> list[StatHistogram]:
    """One integer-bin histogram per orbit over the per-node counts."""
    counts = orbit_counts_4(g)
    out = []
    for j in range(N_ORBITS):
        col = counts[:, j] if g.n else np.zeros(0, dtype=np.int64)
        top = int(col.max(initial=0))
        raw = np.bincount(col, minlength=top + 1).astype(np.float64) if g.n else np.zeros(1)
        out.append(_normalized(f"orbit{j + 4}", np.arange(raw.size + 1, dtype=np.float64) - 0.5, raw))
    return out


def laplacian_spectrum(g: WeightedGraph) -> np.ndarray:
    """Eigenvalues of I - D^{-1/2} A D^{-1/2}; isolated nodes contribute 0."""
    if g.n == 0:
        return np.zeros(0)
    a = g.adjacency().astype(np.float64)
    np.fill_diagonal(a, 0.0)
    deg = a.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    lap = -a * inv_sqrt[:, None] * inv_sqrt[None, :]
    lap[np.arange(g.n), np.arange(g.n)] = np.where(deg > 0, 1.0, 0.0)
    return np.sort(np.linalg.eigvalsh(lap))


def laplacian_spectrum_hist(g: WeightedGraph) -> StatHistogram:
    """Spectrum histogram: 200 uniform bins over [0, 2]."""
    vals = laplacian_spectrum(g)
    edges = np.linspace(0.0, 2.0, SPECTRUM_BINS + 1)
    raw, _ = np.histogram(np.clip(vals, 0.0, 2.0), bins=edges)
    return _normalized("spectrum", edges, raw.astype(np.float64))


# ---------------------------------------------------------------------------
# MMD


def _align(hists: list[StatHistogram]) -> np.ndarray:
    """Stack histograms, zero-padding integer-bin families to a common width."""
    width = max(h.counts.size for h in hists)
    first = hists[0]
    step = first.edges[1] - first.edges[0]
    mat = np.zeros((len(hists), width))
    for i, h in enumerate(hists):
        if h.edges[0] != first.edges[0] or abs((h.edges[1] - h.edges[0]) - step) > 1e-12:
            raise ValueError("histogram bins are misaligned")
        mat[i, : h.counts.size] = h.counts
    return mat


def tv_distance(x: np.ndarray, y: np.ndarray) -> float:
    return 0.5 * float(np.abs(x - y).sum())


def _mmd_from_matrices(a: np.ndarray, b: np.ndarray, sigma: float) -> float:
    def kernel(x, y):
        tv = 0.5 * np.abs(x[:, None, :] - y[None, :, :]).sum(axis=2)
        return np.exp(-(tv**2) / (2.0 * sigma**2))

    return float(kernel(a, a).mean() + kernel(b, b).mean() - 2.0 * kernel(a, b).mean())


_STAT_FN = {
    "degree": degree_hist,
    "clustering": clustering_hist,
    "spectrum": laplacian_spectrum_hist,
    "orbit": orbit_hists,
}


def _hists_for(graphs: Sequence[WeightedGraph], statistic: str, threads: int = 1):
    try:
        fn = _STAT_FN[statistic]
    except KeyError:
        raise ValueError(f"unknown statistic {statistic!r}; pick from {STATISTICS}") from None
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, graphs))
    return [fn(g) for g in graphs]


def mmd(set_a: Sequence[WeightedGraph], set_b: Sequence[WeightedGraph], statistic: str,
        sigma: float = KERNEL_SIGMA, threads: int = 1) -> float:
    """Biased squared MMD between two graph sets under one statistic.

    The orbit statistic averages eleven per-orbit MMD scores; the other
    statistics compare one histogram per graph.  Per-graph statistics are
    independent, so ``threads`` only changes wall time, never the result.
    """
    if not set_a or not set_b:
        raise ValueError("both graph sets must be non-empty")
    ha = _hists_for(set_a, statistic, threads)
    hb = _hists_for(set_b, statistic, threads)
    if statistic == "orbit":
        scores = []
        for j in range(N_ORBITS):
            stacked = _align([h[j] for h in ha] + [h[j] for h in hb])
            scores.append(_mmd_from_matrices(stacked[: len(ha)], stacked[len(ha) :], sigma))
        return float(np.mean(scores))
    stacked = _align(ha + hb)
    return _mmd_from_matrices(stacked[: len(ha)], stacked[len(ha) :], sigma)


def mmd_report(reference: Sequence[WeightedGraph], generated: Sequence[WeightedGraph],
               sigma: float = KERNEL_SIGMA, threads: int = 1) -> dict[str, float]:
    """All four MMD scores, keyed degree/clustering/orbit/spectrum."""
    return {stat: mmd(reference, generated, stat, sigma, threads) for stat in STATISTICS}


# ---------------------------------------------------------------------------
# Erdos-Renyi reference


def erdos_renyi_sample(n: int, m: int, rng: np.random.Generator) -> WeightedGraph:
    """Uniform simple graph with exactly n nodes and m edges (G(n, m))."""
    max_m = n * (n - 1) // 2
    if not (0 <= m <= max_m):
        raise ValueError(f"m={m} infeasible for n={n}")
    chosen: set[int] = set()
    if m > max_m // 2:
        skip = set(rng.choice(max_m, size=max_m - m, replace=False).tolist()) if max_m > m else set()
        chosen = set(range(max_m)) - skip
    else:
        while len(chosen) < m:
            chosen.add(int(rng.integers(0, max_m)))
    def row_base(u: int) -> int:
        return u * (2 * n - u - 1) // 2

    edges = []
    for idx in sorted(chosen):
        # decode the linear index of an (u, v) pair, u < v
        u = int((2 * n - 1 - math.sqrt((2 * n - 1) ** 2 - 8 * idx)) // 2)
        while row_base(u + 1) <= idx:
            u += 1
        while row_base(u) > idx:
            u -= 1
        v = idx - row_base(u) + u + 1
        edges.append((u, v, 1))
    return WeightedGraph(n, tuple(edges), leaf=True)


def er_reference_set(train: Sequence[WeightedGraph], count: int, rng: np.random.Generator) -> list[WeightedGraph]:
    """ER samples whose (n, m) pairs are drawn from the training set's empirical
    joint distribution."""
    if not train:
        raise ValueError("empty training set")
    out = []
    for _ in range(count):
        g = train[int(rng.integers(0, len(train)))]
        out.append(erdos_renyi_sample(g.n, g.num_edges, rng))
    return out
