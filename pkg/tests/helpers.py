"""Shared test oracles: brute-force routines kept independent of the library paths."""
from __future__ import annotations

import itertools
import math

import numpy as np

from mrgen.graphs import WeightedGraph


def brute_force_modularity(g: WeightedGraph, assign) -> float:
    """Direct evaluation of Q = sum_ij (A_ij - k_i k_j / 2W) delta(c_i, c_j) / 2W
    on the dense matrix with doubled self-loops."""
    a = np.zeros((g.n, g.n), dtype=float)
    for u, v, w in g.edges:
        if u == v:
            a[u, u] += 2 * w
        else:
            a[u, v] += w
            a[v, u] += w
    two_w = a.sum()
    if two_w == 0:
        return 0.0
    k = a.sum(axis=1)
    q = 0.0
    for i in range(g.n):
        for j in range(g.n):
            if assign[i] == assign[j]:
                q += a[i, j] - k[i] * k[j] / two_w
    return q / two_w


def all_partitions(items):
    """Every partition of a small collection (Bell-number blowup: keep it tiny)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in all_partitions(rest):
        for i, block in enumerate(smaller):
            yield smaller[:i] + [block + [first]] + smaller[i + 1 :]
        yield smaller + [[first]]


def partition_to_assign(n, partition):
    assign = [0] * n
    for cid, block in enumerate(partition):
        for v in block:
            assign[v] = cid
    return assign


def clique_edges(nodes):
    return [(u, v, 1) for u, v in itertools.combinations(sorted(nodes), 2)]


def two_cliques_bridge(k: int) -> WeightedGraph:
    """Two k-cliques joined by a single edge between node 0 and node k."""
    edges = clique_edges(range(k)) + clique_edges(range(k, 2 * k)) + [(0, k, 1)]
    return WeightedGraph(2 * k, tuple(edges), leaf=True)


def finite_difference(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat array."""
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += eps
        fp = f(xp)
        xm = x.copy()
        xm[i] -= eps
        fm = f(xm)
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    return float(np.abs(a - b).max(initial=0.0) / denom)


def brute_force_orbit_counts(g: WeightedGraph) -> np.ndarray:
    """Per-node counts of graphlet orbits 4..14 by checking every 4-subset. O(n^4)."""
    adj = [set() for _ in range(g.n)]
    for u, v, _ in g.edges:
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    counts = np.zeros((g.n, 11), dtype=np.int64)
    for quad in itertools.combinations(range(g.n), 4):
        sub = {a: [b for b in quad if b != a and b in adj[a]] for a in quad}
        m = sum(len(v) for v in sub.values()) // 2
        deg = {a: len(sub[a]) for a in quad}
        if m < 3 or 0 in deg.values():
            continue
        # connectivity check
        seen = {quad[0]}
        stack = [quad[0]]
        while stack:
            cur = stack.pop()
            for nxt in sub[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if len(seen) != 4:
            continue
        degs = sorted(deg.values())
        for a in quad:
            d = deg[a]
            if m == 3 and degs == [1, 1, 2, 2]:
                orbit = 4 if d == 1 else 5
            elif m == 3:  # star
                orbit = 6 if d == 1 else 7
            elif m == 4 and degs == [2, 2, 2, 2]:
                orbit = 8
            elif m == 4:  # paw
                orbit = {1: 9, 2: 10, 3: 11}[d]
            elif m == 5:  # diamond
                orbit = 12 if d == 2 else 13
            else:  # K4
                orbit = 14
            counts[a, orbit - 4] += 1
    return counts


def random_graph(rng: np.random.Generator, n: int, p: float) -> WeightedGraph:
    edges = [(u, v, 1) for u, v in itertools.combinations(range(n), 2) if rng.random() < p]
    return WeightedGraph(n, tuple(edges), leaf=True)


def log_comb(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
