"""Synthetic community-structured graph generators and dataset splitting."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from mrgen.graphs import WeightedGraph, parse_edge_list

__all__ = [
    "DatasetSpec",
    "SCALE_PRESETS",
    "gen_rcg",
    "gen_ppg",
    "gen_dataset",
    "split_80_20",
    "load_edge_list_dir",
]


# (l_lo, l_hi, k_lo, k_hi) half-open ranges for clique/group count and size.
# "paper" matches the published setup; "desk" runs in seconds for CI-scale work.
SCALE_PRESETS = {
    "rcg": {"paper": (7, 25, 15, 25), "desk": (4, 8, 5, 10)},
    "ppg": {"paper": (20, 30, 15, 25), "desk": (4, 7, 5, 10)},
}


@dataclass
class DatasetSpec:
    """Parameters for one synthetic dataset draw."""

    kind: str  # "rcg" | "ppg"
    count: int = 100
    seed: int = 0
    scale: str = "desk"
    l_range: tuple[int, int] | None = None  # overrides the scale preset
    k_range: tuple[int, int] | None = None
    rewire_p: float | None = None  # rcg only; defaults to 1/l
    p_in: float = 0.75  # ppg only
    p_out: float | None = None  # ppg only; defaults to 10/(k*l^2)

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        for name in ("rewire_p", "p_in", "p_out"):
            p = getattr(self, name)
            if p is not None and not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {p}")

    def ranges(self) -> tuple[int, int, int, int]:
        if self.kind not in SCALE_PRESETS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        l_lo, l_hi, k_lo, k_hi = SCALE_PRESETS[self.kind][self.scale]
        if self.l_range:
            l_lo, l_hi = self.l_range
        if self.k_range:
            k_lo, k_hi = self.k_range
        if l_lo >= l_hi or k_lo >= k_hi:
            raise ValueError("ranges must be non-empty half-open intervals")
        return l_lo, l_hi, k_lo, k_hi


def gen_rcg(spec: DatasetSpec, rng: np.random.Generator) -> WeightedGraph:
    """Relaxed caveman graph: l cliques of k nodes, each edge independently
    rewired with probability p (default 1/l) by moving one endpoint to a
    uniform node of a different clique; collisions and duplicates are dropped."""
    l_lo, l_hi, k_lo, k_hi = spec.ranges()
    l = int(rng.integers(l_lo, l_hi))
    k = int(rng.integers(k_lo, k_hi))
    p = spec.rewire_p if spec.rewire_p is not None else 1.0 / l
    n = l * k
    edges: set[tuple[int, int]] = set()
    for c in range(l):
        base = c * k
        for u, v in itertools.combinations(range(base, base + k), 2):
            pair = (u, v)
            if rng.random() < p:
                keep = u if rng.random() < 0.5 else v
                outside = int(rng.integers(0, n - k))
                other = outside if outside < base else outside + k  # skip clique c
                pair = (keep, other) if keep < other else (other, keep)
                if pair in edges:
                    continue  # collision: the rewired edge is dropped
            edges.add(pair)
    return WeightedGraph(n, tuple((u, v, 1) for u, v in sorted(edges)), leaf=True)


def gen_ppg(spec: DatasetSpec, rng: np.random.Generator) -> WeightedGraph:
    """Planted partition graph: l groups of k nodes, intra pairs linked with
    p_in, inter pairs with p_out (default 10/(k*l^2))."""
    l_lo, l_hi, k_lo, k_hi = spec.ranges()
    l = int(rng.integers(l_lo, l_hi))
    k = int(rng.integers(k_lo, k_hi))
    p_out = spec.p_out if spec.p_out is not None else 10.0 / (k * l * l)
    n = l * k
    group = np.repeat(np.arange(l), k)
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = spec.p_in if group[u] == group[v] else p_out
            if rng.random() < p:
                edges.append((u, v, 1))
    return WeightedGraph(n, tuple(edges), leaf=True)


def gen_dataset(spec: DatasetSpec) -> list[WeightedGraph]:
    """Draw ``spec.count`` graphs, one child random stream per graph."""
    gen = {"rcg": gen_rcg, "ppg": gen_ppg}[spec.kind]
    streams = np.random.SeedSequence(spec.seed).spawn(spec.count)
    return [gen(spec, np.random.default_rng(s)) for s in streams]


def split_80_20(graphs: Sequence, seed: int = 0) -> dict[str, list]:
    """80/20 train-test split, then 20% of the training part as validation."""
    if len(graphs) < 5:
        raise ValueError("need at least 5 graphs to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(graphs))
    n_test = int(round(0.2 * len(graphs)))
    test_idx = order[:n_test]
    rest = order[n_test:]
    n_val = int(round(0.2 * len(rest)))
    val_idx = rest[:n_val]
    train_idx = rest[n_val:]
    return {
        "train": [graphs[i] for i in train_idx],
        "val": [graphs[i] for i in val_idx],
        "test": [graphs[i] for i in test_idx],
    }


def load_edge_list_dir(path) -> list[WeightedGraph]:
    """Read every ``*.txt`` edge list in a directory, sorted by filename."""
    path = Path(path)
    files = sorted(path.glob("*.txt"))
    if not files:
        raise FileNotFoundError(f"no .txt edge lists under {path}")
    return [parse_edge_list(f.read_text()) for f in files]
