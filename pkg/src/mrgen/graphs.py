"""Weighted graphs, community coarsening and multi-level hierarchies.

A hierarchy is a chain of graphs ``G^0 .. G^L``: the leaf ``G^L`` is the
plain graph being modeled, every coarser level replaces each community by a
single node whose self-loop weight is the community's internal edge-weight
sum, and cross-community weight sums become edges between the super-nodes.
Total edge weight is therefore conserved across levels, which downstream
code relies on heavily.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "WeightedGraph",
    "CommunityAssignment",
    "HierarchicalGraph",
    "SubgraphBlock",
    "HGParseError",
    "modularity",
    "louvain",
    "coarsen_once",
    "build_hierarchy",
    "bfs_weighted_order",
    "extract_blocks",
    "serialize",
    "deserialize",
    "parse_edge_list",
    "format_edge_list",
]


class HGParseError(ValueError):
    """Raised when a serialized hierarchy or edge list cannot be parsed."""


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph with positive integer edge weights.

    Edges are stored as ``(u, v, w)`` triples with ``u <= v``; a ``(v, v, w)``
    triple is a self-loop, which leaf graphs forbid.
    """

    n: int
    edges: tuple[tuple[int, int, int], ...]
    leaf: bool = False

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("node count must be non-negative")
        seen = set()
        for u, v, w in self.edges:
            if not (isinstance(w, (int, np.integer)) and w >= 1):
                raise ValueError(f"edge ({u},{v}) has non-positive or non-integer weight {w!r}")
            if not (0 <= u <= v < self.n):
                raise ValueError(f"edge ({u},{v}) out of range for n={self.n}")
            if self.leaf and u == v:
                raise ValueError(f"self-loop ({u},{u}) not allowed in a leaf graph")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u},{v})")
            seen.add((u, v))
        object.__setattr__(self, "edges", tuple(sorted((int(u), int(v), int(w)) for u, v, w in self.edges)))

    @property
    def total_weight(self) -> int:
        return sum(w for _, _, w in self.edges)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric weight matrix; self-loop weight sits once on the diagonal."""
        a = np.zeros((self.n, self.n), dtype=np.int64)
        for u, v, w in self.edges:
            if u == v:
                a[u, u] = w
            else:
                a[u, v] = w
                a[v, u] = w
        return a

    def neighbor_weights(self) -> list[dict[int, int]]:
        """Per-node map neighbor -> weight (self-loops included under the node's own id)."""
        nbrs: list[dict[int, int]] = [dict() for _ in range(self.n)]
        for u, v, w in self.edges:
            nbrs[u][v] = nbrs[u].get(v, 0) + w
            if u != v:
                nbrs[v][u] = nbrs[v].get(u, 0) + w
        return nbrs

    def strengths(self) -> np.ndarray:
        """Weighted degrees with self-loop weight counted twice (standard convention)."""
        k = np.zeros(self.n, dtype=np.int64)
        for u, v, w in self.edges:
            if u == v:
                k[u] += 2 * w
            else:
                k[u] += w
                k[v] += w
        return k


@dataclass(frozen=True)
class CommunityAssignment:
    """Maps each node to a community id in ``0..num_communities-1``."""

    assign: tuple[int, ...]
    num_communities: int

    def __post_init__(self) -> None:
        used = set(self.assign)
        if used != set(range(self.num_communities)):
            raise ValueError("community ids must be exactly 0..num_communities-1, all used")
        object.__setattr__(self, "assign", tuple(int(c) for c in self.assign))

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "CommunityAssignment":
        """Compact arbitrary labels to 0..C-1, ordered by each community's lowest node id."""
        order: dict[int, int] = {}
        for lab in labels:
            if lab not in order:
                order[lab] = len(order)
        return cls(tuple(order[lab] for lab in labels), len(order))

    @classmethod
    def singletons(cls, n: int) -> "CommunityAssignment":
        return cls(tuple(range(n)), n)

    @classmethod
    def all_in_one(cls, n: int) -> "CommunityAssignment":
        return cls((0,) * n, 1)


@dataclass(frozen=True)
class HierarchicalGraph:
    """Chain of graphs from a single-node root down to the leaf.

    ``parents[k]`` maps each node of ``levels[k+1]`` to its super-node in
    ``levels[k]``.  Construction enforces the structural invariants,
    including exact weight conservation across every pair of levels.
    """

    levels: tuple[WeightedGraph, ...]
    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.levels) < 2:
            raise ValueError("a hierarchy needs at least a root and a leaf level")
        if self.levels[0].n != 1:
            raise ValueError("root level must have exactly one node")
        if len(self.parents) != len(self.levels) - 1:
            raise ValueError("need one parent map per non-root level")
        for i, g in enumerate(self.levels):
            want_leaf = i == len(self.levels) - 1
            if g.leaf != want_leaf:
                raise ValueError(f"level {i} leaf flag must be {want_leaf}")
        total = self.levels[0].total_weight
        for li in range(1, len(self.levels)):
            g, coarser = self.levels[li], self.levels[li - 1]
            pmap = self.parents[li - 1]
            if len(pmap) != g.n:
                raise ValueError(f"parent map at level {li} has wrong length")
            if g.n and set(pmap) != set(range(coarser.n)):
                raise ValueError(f"parent map at level {li} is not surjective")
            if g.total_weight != total:
                raise ValueError(
                    f"weight conservation violated at level {li}: {g.total_weight} != {total}"
                )
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "parents", tuple(tuple(int(p) for p in pm) for pm in self.parents))

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def leaf(self) -> WeightedGraph:
        return self.levels[-1]

    @property
    def root_weight(self) -> int:
        return self.levels[0].total_weight


@dataclass(frozen=True)
class SubgraphBlock:
    """One block of a level's adjacency matrix.

    Partition blocks hold the intra-community edges of a single community;
    bipartite blocks hold the cross edges between exactly two communities.
    ``nodes`` lists global node ids of the level; for bipartite blocks the
    first ``boundary`` entries belong to the side with the lower parent id.
    """

    kind: str  # "partition" | "bipartite"
    level: int
    parent: int | tuple[int, int]
    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int, int], ...]
    boundary: int = 0
    parent_weight: int = 0

    @property
    def left(self) -> tuple[int, ...]:
        return self.nodes[: self.boundary] if self.kind == "bipartite" else self.nodes

    @property
    def right(self) -> tuple[int, ...]:
        return self.nodes[self.boundary :] if self.kind == "bipartite" else ()


# ---------------------------------------------------------------------------
# modularity + Louvain


def modularity(g: WeightedGraph, assign: Sequence[int]) -> float:
    """Newman modularity of a partition, weighted, self-loop weight doubled in strengths."""
    two_w = 2.0 * g.total_weight
    if two_w == 0:
        return 0.0
    k = g.strengths()
    intra = {}
    tot = {}
    for node, c in enumerate(assign):
        tot[c] = tot.get(c, 0) + k[node]
    for u, v, w in g.edges:
        if assign[u] == assign[v]:
            # full double-sum over ordered pairs: off-diagonal edges count twice
            intra[assign[u]] = intra.get(assign[u], 0) + (2 * w)
    q = 0.0
    for c, t in tot.items():
        q += intra.get(c, 0) / two_w - (t / two_w) ** 2
    return q


def _local_moving(nbrs: list[dict[int, int]], k: np.ndarray, total_w: float,
                  max_passes: int) -> list[int]:
    """One Louvain phase: greedy node moves over ascending node ids to a fixed point.

    The gain of placing a (temporarily removed) node into a community is
    evaluated relative to leaving it isolated: ``k_in/W - tot_c*k_v/(2W^2)``.
    The old community is always a candidate, so modularity never decreases.
    """
    n = len(nbrs)
    comm = list(range(n))
    tot = k.astype(np.float64).copy()  # sum of strengths per community label
    for _ in range(max_passes):
        moved = False
        for v in range(n):
            old = comm[v]
            # weight from v to each candidate community, v itself excluded
            w_to: dict[int, float] = {old: 0.0}
            for u, w in nbrs[v].items():
                if u != v:
                    w_to[comm[u]] = w_to.get(comm[u], 0.0) + w
            tot[old] -= k[v]

            def gain(c: int) -> float:
                return w_to[c] / total_w - tot[c] * float(k[v]) / (2.0 * total_w * total_w)

            best_c, best_gain = old, gain(old)
            for c in sorted(w_to):
                g = gain(c)
                if g > best_gain or (g == best_gain and c < best_c):
                    best_c, best_gain = c, g
            tot[best_c] += k[v]
            if best_c != old:
                comm[v] = best_c
                moved = True
        if not moved:
            break
    return comm


def louvain(g: WeightedGraph, seed: int = 0) -> CommunityAssignment:
    """Community detection by greedy modularity maximization.

    Nodes are visited in ascending id order and ties in modularity gain break
    to the lowest community id, so the result is deterministic; ``seed`` is
    accepted for interface symmetry with the stochastic pipeline stages.
    Edgeless graphs come back as singleton communities.
    """
    del seed
    if g.n == 0:
        raise ValueError("louvain needs at least one node")
    if g.total_weight == 0:
        return CommunityAssignment.singletons(g.n)

    # mapping from original node to current super-node
    node_map = list(range(g.n))
    cur = g
    while True:
        nbrs = cur.neighbor_weights()
        k = cur.strengths()
        comm = _local_moving(nbrs, k, float(cur.total_weight), max_passes=2 * cur.n + 10)
        labels = CommunityAssignment.from_labels(comm)
        if labels.num_communities == cur.n:
            break
        cur, pmap = coarsen_once(cur, labels)
        node_map = [pmap[node_map[v]] for v in range(g.n)]
        if cur.n == 1:
            break
    return CommunityAssignment.from_labels([node_map[v] for v in range(g.n)])


# ---------------------------------------------------------------------------
# coarsening


def coarsen_once(g: WeightedGraph, c: CommunityAssignment) -> tuple[WeightedGraph, tuple[int, ...]]:
    """Aggregate each community to one node; weights sum into self-loops and cross edges."""
    if len(c.assign) != g.n:
        raise ValueError("assignment does not cover the graph")
    agg: dict[tuple[int, int], int] = {}
    for u, v, w in g.edges:
        cu, cv = c.assign[u], c.assign[v]
        key = (cu, cv) if cu <= cv else (cv, cu)
        agg[key] = agg.get(key, 0) + w
    edges = tuple((u, v, w) for (u, v), w in agg.items() if w > 0)
    return WeightedGraph(c.num_communities, edges, leaf=False), c.assign


def _as_nonleaf(g: WeightedGraph) -> WeightedGraph:
    return g if not g.leaf else WeightedGraph(g.n, g.edges, leaf=False)


def build_hierarchy(g: WeightedGraph, target_depth: int, seed: int = 0) -> HierarchicalGraph:
    """Coarsen a leaf graph recursively into a hierarchy of exactly ``target_depth`` levels.

    Louvain supplies communities at each step; when it stalls (every node its
    own community) the remaining nodes are merged into one so the chain always
    terminates at a single-node root.  A natural chain deeper than requested
    is spliced keeping the root and the levels nearest the leaf; a shallower
    one is padded below the root with identity coarsenings of its top level.
    """
    if target_depth < 1:
        raise ValueError("target_depth must be >= 1")
    if not g.leaf:
        raise ValueError("build_hierarchy expects a leaf graph")

    levels_fine_to_coarse: list[WeightedGraph] = [g]
    pmaps_fine_to_coarse: list[tuple[int, ...]] = []
    cur: WeightedGraph = g
    while cur.n > 1:
        a = louvain(cur, seed)
        if a.num_communities == cur.n:
            a = CommunityAssignment.all_in_one(cur.n)
        cur, pmap = coarsen_once(cur, a)
        levels_fine_to_coarse.append(cur)
        pmaps_fine_to_coarse.append(pmap)
    if len(levels_fine_to_coarse) == 1:  # single-node leaf still needs a root above it
        cur, pmap = coarsen_once(cur, CommunityAssignment.all_in_one(1))
        levels_fine_to_coarse.append(cur)
        pmaps_fine_to_coarse.append(pmap)

    levels = list(reversed(levels_fine_to_coarse))
    parents = list(reversed(pmaps_fine_to_coarse))
    natural = len(levels) - 1

    if natural > target_depth:
        # keep the root and the target_depth levels closest to the leaf
        cut = natural - target_depth + 1
        levels = [levels[0]] + levels[cut:]
        parents = [tuple(0 for _ in range(levels[1].n))] + parents[cut:]
    elif natural < target_depth:
        pad = target_depth - natural
        top = _as_nonleaf(levels[1])
        root_map = parents[0]
        identity = tuple(range(top.n))
        levels = [levels[0]] + [top] * pad + levels[1:]
        parents = [root_map] + [identity] * pad + parents[1:]

    return HierarchicalGraph(tuple(levels), tuple(parents))


# ---------------------------------------------------------------------------
# block extraction and ordering


def extract_blocks(hg: HierarchicalGraph, level: int) -> list[SubgraphBlock]:
    """Split level ``level`` into one partition block per parent node and one
    bipartite block per parent edge; together the blocks partition the edge set."""
    if not (1 <= level <= hg.depth):
        raise ValueError(f"level must be in 1..{hg.depth}")
    g = hg.levels[level]
    parent_g = hg.levels[level - 1]
    pmap = hg.parents[level - 1]

    members: list[list[int]] = [[] for _ in range(parent_g.n)]
    for node, p in enumerate(pmap):
        members[p].append(node)

    part_edges: list[list[tuple[int, int, int]]] = [[] for _ in range(parent_g.n)]
    cross_edges: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for u, v, w in g.edges:
        pu, pv = pmap[u], pmap[v]
        if pu == pv:
            part_edges[pu].append((u, v, w))
        else:
            key = (pu, pv) if pu < pv else (pv, pu)
            cross_edges.setdefault(key, []).append((u, v, w))

    parent_self = {u: w for u, v, w in parent_g.edges if u == v}
    blocks: list[SubgraphBlock] = []
    for i in range(parent_g.n):
        blocks.append(
            SubgraphBlock(
                kind="partition",
                level=level,
                parent=i,
                nodes=tuple(members[i]),
                edges=tuple(sorted(part_edges[i])),
                parent_weight=parent_self.get(i, 0),
            )
        )
    for u, v, w in parent_g.edges:
        if u == v:
            continue
        blocks.append(
            SubgraphBlock(
                kind="bipartite",
                level=level,
                parent=(u, v),
                nodes=tuple(members[u]) + tuple(members[v]),
                edges=tuple(sorted(cross_edges.get((u, v), []))),
                boundary=len(members[u]),
                parent_weight=w,
            )
        )
    return blocks


def bfs_weighted_order(block: SubgraphBlock, start: int | None = None) -> tuple[int, ...]:
    """Weight-aware BFS order of a partition block.

    The frontier always pops the node with the largest total edge weight to
    already-ordered nodes plus its self-loop weight (ties to the lowest id).
    By default the walk starts at the node of maximum weighted degree and
    restarts likewise for each disconnected remainder; ``start`` forces the
    first node.
    """
    if block.kind != "partition":
        raise ValueError("bfs_weighted_order applies to partition blocks")
    if not block.nodes:
        raise ValueError("empty block")
    if start is not None and start not in block.nodes:
        raise ValueError(f"start node {start} is not in the block")

    nodes = list(block.nodes)
    self_w = {v: 0 for v in nodes}
    adj: dict[int, dict[int, int]] = {v: {} for v in nodes}
    deg = {v: 0 for v in nodes}
    for u, v, w in block.edges:
        if u == v:
            self_w[u] += w
            deg[u] += w
        else:
            adj[u][v] = w
            adj[v][u] = w
            deg[u] += w
            deg[v] += w

    order: list[int] = []
    placed: set[int] = set()
    remaining = set(nodes)
    frontier: dict[int, int] = {}  # candidate -> weight to ordered set

    while remaining:
        if not frontier:
            if start is not None and start in remaining:
                frontier[start] = 0
            else:
                frontier[min(remaining, key=lambda v: (-deg[v], v))] = 0
        nxt = min(frontier, key=lambda v: (-(frontier[v] + self_w[v]), v))
        del frontier[nxt]
        order.append(nxt)
        placed.add(nxt)
        remaining.discard(nxt)
        for u, w in adj[nxt].items():
            if u not in placed:
                frontier[u] = frontier.get(u, 0) + w
    return tuple(order)


# ---------------------------------------------------------------------------
# serialization


def _hg_to_obj(hg: HierarchicalGraph) -> dict:
    return {
        "depth": hg.depth,
        "levels": [
            {"n": g.n, "leaf": g.leaf, "edges": [[u, v, w] for u, v, w in g.edges]}
            for g in hg.levels
        ],
        "parent_node": [list(pm) for pm in hg.parents],
    }


def serialize(hg: HierarchicalGraph) -> bytes:
    """Serialize a hierarchy to its JSON text form (see the file-format docs)."""
    return (json.dumps(_hg_to_obj(hg), separators=(",", ":"), sort_keys=True) + "\n").encode("utf-8")


def _expect(obj: dict, key: str, kind: type, where: str):
    if key not in obj:
        raise HGParseError(f"missing field '{key}' in {where}")
    val = obj[key]
    if kind is int and isinstance(val, bool) or not isinstance(val, kind):
        raise HGParseError(f"field '{key}' in {where} must be {kind.__name__}")
    return val


def deserialize(data: bytes | str) -> HierarchicalGraph:
    """Parse the JSON hierarchy format, naming the offending field on failure."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise HGParseError(f"not valid UTF-8: {exc}") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise HGParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise HGParseError("top-level value must be an object")
    depth = _expect(obj, "depth", int, "top-level")
    raw_levels = _expect(obj, "levels", list, "top-level")
    raw_parents = _expect(obj, "parent_node", list, "top-level")
    if depth != len(raw_levels) - 1:
        raise HGParseError("field 'depth' does not match number of levels")
    levels = []
    for i, item in enumerate(raw_levels):
        if not isinstance(item, dict):
            raise HGParseError(f"levels[{i}] must be an object")
        n = _expect(item, "n", int, f"levels[{i}]")
        leaf = _expect(item, "leaf", bool, f"levels[{i}]")
        raw_edges = _expect(item, "edges", list, f"levels[{i}]")
        edges = []
        for j, e in enumerate(raw_edges):
            if not (isinstance(e, list) and len(e) == 3 and all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
                raise HGParseError(f"levels[{i}].edges[{j}] must be [u, v, w] integers")
            edges.append((e[0], e[1], e[2]))
        try:
            levels.append(WeightedGraph(n, tuple(edges), leaf=leaf))
        except ValueError as exc:
            raise HGParseError(f"levels[{i}]: {exc}") from exc
    parents = []
    for i, pm in enumerate(raw_parents):
        if not (isinstance(pm, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in pm)):
            raise HGParseError(f"parent_node[{i}] must be a list of integers")
        parents.append(tuple(pm))
    try:
        return HierarchicalGraph(tuple(levels), tuple(parents))
    except ValueError as exc:
        raise HGParseError(str(exc)) from exc


def parse_edge_list(text: str) -> WeightedGraph:
    """Read a leaf graph from whitespace-separated ``u v [w]`` lines.

    Node ids are compacted to 0-based in ascending original order; repeated
    pairs accumulate weight; blank lines and ``#`` comments are skipped.
    """
    pairs: dict[tuple[int, int], int] = {}
    ids: set[int] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise HGParseError(f"line {lineno}: expected 'u v [w]'")
        try:
            u, v = int(parts[0]), int(parts[1])
            w = int(parts[2]) if len(parts) == 3 else 1
        except ValueError as exc:
            raise HGParseError(f"line {lineno}: non-integer token") from exc
        if u == v:
            raise HGParseError(f"line {lineno}: self-loop {u}->{v} not allowed in a leaf graph")
        if w < 1:
            raise HGParseError(f"line {lineno}: weight must be >= 1")
        ids.add(u)
        ids.add(v)
        key = (u, v) if u < v else (v, u)
        pairs[key] = pairs.get(key, 0) + w
    remap = {orig: i for i, orig in enumerate(sorted(ids))}
    edges = tuple((remap[u], remap[v], w) for (u, v), w in pairs.items())
    return WeightedGraph(len(remap), edges, leaf=True)


def format_edge_list(g: WeightedGraph) -> str:
    """Inverse of :func:`parse_edge_list` for leaf graphs (isolated nodes are lost)."""
    lines = [f"{u} {v} {w}" for u, v, w in g.edges]
    return "\n".join(lines) + ("\n" if lines else "")
