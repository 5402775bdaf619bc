"""Immutable undirected graphs in CSR form and basic structural operations.

Node ids are 0-based everywhere. Undirected edges are stored in both
directions with sorted neighbor lists, so neighbor scans are O(deg) and
iteration order is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph: CSR adjacency + dense node features.

    ``offsets`` has length ``node_count + 1``; ``neighbors`` holds both
    directions of every edge, sorted within each node's slice. ``features``
    is an (n, f) float matrix (f may be 0). ``graph_label`` / ``node_labels``
    are optional class ids.
    """

    node_count: int
    offsets: np.ndarray
    neighbors: np.ndarray
    features: np.ndarray
    graph_label: int | None = None
    node_labels: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "offsets", _frozen(np.asarray(self.offsets, dtype=np.int64)))
        object.__setattr__(self, "neighbors", _frozen(np.asarray(self.neighbors, dtype=np.int64)))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        object.__setattr__(self, "features", _frozen(feats))
        if self.node_labels is not None:
            object.__setattr__(self, "node_labels",
                               _frozen(np.asarray(self.node_labels, dtype=np.int64)))
        self._validate()

    def _validate(self):
        n = self.node_count
        if n < 0:
            raise ValueError("node_count must be non-negative")
        if self.offsets.shape != (n + 1,):
            raise ValueError("offsets must have length node_count + 1")
        if self.offsets[0] != 0 or np.any(np.diff(self.offsets) < 0):
            raise ValueError("offsets must be monotone starting at 0")
        if self.offsets[-1] != len(self.neighbors):
            raise ValueError("offsets[-1] must equal the neighbor-list length")
        if self.features.shape[0] != n:
            raise ValueError("feature row count must equal node_count")
        if self.node_labels is not None and self.node_labels.shape != (n,):
            raise ValueError("node_labels must have length node_count")
        if len(self.neighbors):
            if self.neighbors.min() < 0 or self.neighbors.max() >= n:
                raise ValueError("neighbor id out of range")
        for v in range(n):
            nbrs = self.neighbors[self.offsets[v]:self.offsets[v + 1]]
            if np.any(nbrs == v):
                raise ValueError(f"self-loop at node {v}")
            if np.any(np.diff(nbrs) <= 0):
                raise ValueError(f"neighbor list of node {v} not strictly sorted")
        # symmetry: (u, v) present iff (v, u) present
        src = np.repeat(np.arange(n), np.diff(self.offsets))
        fwd = {(int(u), int(v)) for u, v in zip(src, self.neighbors)}
        if any((v, u) not in fwd for u, v in fwd):
            raise ValueError("adjacency is not symmetric")

    # -- accessors -----------------------------------------------------

    @property
    def edge_count(self) -> int:
        return len(self.neighbors) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def neighbors_of(self, v: int) -> np.ndarray:
        return self.neighbors[self.offsets[v]:self.offsets[v + 1]]

    def edges(self) -> list[tuple[int, int]]:
        """Each undirected edge once, as (u, v) with u < v."""
        out = []
        for u in range(self.node_count):
            for v in self.neighbors_of(u):
                if u < v:
                    out.append((u, int(v)))
        return out

    def adjacency_dense(self, dtype=np.float64) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count), dtype=dtype)
        for u in range(self.node_count):
            a[u, self.neighbors_of(u)] = 1
        return a

    def with_features(self, features: np.ndarray) -> "Graph":
        return Graph(self.node_count, self.offsets, self.neighbors, features,
                     self.graph_label, self.node_labels)

    def with_label(self, graph_label: int | None) -> "Graph":
        return Graph(self.node_count, self.offsets, self.neighbors, self.features,
                     graph_label, self.node_labels)

    # -- construction --------------------------------------------------

    @staticmethod
    def from_edges(node_count: int, edges: Iterable[tuple[int, int]],
                   features: np.ndarray | None = None,
                   graph_label: int | None = None,
                   node_labels: np.ndarray | None = None) -> "Graph":
        """Build a graph from an edge list.

        Edges are symmetrized and deduplicated; self-loops are dropped.
        """
        pairs = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u < 0 or u >= node_count or v < 0 or v >= node_count:
                raise ValueError(f"edge ({u}, {v}) out of range for {node_count} nodes")
            if u == v:
                continue
            pairs.add((u, v))
            pairs.add((v, u))
        if pairs:
            arr = np.array(sorted(pairs), dtype=np.int64)
            src, dst = arr[:, 0], arr[:, 1]
        else:
            src = dst = np.zeros(0, dtype=np.int64)
        offsets = np.zeros(node_count + 1, dtype=np.int64)
        np.add.at(offsets, src + 1, 1)
        offsets = np.cumsum(offsets)
        if features is None:
            features = np.zeros((node_count, 0))
        return Graph(node_count, offsets, dst, features, graph_label, node_labels)


@dataclass(frozen=True)
class NodeSubgraph:
    """Induced subgraph around a center node, with the local -> parent map.

    ``center`` is the local index of the seed node (always 0 for subgraphs
    built by :func:`induced_subgraph`). Walk-based extraction guarantees the
    subgraph is connected through the walks that selected its nodes; the
    general induction operation itself puts no connectivity requirement on
    the node set.
    """

    center: int
    graph: Graph
    parent_ids: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "parent_ids",
                           _frozen(np.asarray(self.parent_ids, dtype=np.int64)))
        if not (0 <= self.center < self.graph.node_count):
            raise ValueError("center out of range")
        if len(self.parent_ids) != self.graph.node_count:
            raise ValueError("parent_ids length must match subgraph size")


def induced_subgraph(g: Graph, nodes: Sequence[int]) -> NodeSubgraph:
    """Vertex-induced subgraph on ``nodes``; the first entry is the center.

    Local node ordering follows the input ordering and features are copied
    row-wise from the parent.
    """
    ids = np.asarray(list(nodes), dtype=np.int64)
    if len(ids) == 0:
        raise ValueError("node set must be non-empty")
    if len(np.unique(ids)) != len(ids):
        raise ValueError("node set contains duplicates")
    if ids.min() < 0 or ids.max() >= g.node_count:
        raise ValueError("node id out of range")
    local = np.full(g.node_count, -1, dtype=np.int64)
    local[ids] = np.arange(len(ids))
    edges = []
    for li, pid in enumerate(ids):
        for nb in g.neighbors_of(int(pid)):
            lj = local[nb]
            if lj >= 0:
                edges.append((li, int(lj)))
    sub = Graph.from_edges(len(ids), edges, features=g.features[ids].copy())
    return NodeSubgraph(center=0, graph=sub, parent_ids=ids)


def direct_product(g: Graph, h: Graph) -> Graph:
    """Tensor (direct) product graph on node pairs, row-major pairing.

    Node (u, u') maps to index ``u * h.node_count + u'``; a product edge
    exists iff both coordinates step along an edge of their factor.
    Features are ignored (structure only).
    """
    n, m = g.node_count, h.node_count
    deg_g, deg_h = g.degrees, h.degrees
    counts = np.repeat(deg_g, m) * np.tile(deg_h, n)
    offsets = np.zeros(n * m + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    nbrs = np.empty(offsets[-1], dtype=np.int64)
    for u in range(n):
        gu = g.neighbors_of(u) * m
        for up in range(m):
            z = u * m + up
            block = (gu[:, None] + h.neighbors_of(up)[None, :]).ravel()
            nbrs[offsets[z]:offsets[z + 1]] = block
    return Graph(n * m, offsets, nbrs, np.zeros((n * m, 0)))


def degree_features(g: Graph, max_degree: int) -> np.ndarray:
    """One-hot degree encoding of width ``max_degree + 1``.

    Degrees above the cap clamp into the last bucket.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be non-negative")
    idx = np.minimum(g.degrees, max_degree)
    out = np.zeros((g.node_count, max_degree + 1))
    out[np.arange(g.node_count), idx] = 1.0
    return out


def relabel(g: Graph, perm: Sequence[int]) -> Graph:
    """Return the isomorphic graph with node i renamed to perm[i]."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(g.node_count)):
        raise ValueError("perm must be a permutation of the node ids")
    edges = [(int(perm[u]), int(perm[v])) for u, v in g.edges()]
    feats = np.zeros_like(g.features)
    feats[perm] = g.features
    labels = None
    if g.node_labels is not None:
        labels = np.zeros_like(g.node_labels)
        labels[perm] = g.node_labels
    return Graph.from_edges(g.node_count, edges, feats, g.graph_label, labels)


def disjoint_union(g: Graph, h: Graph) -> Graph:
    """Disjoint union with h's node ids shifted past g's."""
    n = g.node_count
    edges = g.edges() + [(u + n, v + n) for u, v in h.edges()]
    f = max(g.feature_dim, h.feature_dim)

    def pad(x):
        return np.pad(x, ((0, 0), (0, f - x.shape[1])))

    feats = np.vstack([pad(g.features), pad(h.features)])
    return Graph.from_edges(n + h.node_count, edges, feats)


# -- small named graphs used across tests and demos ---------------------

def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star_graph(leaves: int) -> Graph:
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])
