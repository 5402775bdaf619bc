"""Random walk sampling, anonymity mapping, and walk-based subgraph extraction.

A walk's anonymous pattern replaces node identities with first-occurrence
indices, which makes it invariant under relabeling. Frequent patterns over
a whole graph pick out which sampled walks contribute nodes to each
center's extracted subgraph.
"""

from __future__ import annotations

import io
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .graph import Graph, NodeSubgraph, induced_subgraph
from .util import BudgetError, substream


@dataclass(frozen=True)
class WalkConfig:
    walk_length: int = 8
    walks_per_node: int = 20
    pattern_budget: int = 5
    subgraph_cap: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.walk_length < 1:
            raise ValueError("walk_length must be >= 1")
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be >= 1")
        if self.pattern_budget < 1:
            raise ValueError("pattern_budget must be >= 1")
        if self.subgraph_cap < 1:
            raise ValueError("subgraph_cap must be >= 1")


def sample_walks(g: Graph, v: int, cfg: WalkConfig,
                 rng: np.random.Generator) -> list[tuple[int, ...]]:
    """``walks_per_node`` uniform random walks of exactly ``walk_length`` steps.

    Every step picks a neighbor uniformly; an isolated start yields the
    empty list (a walker elsewhere can always backtrack, so it never
    strands mid-walk on an undirected graph).
    """
    if not (0 <= v < g.node_count):
        raise ValueError("start node out of range")
    if g.offsets[v] == g.offsets[v + 1]:
        return []
    n_w, length = cfg.walks_per_node, cfg.walk_length
    walks = np.empty((n_w, length + 1), dtype=np.int64)
    walks[:, 0] = v
    pos = walks[:, 0]
    deg = g.degrees
    for step in range(1, length + 1):
        pick = rng.integers(0, deg[pos])
        pos = g.neighbors[g.offsets[pos] + pick]
        walks[:, step] = pos
    return [tuple(int(x) for x in row) for row in walks]


def to_anonymous(walk: tuple[int, ...]) -> tuple[int, ...]:
    """Map node ids to their index of first appearance along the walk."""
    if len(walk) == 0:
        raise ValueError("walk must be non-empty")
    first: dict[int, int] = {}
    out = []
    for node in walk:
        if node not in first:
            first[node] = len(first)
        out.append(first[node])
    return tuple(out)


def top_patterns(pattern_counts: Counter, budget: int) -> list[tuple[int, ...]]:
    """The ``budget`` most frequent patterns; ties break lexicographically.

    Returns all patterns when fewer distinct ones exist.
    """
    if not pattern_counts:
        raise ValueError("pattern multiset must be non-empty")
    ranked = sorted(pattern_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [pat for pat, _ in ranked[:budget]]


def extract_subgraph(g: Graph, v: int, walks: list[tuple[int, ...]],
                     patterns, cap: int | None = None) -> NodeSubgraph:
    """Induce the subgraph on the center plus nodes of pattern-matching walks.

    Nodes are kept in first-visit order (walks in sampling order, positions
    within each walk); when a cap is given, the latest-visited nodes beyond
    it are dropped. Falls back to the singleton subgraph when no walk
    matches.
    """
    pattern_set = set(patterns)
    ordered = [v]
    seen = {v}
    for walk in walks:
        if walk[0] != v:
            raise ValueError("all walks must start at the center")
        if to_anonymous(walk) in pattern_set:
            for node in walk:
                if node not in seen:
                    seen.add(node)
                    ordered.append(node)
    if cap is not None:
        ordered = ordered[:cap]
    return induced_subgraph(g, ordered)


def enumerate_anonymous_walks(g: Graph, v: int, length: int,
                              budget: int = 10**7) -> Counter:
    """Exact anonymous-pattern multiset over all length-l walks from v.

    Exhaustive depth-first enumeration; raises BudgetError when the walk
    count would exceed ``budget``.
    """
    if not (0 <= v < g.node_count):
        raise ValueError("start node out of range")
    nbrs = [tuple(int(x) for x in g.neighbors_of(u)) for u in range(g.node_count)]
    counts: Counter = Counter()
    remaining = budget
    first = {v: 0}
    pattern = [0]

    def visit(u: int, depth: int):
        nonlocal remaining
        if depth == length:
            counts[tuple(pattern)] += 1
            remaining -= 1
            if remaining < 0:
                raise BudgetError("walk enumeration exceeded its budget")
            return
        for w in nbrs[u]:
            fresh = w not in first
            if fresh:
                first[w] = len(first)
            pattern.append(first[w])
            visit(w, depth + 1)
            pattern.pop()
            if fresh:
                del first[w]

    visit(v, 0)
    return counts


def walk_distributions_distinguish(g: Graph, v: int, h: Graph, vp: int,
                                   length: int, budget: int = 10**7) -> bool:
    """True iff the normalized anonymous-walk distributions differ exactly.

    Compares by integer cross-multiplication, so there is no tolerance to
    tune; isomorphic rooted graphs always compare equal.
    """
    c1 = enumerate_anonymous_walks(g, v, length, budget)
    c2 = enumerate_anonymous_walks(h, vp, length, budget)
    t1, t2 = sum(c1.values()), sum(c2.values())
    if t1 == 0 or t2 == 0:
        return (t1 == 0) != (t2 == 0)
    for pat in set(c1) | set(c2):
        if c1.get(pat, 0) * t2 != c2.get(pat, 0) * t1:
            return True
    return False


# -- whole-dataset extraction and the on-disk cache ----------------------

CACHE_MAGIC = "mose-subgraphs v1"


@dataclass
class SubgraphCache:
    """Extracted subgraph node lists for every (graph, node) of a dataset."""

    dataset_name: str
    cfg: WalkConfig
    # records[g][v] = parent-id list (center first) for node v of graph g
    records: list[list[list[int]]]
    pattern_tables: list[list[tuple[tuple[int, ...], int]]]

    def subgraph(self, g: Graph, graph_idx: int, v: int) -> NodeSubgraph:
        return induced_subgraph(g, self.records[graph_idx][v])


def _extract_one_graph(g: Graph, graph_idx: int, cfg: WalkConfig):
    walks_by_node = []
    counts: Counter = Counter()
    for v in range(g.node_count):
        rng = substream(cfg.seed, graph_idx, v)
        walks = sample_walks(g, v, cfg, rng)
        walks_by_node.append(walks)
        for w in walks:
            counts[to_anonymous(w)] += 1
    if counts:
        selected = top_patterns(counts, cfg.pattern_budget)
    else:
        selected = []
    records = []
    for v in range(g.node_count):
        sub_nodes = [v]
        seen = {v}
        pattern_set = set(selected)
        for walk in walks_by_node[v]:
            if to_anonymous(walk) in pattern_set:
                for node in walk:
                    if node not in seen:
                        seen.add(node)
                        sub_nodes.append(node)
        records.append(sub_nodes[:cfg.subgraph_cap])
    table = [(pat, counts[pat]) for pat in selected]
    return records, table


def extract_dataset(graphs: list[Graph], dataset_name: str, cfg: WalkConfig,
                    threads: int = 1) -> SubgraphCache:
    """Run pattern counting and subgraph extraction over every graph.

    Pattern selection is global within each graph; per-node walk streams
    are keyed by (seed, graph, node), so the result is identical for any
    thread count.
    """
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda item: _extract_one_graph(item[1], item[0], cfg),
                                    enumerate(graphs)))
    else:
        results = [_extract_one_graph(g, i, cfg) for i, g in enumerate(graphs)]
    return SubgraphCache(dataset_name=dataset_name, cfg=cfg,
                         records=[r for r, _ in results],
                         pattern_tables=[t for _, t in results])


def save_cache(path: str, cache: SubgraphCache) -> None:
    buf = io.StringIO()
    c = cache.cfg
    buf.write(CACHE_MAGIC + "\n")
    buf.write(f"dataset={cache.dataset_name} seed={c.seed} walk_length={c.walk_length} "
              f"walks_per_node={c.walks_per_node} pattern_budget={c.pattern_budget} "
              f"cap={c.subgraph_cap}\n")
    for gi, recs in enumerate(cache.records):
        buf.write(f"g {gi}\n")
        for pat, cnt in cache.pattern_tables[gi]:
            buf.write("p " + ",".join(str(x) for x in pat) + f" {cnt}\n")
        for nodes in recs:
            buf.write("v " + " ".join(str(x) for x in nodes) + "\n")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write(buf.getvalue())


def load_cache(path: str) -> SubgraphCache:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a subgraph cache file")
    header = dict(kv.split("=", 1) for kv in lines[1].split())
    cfg = WalkConfig(walk_length=int(header["walk_length"]),
                     walks_per_node=int(header["walks_per_node"]),
                     pattern_budget=int(header["pattern_budget"]),
                     subgraph_cap=int(header["cap"]),
                     seed=int(header["seed"]))
    records: list[list[list[int]]] = []
    tables: list[list[tuple[tuple[int, ...], int]]] = []
    for line in lines[2:]:
        if line.startswith("g "):
            records.append([])
            tables.append([])
        elif line.startswith("p "):
            _, pat, cnt = line.split(" ")
            tables[-1].append((tuple(int(x) for x in pat.split(",")), int(cnt)))
        elif line.startswith("v "):
            records[-1].append([int(x) for x in line[2:].split()])
        elif line:
            raise ValueError(f"{path}: unrecognized cache line {line!r}")
    return SubgraphCache(dataset_name=header["dataset"], cfg=cfg,
                         records=records, pattern_tables=tables)
