"""Dataset ingestion (TU benchmark layout), synthetic generators, and splits.

TU layout, all line-oriented and 1-based:
    <name>_A.txt               "i, j" per directed edge listing
    <name>_graph_indicator.txt  graph id of each node
    <name>_graph_labels.txt     one integer per graph
    <name>_node_labels.txt      optional, one integer per node
    <name>_node_attributes.txt  optional, comma-separated reals per node

Node ids convert to 0-based at this boundary. Attribute-free datasets get
one-hot degree features capped at the global maximum degree.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, degree_features
from .util import FormatError, substream


@dataclass
class Dataset:
    graphs: list[Graph]
    task: str               # "graph" or "node"
    class_count: int
    name: str

    def __post_init__(self):
        if self.task not in ("graph", "node"):
            raise ValueError("task must be 'graph' or 'node'")
        if self.task == "node" and (len(self.graphs) != 1
                                    or self.graphs[0].node_labels is None):
            raise ValueError("node-level datasets hold exactly one labeled graph")

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim

    def labels(self) -> np.ndarray:
        if self.task == "graph":
            return np.array([g.graph_label for g in self.graphs], dtype=np.int64)
        return self.graphs[0].node_labels


@dataclass
class SplitPlan:
    kind: str               # "k-fold" or "masks"
    seed: int
    folds: list = field(default_factory=list)     # [(train ids, test ids), ...]
    masks: tuple | None = None                    # (train, val, test) bool arrays

    def __post_init__(self):
        if self.kind not in ("k-fold", "masks"):
            raise ValueError("kind must be 'k-fold' or 'masks'")


# -- TU format loader ------------------------------------------------------

def _read_lines(directory: str, name: str, suffix: str, required: bool):
    path = os.path.join(directory, f"{name}_{suffix}.txt")
    if not os.path.exists(path):
        if required:
            raise FileNotFoundError(f"required dataset file missing: {path}")
        return None, path
    with open(path) as f:
        return f.read().splitlines(), path


def load_tu_dataset(directory: str, name: str) -> Dataset:
    """Load a TU-layout dataset directory.

    Edges are deduplicated and symmetrized; self-loops are dropped. Node
    labels become one-hot feature blocks (graph tasks only), attributes are
    parsed as comma-separated reals, and graphs without either get degree
    one-hot features capped at the global max degree. Labels are remapped
    to a contiguous 0-based range. A dataset with a single graph carrying
    node labels loads as a node-level task, with the node labels used as
    targets rather than features.
    """
    a_lines, a_path = _read_lines(directory, name, "A", required=True)
    ind_lines, ind_path = _read_lines(directory, name, "graph_indicator", required=True)
    gl_lines, gl_path = _read_lines(directory, name, "graph_labels", required=True)
    nl_lines, nl_path = _read_lines(directory, name, "node_labels", required=False)
    na_lines, na_path = _read_lines(directory, name, "node_attributes", required=False)

    node_graph = np.zeros(len(ind_lines), dtype=np.int64)
    for i, line in enumerate(ind_lines):
        try:
            node_graph[i] = int(line.strip())
        except ValueError:
            raise FormatError(f"{ind_path}:{i + 1}: bad graph indicator {line!r}")
    if len(node_graph) == 0:
        raise FormatError(f"{ind_path}: dataset has no nodes")
    graph_count = int(node_graph.max())
    if node_graph.min() < 1:
        raise FormatError(f"{ind_path}: graph ids must be 1-based")
    n_total = len(node_graph)

    raw_graph_labels = []
    for i, line in enumerate(gl_lines):
        if not line.strip():
            continue
        try:
            raw_graph_labels.append(int(line.strip()))
        except ValueError:
            raise FormatError(f"{gl_path}:{i + 1}: bad graph label {line!r}")
    if len(raw_graph_labels) != graph_count:
        raise FormatError(f"{gl_path}: expected {graph_count} labels, "
                          f"got {len(raw_graph_labels)}")

    node_labels = None
    if nl_lines is not None:
        node_labels = np.zeros(n_total, dtype=np.int64)
        if len(nl_lines) < n_total:
            raise FormatError(f"{nl_path}: expected {n_total} node labels")
        for i in range(n_total):
            try:
                node_labels[i] = int(nl_lines[i].strip())
            except ValueError:
                raise FormatError(f"{nl_path}:{i + 1}: bad node label")

    attributes = None
    if na_lines is not None:
        if len(na_lines) < n_total:
            raise FormatError(f"{na_path}: expected {n_total} attribute rows")
        rows = []
        for i in range(n_total):
            try:
                rows.append([float(x) for x in na_lines[i].replace(",", " ").split()])
            except ValueError:
                raise FormatError(f"{na_path}:{i + 1}: bad attribute row")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise FormatError(f"{na_path}: inconsistent attribute widths {sorted(widths)}")
        attributes = np.array(rows)

    # edges, grouped per graph with local 0-based ids
    first_node = np.zeros(graph_count + 1, dtype=np.int64)
    counts = np.bincount(node_graph, minlength=graph_count + 1)
    np.cumsum(counts[1:], out=first_node[1:])
    if np.any(np.diff(node_graph) < 0):
        raise FormatError(f"{ind_path}: node blocks must be contiguous per graph")
    edges_per_graph: list[list[tuple[int, int]]] = [[] for _ in range(graph_count)]
    for ln, line in enumerate(a_lines):
        if not line.strip():
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise FormatError(f"{a_path}:{ln + 1}: expected 'i, j', got {line!r}")
        u, v = int(parts[0]), int(parts[1])
        if not (1 <= u <= n_total and 1 <= v <= n_total):
            raise FormatError(f"{a_path}:{ln + 1}: node id out of range")
        gu, gv = node_graph[u - 1], node_graph[v - 1]
        if gu != gv:
            raise FormatError(f"{a_path}:{ln + 1}: edge crosses graphs {gu} and {gv}")
        base = first_node[gu - 1]
        edges_per_graph[gu - 1].append((u - 1 - base, v - 1 - base))

    task = "node" if (graph_count == 1 and node_labels is not None) else "graph"

    label_map = {lab: i for i, lab in enumerate(sorted(set(raw_graph_labels)))}
    node_label_map = None
    if node_labels is not None:
        node_label_map = {lab: i for i, lab in
                          enumerate(sorted(set(node_labels.tolist())))}
    graphs = []
    for gi in range(graph_count):
        n = counts[gi + 1]
        lo = first_node[gi]
        feats = []
        if attributes is not None:
            feats.append(attributes[lo:lo + n])
        if node_labels is not None and task == "graph":
            onehot = np.zeros((n, len(node_label_map)))
            for i in range(n):
                onehot[i, node_label_map[node_labels[lo + i]]] = 1.0
            feats.append(onehot)
        features = np.hstack(feats) if feats else None
        nl = None
        if task == "node":
            nl = np.array([node_label_map[x] for x in node_labels[lo:lo + n]],
                          dtype=np.int64)
        graphs.append(Graph.from_edges(int(n), edges_per_graph[gi],
                                       features=features,
                                       graph_label=label_map[raw_graph_labels[gi]],
                                       node_labels=nl))
    if graphs and graphs[0].feature_dim == 0:
        graphs = _with_degree_features(graphs)
    class_count = (len(label_map) if task == "graph"
                   else len(set(graphs[0].node_labels.tolist())))
    return Dataset(graphs=graphs, task=task, class_count=class_count, name=name)


def _with_degree_features(graphs: list[Graph]) -> list[Graph]:
    cap = max(int(g.degrees.max()) if g.node_count else 0 for g in graphs)
    return [g.with_features(degree_features(g, cap)) for g in graphs]


def _is_degree_onehot(graphs: list[Graph]) -> bool:
    """True when features are exactly the loader's degree one-hot convention."""
    if not graphs or graphs[0].feature_dim == 0:
        return False
    cap = max(int(g.degrees.max()) if g.node_count else 0 for g in graphs)
    if graphs[0].feature_dim != cap + 1:
        return False
    return all(np.array_equal(g.features, degree_features(g, cap)) for g in graphs)


def save_tu_dataset(dataset: Dataset, directory: str) -> None:
    """Serialize to the TU layout (directed listing, 1-based ids).

    Degree one-hot features are a loader-side convention and are skipped;
    any other features are written as node attributes so they round-trip.
    """
    os.makedirs(directory, exist_ok=True)
    name = dataset.name
    a, ind, gl = [], [], []
    offset = 0
    for gi, g in enumerate(dataset.graphs):
        for u in range(g.node_count):
            ind.append(str(gi + 1))
            for v in g.neighbors_of(u):
                a.append(f"{offset + u + 1}, {offset + int(v) + 1}")
        gl.append(str(g.graph_label if g.graph_label is not None else 0))
        offset += g.node_count

    def write(suffix, lines):
        with open(os.path.join(directory, f"{name}_{suffix}.txt"), "w") as f:
            f.write("\n".join(lines) + "\n")

    write("A", a)
    write("graph_indicator", ind)
    write("graph_labels", gl)
    if dataset.task == "node":
        labels = [str(int(x)) for x in dataset.graphs[0].node_labels]
        write("node_labels", labels)
    if dataset.feature_dim > 0 and not _is_degree_onehot(dataset.graphs):
        rows = []
        for g in dataset.graphs:
            for u in range(g.node_count):
                rows.append(", ".join(repr(float(x)) for x in g.features[u]))
        write("node_attributes", rows)


# -- synthetic generators --------------------------------------------------

def _barabasi_albert(n: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Preferential-attachment graph via the repeated-endpoint trick."""
    m = min(m, n - 1)
    edges = []
    repeated: list[int] = []
    targets = list(range(m))
    for new in range(m, n):
        picked = set(targets)
        for t in picked:
            edges.append((new, t))
        repeated.extend(picked)
        repeated.extend([new] * len(picked))
        targets = []
        seen = set()
        while len(targets) < m:
            cand = int(repeated[rng.integers(0, len(repeated))])
            if cand not in seen:
                seen.add(cand)
                targets.append(cand)
    return edges


_META_LAYOUTS = ("caveman", "cycle", "grid", "ladder", "star", "tree")


def _meta_edges(layout: str, c: int,
                rng: np.random.Generator | None = None) -> list[tuple[int, int]]:
    """Community-level wiring shapes; every layout is connected."""
    if layout == "cycle":
        return [(i, (i + 1) % c) for i in range(c)]
    if layout == "tree":
        # random attachment tree: acyclic with branching hubs and leaves
        return [(i, int(rng.integers(0, i))) for i in range(1, c)]
    if layout == "star":
        return [(0, i) for i in range(1, c)]
    if layout == "caveman":
        return [(i, j) for i in range(c) for j in range(i + 1, c)]
    if layout == "grid":
        rows = int(np.floor(np.sqrt(c)))
        cols = int(np.ceil(c / rows))
        out = []
        for i in range(c):
            r, col = divmod(i, cols)
            if col + 1 < cols and i + 1 < c:
                out.append((i, i + 1))
            if (r + 1) * cols + col < c:
                out.append((i, (r + 1) * cols + col))
        return out
    if layout == "ladder":
        half = (c + 1) // 2
        out = []
        for i in range(half - 1):
            out.append((i, i + 1))                    # first rail
            if half + i + 1 < c:
                out.append((half + i, half + i + 1))  # second rail
        for i in range(c - half):
            out.append((i, half + i))                 # rungs
        return out
    raise ValueError(f"unknown layout {layout}")


def _community_graph(layout: str, rng: np.random.Generator,
                     size_range: tuple[int, int]) -> Graph:
    c = int(rng.integers(8, 16))
    sizes = rng.integers(size_range[0], size_range[1] + 1, size=c)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    n = int(starts[-1])
    edges: list[tuple[int, int]] = []
    for k in range(c):
        m = int(rng.integers(1, 4))
        for u, v in _barabasi_albert(int(sizes[k]), m, rng):
            edges.append((starts[k] + u, starts[k] + v))
    p_inter = rng.uniform(0.05, 0.15)
    for i, j in _meta_edges(layout, c, rng):
        si, sj = int(sizes[i]), int(sizes[j])
        # one guaranteed bridge so the intended shape always survives
        edges.append((starts[i] + int(rng.integers(0, si)),
                      starts[j] + int(rng.integers(0, sj))))
        hits = np.nonzero(rng.random((si, sj)) < p_inter)
        for u, v in zip(*hits):
            edges.append((starts[i] + int(u), starts[j] + int(v)))
    return Graph.from_edges(n, edges)


def _gen_shapes(name: str, layouts: list[str], count: int, seed: int,
                size_range: tuple[int, int]) -> Dataset:
    if count < len(layouts):
        raise ValueError(f"count must be at least {len(layouts)} for balance")
    graphs = []
    for idx in range(count):
        label = idx % len(layouts)
        rng = substream(seed, idx)
        g = _community_graph(layouts[label], rng, size_range)
        graphs.append(g.with_label(label))
    graphs = _with_degree_features(graphs)
    return Dataset(graphs=graphs, task="graph", class_count=len(layouts), name=name)


def gen_graph_cycle(count: int, seed: int) -> Dataset:
    """Two-class community graphs: ring-wired versus tree-wired."""
    if count < 2:
        raise ValueError("count must be >= 2")
    return _gen_shapes("GraphCycle", ["cycle", "tree"], count, seed,
                       size_range=(10, 20))


def gen_graph_five(count: int, seed: int) -> Dataset:
    """Five-class community graphs: caveman, cycle, grid, ladder, star."""
    if count < 5:
        raise ValueError("count must be >= 5")
    return _gen_shapes("GraphFive", ["caveman", "cycle", "grid", "ladder", "star"],
                       count, seed, size_range=(10, 20))


# -- splits ------------------------------------------------------------------

def make_folds(dataset: Dataset, k: int, seed: int) -> SplitPlan:
    """Stratified k-fold partition with globally balanced fold sizes."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if dataset.task != "graph":
        raise ValueError("folds apply to graph-level datasets")
    labels = dataset.labels()
    rng = substream(seed, 600)
    fold_members: list[list[int]] = [[] for _ in range(k)]
    loads = np.zeros(k, dtype=np.int64)
    for c in np.unique(labels):
        members = rng.permutation(np.nonzero(labels == c)[0])
        if len(members) < k:
            import warnings
            warnings.warn(f"class {c} has fewer members ({len(members)}) than folds ({k}); "
                          "stratification is degenerate")
        base, extra = divmod(len(members), k)
        # leftovers go to the currently lightest folds (ties by index)
        order = np.lexsort((np.arange(k), loads))
        gets = np.full(k, base, dtype=np.int64)
        gets[order[:extra]] += 1
        pos = 0
        for f in range(k):
            fold_members[f].extend(members[pos:pos + gets[f]].tolist())
            pos += gets[f]
        loads += gets
    all_ids = set(range(len(dataset.graphs)))
    folds = []
    for f in range(k):
        test = sorted(fold_members[f])
        train = sorted(all_ids - set(test))
        folds.append((np.array(train, dtype=np.int64), np.array(test, dtype=np.int64)))
    return SplitPlan(kind="k-fold", seed=seed, folds=folds)


def make_node_splits(dataset: Dataset, ratios: tuple[float, float, float],
                     seed: int) -> SplitPlan:
    """Per-class stratified (train, val, test) masks.

    Sizes are per-class floors of the ratios; leftover nodes go to train
    first, then val, then test.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    if dataset.task != "node":
        raise ValueError("node splits apply to node-level datasets")
    labels = dataset.graphs[0].node_labels
    n = len(labels)
    rng = substream(seed, 601)
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    for c in np.unique(labels):
        members = rng.permutation(np.nonzero(labels == c)[0])
        if len(members) == 0:
            raise ValueError(f"class {c} is empty")
        sizes = [int(np.floor(r * len(members))) for r in ratios]
        leftover = len(members) - sum(sizes)
        for i in range(leftover):
            sizes[i % 3] += 1
        pos = 0
        for mi in range(3):
            masks[mi][members[pos:pos + sizes[mi]]] = True
            pos += sizes[mi]
    return SplitPlan(kind="masks", seed=seed, masks=tuple(masks))
