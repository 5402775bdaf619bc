"""Walk-count graph kernels: discrete, feature-weighted, and hidden-graph forms.

The p-step kernel counts simultaneous walks on two graphs. The discrete
form sums entries of powers of the product-graph adjacency; the
feature-weighted form contracts those counts against node-feature dot
products without ever materializing the product graph; the hidden-graph
form evaluates the same bilinear form against a small learnable graph and
comes with analytic gradients.

All kernel math runs in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, NodeSubgraph, direct_product
from .util import BudgetError

STEP_MODES = ("single-p", "sum-over-p", "concat-over-p")


@dataclass(frozen=True)
class KernelConfig:
    """Step count, per-step weights, and how steps enter the feature map.

    ``lambdas`` has length ``max_step + 1`` (index p weighs the p-step
    term); the step-0 term is used only by the discrete kernel and by
    sum-over-p aggregation, never by the per-step feature map, which runs
    over p = 1..max_step.
    """

    max_step: int = 3
    lambdas: tuple = None
    step_mode: str = "concat-over-p"

    def __post_init__(self):
        if self.max_step < 1:
            raise ValueError("max_step must be >= 1")
        lam = self.lambdas
        if lam is None:
            lam = (1.0,) * (self.max_step + 1)
        lam = tuple(float(x) for x in lam)
        if len(lam) != self.max_step + 1:
            raise ValueError("lambdas must have length max_step + 1")
        if any(x < 0 for x in lam):
            raise ValueError("lambdas must be non-negative")
        if self.step_mode not in STEP_MODES:
            raise ValueError(f"step_mode must be one of {STEP_MODES}")
        object.__setattr__(self, "lambdas", lam)

    @staticmethod
    def geometric(max_step: int, decay: float, step_mode: str = "concat-over-p") -> "KernelConfig":
        return KernelConfig(max_step, tuple(decay ** p for p in range(max_step + 1)), step_mode)

    @property
    def feature_width(self) -> int:
        """Kernel features contributed per hidden graph."""
        return self.max_step if self.step_mode == "concat-over-p" else 1


@dataclass
class HiddenGraph:
    """Small learnable structure probe: raw weights W and features Z.

    The effective adjacency is the rectified symmetrization of W with a
    zero diagonal, so it is always non-negative, symmetric and loop-free.
    """

    W: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.Z = np.asarray(self.Z, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[0] != self.W.shape[1]:
            raise ValueError("W must be square")
        if self.W.shape[0] < 1:
            raise ValueError("hidden graph needs at least one node")
        if self.Z.ndim != 2 or self.Z.shape[0] != self.W.shape[0]:
            raise ValueError("Z must have one row per hidden node")

    @property
    def size(self) -> int:
        return self.W.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.Z.shape[1]

    def effective_adjacency(self) -> np.ndarray:
        r = np.maximum(0.0, 0.5 * (self.W + self.W.T))
        np.fill_diagonal(r, 0.0)
        return r

    def as_graph(self) -> Graph:
        """Materialize the rectified adjacency as a graph (weights > 0 become edges)."""
        r = self.effective_adjacency()
        edges = [(i, j) for i in range(self.size) for j in range(i + 1, self.size) if r[i, j] > 0]
        return Graph.from_edges(self.size, edges, features=self.Z.copy())


@dataclass(frozen=True)
class KernelGrad:
    """Kernel value together with its gradients w.r.t. the hidden graph."""

    value: float
    d_W: np.ndarray
    d_Z: np.ndarray


# -- discrete kernel and its enumeration oracle -------------------------

def rwk_discrete(g: Graph, h: Graph, cfg: KernelConfig) -> float:
    """Sum over p of lambda_p times the total p-step walk-pair count.

    Uses integer powers of the product adjacency, so values are exact
    whenever the weights are exact.
    """
    prod = direct_product(g, h)
    a = prod.adjacency_dense(dtype=np.int64)
    power = np.eye(prod.node_count, dtype=np.int64)
    total = cfg.lambdas[0] * float(prod.node_count)
    for p in range(1, cfg.max_step + 1):
        power = power @ a
        total += cfg.lambdas[p] * float(power.sum())
    return total


def _oracle_counts(g: Graph, h: Graph, max_p: int, budget: int) -> list[int]:
    """Counts of simultaneous walk pairs for every length 0..max_p.

    Walks both graphs in tandem, one neighbor pair at a time; no adjacency
    powers anywhere. Aborts with BudgetError once the enumeration would
    visit more than ``budget`` walk pairs.
    """
    nbr_g = [tuple(int(x) for x in g.neighbors_of(v)) for v in range(g.node_count)]
    nbr_h = [tuple(int(x) for x in h.neighbors_of(v)) for v in range(h.node_count)]
    counts = [0] * (max_p + 1)
    remaining = budget

    def visit(u: int, up: int, depth: int):
        nonlocal remaining
        counts[depth] += 1
        remaining -= 1
        if remaining < 0:
            raise BudgetError("walk-pair enumeration exceeded its budget")
        if depth == max_p:
            return
        for v in nbr_g[u]:
            for vp in nbr_h[up]:
                visit(v, vp, depth + 1)

    for u in range(g.node_count):
        for up in range(h.node_count):
            visit(u, up, 0)
    return counts


def rwk_oracle(g: Graph, h: Graph, p: int, budget: int = 10**7) -> int:
    """Exact p-step walk-pair count by explicit simultaneous enumeration."""
    if p < 0:
        raise ValueError("p must be non-negative")
    return _oracle_counts(g, h, p, budget)[p]


# -- feature-weighted kernel --------------------------------------------

def rwk_diff(g: Graph, h: Graph, p: int) -> float:
    """Feature-weighted p-step kernel, computed as <T, A^p T B^p>.

    T is the cross-graph feature-similarity matrix X X'^T; the product
    adjacency is never materialized.
    """
    if g.feature_dim != h.feature_dim:
        raise ValueError("feature dimensions must match")
    t = g.features @ h.features.T
    a = g.adjacency_dense()
    b = h.adjacency_dense()
    m = t
    for _ in range(p):
        m = a @ m @ b
    return float(np.sum(t * m))


# -- hidden-graph kernel with analytic gradients ------------------------

def _hidden_parts(sub: NodeSubgraph, hidden: HiddenGraph):
    a = sub.graph.adjacency_dense()
    x = sub.graph.features
    if x.shape[1] != hidden.feature_dim:
        raise ValueError("feature dimensions must match")
    r = hidden.effective_adjacency()
    t = hidden.Z @ x.T
    return a, x, r, t


def rwk_hidden(sub: NodeSubgraph, hidden: HiddenGraph, p: int) -> float:
    """p-step kernel between a subgraph and a hidden graph.

    Evaluates sum(T * (R^p T A^p)) with R the rectified hidden adjacency,
    applying A step by step rather than forming its power.
    """
    a, _, r, t = _hidden_parts(sub, hidden)
    m = t
    for _ in range(p):
        m = r @ m @ a
    return float(np.sum(t * m))


def rwk_hidden_grad(sub: NodeSubgraph, hidden: HiddenGraph, p: int) -> KernelGrad:
    """Kernel value plus d/dW and d/dZ through rectification and symmetrization.

    The rectifier contributes subgradient 0 at its kink, and the forced-zero
    diagonal never receives gradient.
    """
    a, x, r, t = _hidden_parts(sub, hidden)
    s = hidden.size
    # V_p = T A^p, R powers up to p
    v = t
    for _ in range(p):
        v = v @ a
    r_pows = [np.eye(s)]
    for _ in range(p):
        r_pows.append(r_pows[-1] @ r)
    c = v @ t.T                       # T A^p T^T, symmetric
    value = float(np.sum(r_pows[p] * c))
    d_z = 2.0 * (r_pows[p] @ v) @ x
    d_r = np.zeros((s, s))
    for k in range(p):
        d_r += r_pows[k] @ c @ r_pows[p - 1 - k]
    w_sym = 0.5 * (hidden.W + hidden.W.T)
    mask = (w_sym > 0).astype(np.float64)
    np.fill_diagonal(mask, 0.0)
    g_sym = d_r * mask
    d_w = 0.5 * (g_sym + g_sym.T)
    return KernelGrad(value=value, d_W=d_w, d_Z=d_z)


def kernel_features(sub: NodeSubgraph, hidden_graphs: list[HiddenGraph],
                    cfg: KernelConfig) -> np.ndarray:
    """Per-step kernel values against each hidden graph, flattened per mode.

    concat-over-p keeps one weighted value per (hidden graph, step);
    sum-over-p and single-p reduce the step axis to one value per hidden
    graph. Step 0 is excluded: it ignores structure.
    """
    vals = []
    for hg in hidden_graphs:
        per_step = [rwk_hidden(sub, hg, p) for p in range(1, cfg.max_step + 1)]
        if cfg.step_mode == "concat-over-p":
            vals.extend(cfg.lambdas[p] * per_step[p - 1] for p in range(1, cfg.max_step + 1))
        elif cfg.step_mode == "sum-over-p":
            vals.append(sum(cfg.lambdas[p] * per_step[p - 1] for p in range(1, cfg.max_step + 1)))
        else:  # single-p
            vals.append(cfg.lambdas[cfg.max_step] * per_step[-1])
    return np.array(vals)


def expert_embed(sub: NodeSubgraph, hidden_graphs: list[HiddenGraph],
                 cfg: KernelConfig, transform) -> np.ndarray:
    """Kernel feature vector against an expert's hidden graphs, transformed.

    ``transform`` is the expert's feed-forward map (anything callable on a
    1-d vector; identity is allowed).
    """
    sizes = {hg.size for hg in hidden_graphs}
    dims = {hg.feature_dim for hg in hidden_graphs}
    if len(sizes) != 1 or len(dims) != 1:
        raise ValueError("an expert's hidden graphs must share size and feature dim")
    return np.asarray(transform(kernel_features(sub, hidden_graphs, cfg)))


# -- serialization and export -------------------------------------------

HIDDEN_GRAPH_VERSION = 1


def save_hidden_graph(path: str, hidden: HiddenGraph) -> None:
    np.savez(path, version=HIDDEN_GRAPH_VERSION,
             s=hidden.size, f=hidden.feature_dim, W=hidden.W, Z=hidden.Z)


def load_hidden_graph(path: str) -> HiddenGraph:
    data = np.load(path)
    if int(data["version"]) != HIDDEN_GRAPH_VERSION:
        raise ValueError(f"unsupported hidden-graph record version {int(data['version'])}")
    return HiddenGraph(W=data["W"], Z=data["Z"])


def hidden_graph_to_dot(hidden: HiddenGraph, name: str = "hidden",
                        prune_threshold: float = 0.01) -> str:
    """DOT text for the rectified adjacency; edge thickness tracks weight.

    Edges at or below the prune threshold are omitted. An empty graph still
    yields a valid DOT document with its nodes.
    """
    r = hidden.effective_adjacency()
    lines = [f"graph {name} {{", "  node [shape=circle];"]
    for i in range(hidden.size):
        lines.append(f"  n{i};")
    wmax = r.max() if r.size else 0.0
    for i in range(hidden.size):
        for j in range(i + 1, hidden.size):
            w = r[i, j]
            if w > prune_threshold:
                pen = 1.0 + 4.0 * (w / wmax if wmax > 0 else 0.0)
                lines.append(f'  n{i} -- n{j} [penwidth={pen:.3f}, label="{w:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
