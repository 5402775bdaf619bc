"""Subgraph-aware expert routing: gating, expert bank, combination, readout.

Two layers of API live here. The single-node functions (gate_aggregate,
gate_scores, route, combine, readout, forward) are the reference pipeline,
convenient for inspection and testing. The batched group engine at the
bottom computes the same quantities for many nodes at once with analytic
backprop; the trainer is built on it, and tests pin the two paths to each
other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, NodeSubgraph
from .kernel import HiddenGraph, KernelConfig, kernel_features
from .nn import Mlp, relu, sigmoid, softmax, softplus
from .util import substream

GATE_ACTIVATIONS = {
    "relu": relu,
    "tanh": np.tanh,
    "identity": lambda x: x,
}


@dataclass
class GatingParams:
    """Clean and noisy score projections, one column per expert."""

    W_g: np.ndarray
    W_n: np.ndarray

    def __post_init__(self):
        self.W_g = np.asarray(self.W_g, dtype=np.float64)
        self.W_n = np.asarray(self.W_n, dtype=np.float64)
        if self.W_g.shape != self.W_n.shape:
            raise ValueError("W_g and W_n must have the same shape")
        if not (np.isfinite(self.W_g).all() and np.isfinite(self.W_n).all()):
            raise ValueError("gating parameters must be finite")

    @property
    def expert_count(self) -> int:
        return self.W_g.shape[1]


@dataclass(frozen=True)
class Route:
    """Chosen expert ids (sorted) and their positive softmax weights."""

    indices: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if len(self.indices) != len(w):
            raise ValueError("indices and weights must align")
        if list(self.indices) != sorted(set(self.indices)):
            raise ValueError("indices must be sorted and distinct")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")


@dataclass
class Expert:
    """N hidden graphs of one size plus the expert's feed-forward map."""

    W: np.ndarray          # (N, s, s) raw hidden adjacencies
    Z: np.ndarray          # (N, s, f) hidden features
    transform: Mlp

    @property
    def size(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_count(self) -> int:
        return self.W.shape[0]

    @property
    def hidden(self) -> list[HiddenGraph]:
        return [HiddenGraph(self.W[i], self.Z[i]) for i in range(self.hidden_count)]

    def rectified(self) -> np.ndarray:
        r = np.maximum(0.0, 0.5 * (self.W + self.W.transpose(0, 2, 1)))
        idx = np.arange(self.size)
        r[:, idx, idx] = 0.0
        return r


@dataclass
class ExpertBank:
    experts: list[Expert]

    def __post_init__(self):
        sizes = self.sizes
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("expert sizes must be strictly increasing")
        if len({e.transform.out_dim for e in self.experts}) != 1:
            raise ValueError("all expert transforms must share an output dimension")

    @property
    def sizes(self) -> tuple:
        return tuple(e.size for e in self.experts)

    @property
    def expert_count(self) -> int:
        return len(self.experts)


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to rebuild a model's shape (not its weights)."""

    feature_dim: int
    class_count: int
    experts: int = 5
    hidden_per_expert: int = 8
    embed_dim: int = 32
    k_ept: int = 2
    sizes: tuple | None = None   # default: 2 .. experts+1
    combine_mode: str = "weighted-sum"
    readout_mode: str = "mean"
    gate_activation: str = "relu"
    task: str = "graph"

    def __post_init__(self):
        if self.combine_mode not in ("weighted-sum", "concat"):
            raise ValueError("combine_mode must be weighted-sum or concat")
        if self.readout_mode not in ("mean", "sum", "max"):
            raise ValueError("readout_mode must be mean, sum or max")
        if self.gate_activation not in GATE_ACTIVATIONS:
            raise ValueError(f"gate_activation must be one of {sorted(GATE_ACTIVATIONS)}")
        if self.task not in ("graph", "node"):
            raise ValueError("task must be graph or node")
        if not (1 <= self.k_ept <= self.experts):
            raise ValueError("k_ept must lie in 1..experts")
        sizes = self.sizes
        if sizes is None:
            sizes = tuple(range(2, self.experts + 2))
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) != self.experts:
            raise ValueError("need one hidden-graph size per expert")
        object.__setattr__(self, "sizes", sizes)


@dataclass
class MoseModel:
    gating: GatingParams
    bank: ExpertBank
    head: Mlp
    kernel_cfg: KernelConfig
    cfg: ModelConfig
    combine_mlp: Mlp | None = None
    seed: int = 0

    @property
    def expert_count(self) -> int:
        return self.bank.expert_count

    @property
    def embed_dim(self) -> int:
        return self.cfg.embed_dim

    def parameters(self) -> dict:
        out = {"gating.W_g": self.gating.W_g, "gating.W_n": self.gating.W_n}
        for k, e in enumerate(self.bank.experts):
            out[f"expert{k}.W"] = e.W
            out[f"expert{k}.Z"] = e.Z
            out.update(e.transform.parameters())
        if self.combine_mlp is not None:
            out.update(self.combine_mlp.parameters())
        out.update(self.head.parameters())
        return out

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.parameters().items()}

    def snapshot(self) -> dict:
        return {k: v.copy() for k, v in self.parameters().items()}

    def load_snapshot(self, snap: dict):
        for k, v in self.parameters().items():
            v[...] = snap[k]

    def gate_act(self):
        return GATE_ACTIVATIONS[self.cfg.gate_activation]


def new_model(cfg: ModelConfig, kernel_cfg: KernelConfig, seed: int = 0) -> MoseModel:
    """Initialize a model: uniform(0,1) hidden adjacencies so rectification
    starts active, fan-in scaled feature/transform weights, small-normal
    gating."""
    rng = substream(seed, 900)
    f, d = cfg.feature_dim, cfg.embed_dim
    gating = GatingParams(W_g=rng.normal(0.0, 0.1, (f, cfg.experts)),
                          W_n=rng.normal(0.0, 0.1, (f, cfg.experts)))
    width = kernel_cfg.feature_width * cfg.hidden_per_expert
    experts = []
    for k, s in enumerate(cfg.sizes):
        w = rng.uniform(0.0, 1.0, (cfg.hidden_per_expert, s, s))
        z = rng.normal(0.0, 1.0 / np.sqrt(max(1, f)), (cfg.hidden_per_expert, s, f))
        experts.append(Expert(W=w, Z=z, transform=Mlp(f"expert{k}.mlp", (width, d, d), rng)))
    combine_mlp = None
    head_in = d
    if cfg.combine_mode == "concat":
        combine_mlp = Mlp("combine", (cfg.experts * d, d), rng)
    head = Mlp("head", (head_in, d, cfg.class_count), rng)
    return MoseModel(gating=gating, bank=ExpertBank(experts), head=head,
                     kernel_cfg=kernel_cfg, cfg=cfg, combine_mlp=combine_mlp, seed=seed)


# -- single-node reference pipeline --------------------------------------

def gate_aggregate(sub: NodeSubgraph, parent_features: np.ndarray | None = None,
                   act=relu) -> np.ndarray:
    """Feature summary of a subgraph: center plus attention-weighted nodes.

    Attention weights are the softmax of feature dot products with the
    center (the center itself participates in the sum).
    """
    x = sub.graph.features if parent_features is None else parent_features[sub.parent_ids]
    xv = x[sub.center]
    scores = x @ xv
    alpha = softmax(scores)
    return act(xv + alpha @ x)


def gate_scores(eta: np.ndarray, gating: GatingParams, train_mode: bool,
                rng=None) -> np.ndarray:
    """Pre-selection logits: clean scores plus softplus-scaled noise.

    Noise is a fresh standard-normal draw per coordinate when training;
    evaluation uses the clean scores exactly.
    """
    psi = eta @ gating.W_g
    if train_mode:
        eps = rng.standard_normal(gating.expert_count)
        psi = psi + eps * softplus(eta @ gating.W_n)
    return psi


def route(psi: np.ndarray, k_ept: int) -> Route:
    """Keep the top-k logits (ties to the lower index) and softmax them."""
    k = min(k_ept, len(psi))
    if k < 1:
        raise ValueError("k_ept must be >= 1")
    order = np.argsort(-psi, kind="stable")
    idx = np.sort(order[:k])
    return Route(indices=tuple(int(i) for i in idx), weights=softmax(psi[idx]))


def combine(embeddings: dict, r: Route, mode: str = "weighted-sum",
            combine_mlp: Mlp | None = None, expert_count: int | None = None) -> np.ndarray:
    """Merge selected expert embeddings under the routing weights.

    weighted-sum adds them; concat scales each block by its weight, places
    it at the expert's fixed offset (absent experts contribute zeros), and
    applies the combine transform.
    """
    missing = [m for m in r.indices if m not in embeddings]
    if missing:
        raise RuntimeError(f"missing embeddings for experts {missing}")
    if mode == "weighted-sum":
        return sum(w * embeddings[m] for m, w in zip(r.indices, r.weights))
    d = len(next(iter(embeddings.values())))
    wide = np.zeros(expert_count * d)
    for m, w in zip(r.indices, r.weights):
        wide[m * d:(m + 1) * d] = w * embeddings[m]
    out, _ = combine_mlp.forward(wide)
    return out


def readout(node_embeddings, mode: str = "mean") -> np.ndarray:
    """Permutation-invariant pooling over node embeddings."""
    stack = np.asarray(list(node_embeddings))
    if stack.size == 0:
        raise ValueError("readout needs at least one node embedding")
    if mode == "mean":
        return stack.mean(axis=0)
    if mode == "sum":
        return stack.sum(axis=0)
    if mode == "max":
        return stack.max(axis=0)
    raise ValueError(f"unknown readout mode {mode}")


def node_embedding(model: MoseModel, sub: NodeSubgraph, train_mode: bool = False,
                   rng=None, dropout: float = 0.0):
    """Reference per-node pipeline up to the combined embedding h(v)."""
    eta = gate_aggregate(sub, act=model.gate_act())
    psi = gate_scores(eta, model.gating, train_mode, rng)
    r = route(psi, model.cfg.k_ept)
    embeddings = {}
    for m in r.indices:
        expert = model.bank.experts[m]
        phi = kernel_features(sub, expert.hidden, model.kernel_cfg)
        h_m, _ = expert.transform.forward(phi, train=train_mode, dropout=dropout, rng=rng)
        embeddings[m] = h_m
    h = combine(embeddings, r, model.cfg.combine_mode, model.combine_mlp,
                model.expert_count)
    return h, r


def forward(model: MoseModel, sub: NodeSubgraph, train_mode: bool = False,
            rng=None, dropout: float = 0.0):
    """Full per-node pipeline; returns class logits and the route taken."""
    h, r = node_embedding(model, sub, train_mode, rng, dropout)
    logits, _ = model.head.forward(h, train=train_mode, dropout=dropout, rng=rng)
    return logits, r


# -- batched group engine -------------------------------------------------

@dataclass
class NodeGroup:
    """Padded subgraph tensors for a group of nodes processed together."""

    adj: np.ndarray     # (B, nmax, nmax) zero-padded dense adjacencies
    feats: np.ndarray   # (B, nmax, f) zero-padded features
    sizes: np.ndarray   # (B,) true subgraph sizes
    eta: np.ndarray     # (B, f) gate aggregates

    @property
    def count(self) -> int:
        return self.adj.shape[0]


def build_group(g: Graph, records: list[list[int]], node_ids, act=relu) -> NodeGroup:
    """Assemble padded tensors for the given nodes of one graph."""
    node_ids = list(node_ids)
    b = len(node_ids)
    nmax = max(len(records[v]) for v in node_ids)
    f = g.feature_dim
    adj = np.zeros((b, nmax, nmax))
    feats = np.zeros((b, nmax, f))
    dense = g.adjacency_dense() if g.node_count <= 6000 else None
    local = None if dense is not None else np.full(g.node_count, -1, dtype=np.int64)
    sizes = np.zeros(b, dtype=np.int64)
    for i, v in enumerate(node_ids):
        ids = np.asarray(records[v], dtype=np.int64)
        k = len(ids)
        sizes[i] = k
        feats[i, :k] = g.features[ids]
        if dense is not None:
            adj[i, :k, :k] = dense[np.ix_(ids, ids)]
        else:
            local[ids] = np.arange(k)
            for li, pid in enumerate(ids):
                for nb in g.neighbors_of(int(pid)):
                    lj = local[nb]
                    if lj >= 0:
                        adj[i, li, lj] = 1.0
            local[ids] = -1
    xv = feats[:, 0, :]
    scores = np.einsum("bnf,bf->bn", feats, xv)
    col = np.arange(nmax)
    scores = np.where(col[None, :] < sizes[:, None], scores, -np.inf)
    alpha = softmax(scores, axis=1)
    eta = act(xv + np.einsum("bn,bnf->bf", alpha, feats))
    return NodeGroup(adj=adj, feats=feats, sizes=sizes, eta=eta)


def _expert_kernel_forward(expert: Expert, kcfg: KernelConfig,
                           adj: np.ndarray, feats: np.ndarray):
    """Kernel feature rows for a block of subgraphs against one expert."""
    n_hidden, s = expert.hidden_count, expert.size
    b = adj.shape[0]
    p_max = kcfg.max_step
    r = expert.rectified()
    zf = expert.Z.reshape(n_hidden * s, -1)
    t = np.matmul(zf[None], feats.transpose(0, 2, 1))        # (B, N*s, n)
    v_list = [t]
    for _ in range(p_max):
        v_list.append(np.matmul(v_list[-1], adj))
    r_pows = [np.broadcast_to(np.eye(s), (n_hidden, s, s)).copy()]
    for _ in range(p_max):
        r_pows.append(np.matmul(r_pows[-1], r))
    t4 = t.reshape(b, n_hidden, s, -1)
    vals = np.empty((b, n_hidden, p_max))
    for q in range(1, p_max + 1):
        v4 = v_list[q].reshape(b, n_hidden, s, -1)
        m = np.matmul(r_pows[q][None], v4)
        vals[:, :, q - 1] = (t4 * m).sum(axis=(2, 3))
    lam = np.array(kcfg.lambdas[1:])
    if kcfg.step_mode == "concat-over-p":
        phi = (vals * lam).reshape(b, n_hidden * p_max)
    elif kcfg.step_mode == "sum-over-p":
        phi = (vals * lam).sum(axis=2)
    else:
        phi = kcfg.lambdas[p_max] * vals[:, :, p_max - 1]
    cache = (t4, v_list, r_pows, r)
    return phi, cache


def _expert_kernel_backward(expert: Expert, kcfg: KernelConfig, feats: np.ndarray,
                            dphi: np.ndarray, cache, grads: dict, key: str):
    n_hidden, s = expert.hidden_count, expert.size
    b = dphi.shape[0]
    p_max = kcfg.max_step
    t4, v_list, r_pows, _ = cache
    lam = np.array(kcfg.lambdas[1:])
    dvals = np.zeros((b, n_hidden, p_max))
    if kcfg.step_mode == "concat-over-p":
        dvals = dphi.reshape(b, n_hidden, p_max) * lam
    elif kcfg.step_mode == "sum-over-p":
        dvals = dphi[:, :, None] * lam
    else:
        dvals[:, :, p_max - 1] = kcfg.lambdas[p_max] * dphi
    dt4 = np.zeros_like(t4)
    d_r = np.zeros((n_hidden, s, s))
    for q in range(1, p_max + 1):
        v4 = v_list[q].reshape(b, n_hidden, s, -1)
        m = np.matmul(r_pows[q][None], v4)
        dt4 += 2.0 * dvals[:, :, q - 1, None, None] * m
        c = np.matmul(v4, t4.transpose(0, 1, 3, 2))            # (B, N, s, s)
        c_tilde = (dvals[:, :, q - 1, None, None] * c).sum(axis=0)
        for k in range(q):
            d_r += np.matmul(r_pows[k], np.matmul(c_tilde, r_pows[q - 1 - k]))
    grads[f"{key}.Z"] += np.einsum("bisn,bnf->isf", dt4, feats)
    w_sym = 0.5 * (expert.W + expert.W.transpose(0, 2, 1))
    mask = (w_sym > 0).astype(np.float64)
    idx = np.arange(s)
    mask[:, idx, idx] = 0.0
    g_sym = d_r * mask
    grads[f"{key}.W"] += 0.5 * (g_sym + g_sym.transpose(0, 2, 1))


def gate_backward(eta: np.ndarray, eps: np.ndarray | None, sig: np.ndarray | None,
                  idx: np.ndarray, zeta: np.ndarray, dzeta: np.ndarray,
                  gating: GatingParams, grads: dict):
    """Backprop a gradient on the routing weights into the gating matrices.

    Follows the convention that gradients flow only through the retained
    logits; the top-k selection itself is treated as constant.
    """
    inner = (dzeta * zeta).sum(axis=1, keepdims=True)
    dpsi_sel = zeta * (dzeta - inner)
    dpsi = np.zeros((eta.shape[0], gating.expert_count))
    np.put_along_axis(dpsi, idx, dpsi_sel, axis=1)
    grads["gating.W_g"] += eta.T @ dpsi
    if eps is not None:
        grads["gating.W_n"] += eta.T @ (dpsi * eps * sig)


@dataclass
class GroupRun:
    """Forward state of one node group, ready for its backward pass."""

    model: MoseModel
    group: NodeGroup
    h: np.ndarray            # (B, d) combined node embeddings
    idx: np.ndarray          # (B, k) selected expert ids, ascending
    zeta: np.ndarray         # (B, k) routing weights
    eps: np.ndarray | None
    sig: np.ndarray | None
    expert_rows: dict = field(default_factory=dict)
    expert_caches: dict = field(default_factory=dict)
    concat_cache: tuple | None = None

    def backward(self, dh: np.ndarray, grads: dict):
        model, group = self.model, self.group
        d = model.embed_dim
        dzeta = np.zeros_like(self.zeta)
        if model.cfg.combine_mode == "concat":
            wide, wide_cache, hm_store = self.concat_cache
            dwide = model.combine_mlp.backward(dh, wide_cache, grads)
        for m in sorted(self.expert_rows):
            rows, pos = self.expert_rows[m]
            phi, kcache, mlp_cache, hm = self.expert_caches[m]
            if model.cfg.combine_mode == "weighted-sum":
                dhm = self.zeta[rows, pos][:, None] * dh[rows]
                dzeta[rows, pos] += (hm * dh[rows]).sum(axis=1)
            else:
                block = dwide[rows, m * d:(m + 1) * d]
                dhm = self.zeta[rows, pos][:, None] * block
                dzeta[rows, pos] += (hm * block).sum(axis=1)
            expert = model.bank.experts[m]
            dphi = expert.transform.backward(dhm, mlp_cache, grads)
            _expert_kernel_backward(expert, model.kernel_cfg, group.feats[rows],
                                    dphi, kcache, grads, f"expert{m}")
        gate_backward(group.eta, self.eps, self.sig, self.idx, self.zeta,
                      dzeta, model.gating, grads)


def group_forward(model: MoseModel, group: NodeGroup, train_mode: bool = False,
                  rng=None, dropout: float = 0.0) -> GroupRun:
    """Gate, route, and embed every node of the group in expert-id order."""
    gating = model.gating
    psi = group.eta @ gating.W_g
    eps = sig = None
    if train_mode:
        eps = np.asarray(rng.standard_normal((group.count, gating.expert_count)))
        arg = group.eta @ gating.W_n
        psi = psi + eps * softplus(arg)
        sig = sigmoid(arg)
    k = min(model.cfg.k_ept, gating.expert_count)
    order = np.argsort(-psi, axis=1, kind="stable")
    idx = np.sort(order[:, :k], axis=1)
    zeta = softmax(np.take_along_axis(psi, idx, axis=1), axis=1)
    run = GroupRun(model=model, group=group, h=np.zeros((group.count, model.embed_dim)),
                   idx=idx, zeta=zeta, eps=eps, sig=sig)
    d = model.embed_dim
    wide = None
    if model.cfg.combine_mode == "concat":
        wide = np.zeros((group.count, model.expert_count * d))
    for m in range(model.expert_count):
        rows, pos = np.nonzero(idx == m)
        if len(rows) == 0:
            continue
        expert = model.bank.experts[m]
        phi, kcache = _expert_kernel_forward(expert, model.kernel_cfg,
                                             group.adj[rows], group.feats[rows])
        hm, mlp_cache = expert.transform.forward(phi, train=train_mode,
                                                 dropout=dropout, rng=rng)
        run.expert_rows[m] = (rows, pos)
        run.expert_caches[m] = (phi, kcache, mlp_cache, hm)
        if model.cfg.combine_mode == "weighted-sum":
            run.h[rows] += zeta[rows, pos][:, None] * hm
        else:
            wide[rows, m * d:(m + 1) * d] = zeta[rows, pos][:, None] * hm
    if model.cfg.combine_mode == "concat":
        out, wide_cache = model.combine_mlp.forward(wide)
        run.h = out
        run.concat_cache = (wide, wide_cache, None)
    return run
