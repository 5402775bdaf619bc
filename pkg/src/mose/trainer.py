"""Training loop: balance-aware loss, Adam updates, evaluation, CV, grad checks.

Graph tasks take minibatch steps over graphs; node tasks take one
full-batch step per epoch (processed in memory-bounded chunks). The
expert-balance penalty is accumulated per batch so its gradient reaches
the gating network at every step. All randomness is keyed by
(seed, purpose, epoch, item), so results are independent of batch layout,
thread count, and resume points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .kernel import KernelConfig
from .moe import (ModelConfig, MoseModel, NodeGroup, Route, build_group,
                  gate_backward, group_forward, new_model)
from .nn import Adam, RecordingRng, ReplayMismatch, ReplayRng, log_softmax, softmax
from .util import substream
from .walks import SubgraphCache

CV_GUARD = 1e-10


class NonFiniteLossError(RuntimeError):
    """Raised when training hits a non-finite loss; carries a diagnostic dump."""

    def __init__(self, epoch: int, batch: int, param_norms: dict):
        self.epoch = epoch
        self.batch = batch
        self.param_norms = param_norms
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")

    def dump(self) -> dict:
        return {"epoch": self.epoch, "batch": self.batch,
                "param_norms": {k: float(v) for k, v in self.param_norms.items()}}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    beta: float = 0.1
    batch_size: int = 32
    k_ept: int = 2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout_rate: float = 0.2
    seed: int = 0
    patience: int = 25          # 0 disables early stopping
    val_fraction: float = 0.1   # carved from graph-task train splits

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("invalid training configuration")
        if self.beta < 0 or not np.isfinite(self.beta):
            raise ValueError("beta must be finite and non-negative")


@dataclass
class Metrics:
    accuracy: float = 0.0
    macro_f1: float = 0.0
    loss_task: float = 0.0
    loss_importance: float = 0.0
    curves: list = field(default_factory=list)
    expert_load: np.ndarray | None = None


# -- losses ---------------------------------------------------------------

def _cv_squared(totals: np.ndarray) -> float:
    mean = totals.mean()
    return float((totals.std() / (mean + CV_GUARD)) ** 2)


def _cv_squared_grad(totals: np.ndarray) -> np.ndarray:
    k = len(totals)
    mu = totals.mean()
    m = mu + CV_GUARD
    var = totals.var()
    return (2.0 / k) * ((totals - mu) / m**2 - var / m**3)


def importance_loss(routes: list[Route], expert_count: int) -> float:
    """Squared coefficient of variation of aggregate routing mass.

    Unselected experts contribute zero mass; the standard deviation is the
    population one.
    """
    if not routes:
        raise ValueError("importance needs a non-empty batch")
    totals = np.zeros(expert_count)
    for r in routes:
        for m, w in zip(r.indices, r.weights):
            totals[m] += w
    return _cv_squared(totals)


def total_loss(task_loss: float, imp_loss: float, beta: float) -> float:
    """Task loss plus beta times the expert-balance penalty."""
    return task_loss + beta * imp_loss


def accuracy_score(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(pred == truth))


def macro_f1_score(pred: np.ndarray, truth: np.ndarray, class_count: int) -> float:
    f1s = []
    for c in range(class_count):
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(f1s))


# -- shared forward helpers ------------------------------------------------

def _graph_readout(h: np.ndarray, mode: str):
    if mode == "mean":
        return h.mean(axis=0), None
    if mode == "sum":
        return h.sum(axis=0), None
    arg = h.argmax(axis=0)
    return h[arg, np.arange(h.shape[1])], arg


def _graph_readout_backward(dhg: np.ndarray, h_shape, mode: str, arg):
    b = h_shape[0]
    if mode == "mean":
        return np.broadcast_to(dhg / b, h_shape).copy()
    if mode == "sum":
        return np.broadcast_to(dhg, h_shape).copy()
    dh = np.zeros(h_shape)
    dh[arg, np.arange(h_shape[1])] = dhg
    return dh


class _RouteStash:
    """Per-batch routing state kept for the balance-penalty backward pass."""

    def __init__(self, expert_count: int):
        self.expert_count = expert_count
        self.items = []

    def add(self, run):
        self.items.append((run.group.eta, run.eps, run.sig, run.idx, run.zeta))

    def totals(self) -> np.ndarray:
        out = np.zeros(self.expert_count)
        for _, _, _, idx, zeta in self.items:
            np.add.at(out, idx.ravel(), zeta.ravel())
        return out

    def backward(self, d_totals: np.ndarray, gating, grads: dict):
        for eta, eps, sig, idx, zeta in self.items:
            gate_backward(eta, eps, sig, idx, zeta, d_totals[idx], gating, grads)


def routes_of(run) -> list[Route]:
    return [Route(indices=tuple(int(i) for i in run.idx[b]), weights=run.zeta[b])
            for b in range(run.idx.shape[0])]


# -- evaluation -------------------------------------------------------------

def evaluate(model: MoseModel, data: Dataset, cache: SubgraphCache, part) -> Metrics:
    """Eval-mode metrics on a split part (graph ids, or a node mask)."""
    if data.task == "graph":
        ids = np.asarray(list(part), dtype=np.int64)
        if len(ids) == 0:
            raise ValueError("empty split part")
        logits = np.zeros((len(ids), model.head.out_dim))
        truth = np.zeros(len(ids), dtype=np.int64)
        stash = _RouteStash(model.expert_count)
        loss = 0.0
        for i, gi in enumerate(ids):
            g = data.graphs[gi]
            group = build_group(g, cache.records[gi], range(g.node_count),
                                act=model.gate_act())
            run = group_forward(model, group)
            stash.add(run)
            hg, _ = _graph_readout(run.h, model.cfg.readout_mode)
            logits[i], _ = model.head.forward(hg)
            truth[i] = g.graph_label
        loss = float(-log_softmax(logits)[np.arange(len(ids)), truth].mean())
        totals = stash.totals()
    else:
        mask = np.asarray(part, dtype=bool)
        ids = np.nonzero(mask)[0]
        if len(ids) == 0:
            raise ValueError("empty split part")
        g = data.graphs[0]
        logits = np.zeros((len(ids), model.head.out_dim))
        stash = _RouteStash(model.expert_count)
        for lo in range(0, len(ids), 512):
            chunk = ids[lo:lo + 512]
            group = build_group(g, cache.records[0], chunk, act=model.gate_act())
            run = group_forward(model, group)
            stash.add(run)
            logits[lo:lo + len(chunk)], _ = model.head.forward(run.h)
        truth = g.node_labels[ids]
        loss = float(-log_softmax(logits)[np.arange(len(ids)), truth].mean())
        totals = stash.totals()
    pred = logits.argmax(axis=1)
    return Metrics(accuracy=accuracy_score(pred, truth),
                   macro_f1=macro_f1_score(pred, truth, data.class_count),
                   loss_task=loss,
                   loss_importance=_cv_squared(totals),
                   expert_load=totals)


# -- training ----------------------------------------------------------------

def _param_norms(model: MoseModel) -> dict:
    return {k: float(np.linalg.norm(v)) for k, v in model.parameters().items()}


def _carve_validation(train_ids, labels, fraction: float, seed: int):
    """Stratified validation carve-out; returns (train, val) id arrays."""
    rng = substream(seed, 300)
    train_ids = np.asarray(train_ids, dtype=np.int64)
    val = []
    for c in np.unique(labels[train_ids]):
        members = train_ids[labels[train_ids] == c]
        members = rng.permutation(members)
        take = int(np.floor(fraction * len(members)))
        val.extend(members[:take].tolist())
    val = sorted(val)
    keep = sorted(set(train_ids.tolist()) - set(val))
    return np.asarray(keep, dtype=np.int64), np.asarray(val, dtype=np.int64)


def _graph_batch_step(model, data, cache, batch_ids, cfg, epoch, grads):
    """Forward+backward the task loss for one batch of graphs; returns
    (mean CE, #correct, RouteStash) with kernel caches freed per graph."""
    stash = _RouteStash(model.expert_count)
    ce_sum = 0.0
    correct = 0
    nb = len(batch_ids)
    for gi in batch_ids:
        g = data.graphs[gi]
        rng = substream(cfg.seed, 200, epoch, int(gi))
        group = build_group(g, cache.records[gi], range(g.node_count),
                            act=model.gate_act())
        run = group_forward(model, group, train_mode=True, rng=rng,
                            dropout=cfg.dropout_rate)
        stash.add(run)
        hg, arg = _graph_readout(run.h, model.cfg.readout_mode)
        logits, head_cache = model.head.forward(hg, train=True,
                                                dropout=cfg.dropout_rate, rng=rng)
        y = g.graph_label
        logp = log_softmax(logits)
        ce_sum += -float(logp[y])
        correct += int(np.argmax(logits) == y)
        dlogits = softmax(logits)
        dlogits[y] -= 1.0
        dlogits /= nb
        dhg = model.head.backward(dlogits, head_cache, grads)
        dh = _graph_readout_backward(dhg, run.h.shape, model.cfg.readout_mode, arg)
        run.backward(dh, grads)
    return ce_sum / nb, correct, stash


def _node_epoch_step(model, data, cache, train_ids, cfg, epoch, grads):
    """Full-batch forward+backward over train nodes, chunked for memory."""
    g = data.graphs[0]
    stash = _RouteStash(model.expert_count)
    ce_sum = 0.0
    correct = 0
    n_train = len(train_ids)
    for ci, lo in enumerate(range(0, n_train, 512)):
        chunk = train_ids[lo:lo + 512]
        rng = substream(cfg.seed, 200, epoch, ci)
        group = build_group(g, cache.records[0], chunk, act=model.gate_act())
        run = group_forward(model, group, train_mode=True, rng=rng,
                            dropout=cfg.dropout_rate)
        stash.add(run)
        logits, head_cache = model.head.forward(run.h, train=True,
                                                dropout=cfg.dropout_rate, rng=rng)
        y = g.node_labels[chunk]
        logp = log_softmax(logits)
        ce_sum += -float(logp[np.arange(len(chunk)), y].sum())
        correct += int((logits.argmax(axis=1) == y).sum())
        dlogits = softmax(logits)
        dlogits[np.arange(len(chunk)), y] -= 1.0
        dlogits /= n_train
        dh = model.head.backward(dlogits, head_cache, grads)
        run.backward(dh, grads)
    return ce_sum / n_train, correct, stash


def _apply_importance(stash: _RouteStash, beta: float, model, grads):
    totals = stash.totals()
    imp = _cv_squared(totals)
    if beta != 0.0:
        stash.backward(beta * _cv_squared_grad(totals), model.gating, grads)
    return imp, totals


def train(model: MoseModel, data: Dataset, cache: SubgraphCache, split,
          cfg: TrainConfig, start_state: dict | None = None):
    """Run the optimization loop on one split; returns (model, Metrics).

    ``split`` is (train ids, test ids) for graph tasks or (train, val, test)
    masks for node tasks. Two runs with the same seed and config produce
    identical parameters and metrics. ``start_state`` resumes a checkpoint.
    """
    params = model.parameters()
    adam = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    rows: list[dict] = []
    best = {"metric": -np.inf, "epoch": -1, "snapshot": None}
    start_epoch = 0
    since_best = 0
    if start_state is not None:
        model.load_snapshot(start_state["params"])
        adam.t = start_state["adam_t"]
        adam.m = {k: v.copy() for k, v in start_state["adam_m"].items()}
        adam.v = {k: v.copy() for k, v in start_state["adam_v"].items()}
        start_epoch = start_state["epoch_next"]
        # the final test row belongs to a finished run, not the trajectory
        rows = [r for r in start_state["rows"] if r["split"] != "test"]
        best = start_state["best"]
        if best["epoch"] >= 0:
            since_best = (start_epoch - 1) - best["epoch"]

    if data.task == "graph":
        train_ids, test_ids = np.asarray(split[0]), np.asarray(split[1])
        labels = np.array([g.graph_label for g in data.graphs])
        val_ids = np.zeros(0, dtype=np.int64)
        if cfg.patience > 0 and cfg.val_fraction > 0:
            train_ids, val_ids = _carve_validation(train_ids, labels,
                                                   cfg.val_fraction, cfg.seed)
            if len(val_ids) == 0:
                val_ids = np.zeros(0, dtype=np.int64)
        test_part, val_part = test_ids, val_ids
    else:
        train_mask, val_mask, test_mask = split
        train_ids = np.nonzero(np.asarray(train_mask, dtype=bool))[0]
        val_part = np.asarray(val_mask, dtype=bool)
        test_part = np.asarray(test_mask, dtype=bool)

    def has_val():
        if data.task == "graph":
            return len(val_part) > 0
        return bool(np.any(val_part))

    for epoch in range(start_epoch, cfg.epochs):
        order = substream(cfg.seed, 100, epoch).permutation(train_ids)
        if data.task == "graph":
            batches = [order[i:i + cfg.batch_size]
                       for i in range(0, len(order), cfg.batch_size)]
        else:
            batches = [order]
        ep_task, ep_imp, ep_correct = 0.0, 0.0, 0
        load = np.zeros(model.expert_count)
        for bi, batch in enumerate(batches):
            grads = model.zero_grads()
            if data.task == "graph":
                ce, correct, stash = _graph_batch_step(model, data, cache, batch,
                                                       cfg, epoch, grads)
            else:
                ce, correct, stash = _node_epoch_step(model, data, cache, batch,
                                                      cfg, epoch, grads)
            imp, totals = _apply_importance(stash, cfg.beta, model, grads)
            loss = total_loss(ce, imp, cfg.beta)
            if not np.isfinite(loss):
                raise NonFiniteLossError(epoch, bi, _param_norms(model))
            adam.step(params, grads)
            ep_task += ce * len(batch)
            ep_imp += imp
            ep_correct += correct
            load += totals
        n_items = len(train_ids)
        rows.append({"epoch": epoch, "split": "train",
                     "loss_task": ep_task / max(1, n_items),
                     "loss_importance": ep_imp / max(1, len(batches)),
                     "accuracy": ep_correct / max(1, n_items),
                     "macro_f1": float("nan"),
                     "expert_load": load.tolist()})
        if has_val():
            vm = evaluate(model, data, cache, val_part)
            rows.append({"epoch": epoch, "split": "val",
                         "loss_task": vm.loss_task,
                         "loss_importance": vm.loss_importance,
                         "accuracy": vm.accuracy, "macro_f1": vm.macro_f1,
                         "expert_load": vm.expert_load.tolist()})
            if vm.accuracy > best["metric"]:
                best = {"metric": vm.accuracy, "epoch": epoch,
                        "snapshot": model.snapshot()}
                since_best = 0
            else:
                since_best += 1
                if cfg.patience > 0 and since_best >= cfg.patience:
                    break

    trajectory = model.snapshot()
    if best["snapshot"] is not None:
        model.load_snapshot(best["snapshot"])
    final = evaluate(model, data, cache, test_part)
    train_load = evaluate(model, data, cache,
                          train_ids if data.task == "graph" else split[0])
    final.curves = rows
    final.expert_load = train_load.expert_load
    rows.append({"epoch": cfg.epochs, "split": "test",
                 "loss_task": final.loss_task,
                 "loss_importance": final.loss_importance,
                 "accuracy": final.accuracy, "macro_f1": final.macro_f1,
                 "expert_load": final.expert_load.tolist()})
    state = {"params": trajectory, "adam_t": adam.t, "adam_m": adam.m,
             "adam_v": adam.v, "epoch_next": cfg.epochs, "rows": rows, "best": best}
    return model, final, state


def cross_validate(data: Dataset, cache: SubgraphCache, folds,
                   mcfg: ModelConfig, kcfg: KernelConfig, cfg: TrainConfig):
    """Train one model per fold; summary is mean and population std of
    fold test accuracies."""
    accs = []
    per_fold = []
    for fi, fold in enumerate(folds):
        seed_fold = int(np.random.SeedSequence(cfg.seed, spawn_key=(400, fi))
                        .generate_state(1)[0])
        model = new_model(mcfg, kcfg, seed=seed_fold)
        _, metrics, _ = train(model, data, cache, fold, cfg)
        accs.append(metrics.accuracy)
        per_fold.append(metrics)
    accs = np.array(accs)
    return {"mean_accuracy": float(accs.mean()),
            "std_accuracy": float(accs.std()),
            "fold_accuracies": accs.tolist(),
            "fold_metrics": per_fold}


# -- metrics CSV --------------------------------------------------------------

def metrics_csv(rows: list[dict], expert_count: int) -> str:
    header = ["epoch", "split", "loss_task", "loss_importance", "accuracy",
              "macro_f1"] + [f"expert_load_{k}" for k in range(expert_count)]
    lines = [",".join(header)]
    for r in rows:
        cells = [str(r["epoch"]), r["split"], repr(float(r["loss_task"])),
                 repr(float(r["loss_importance"])), repr(float(r["accuracy"])),
                 repr(float(r["macro_f1"]))]
        cells += [repr(float(x)) for x in r["expert_load"]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# -- checkpointing --------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, model: MoseModel, state: dict,
                    train_cfg: TrainConfig):
    arrays = {}
    for k, v in state["params"].items():
        arrays["param/" + k] = v
    for k, v in state["adam_m"].items():
        arrays["adam_m/" + k] = v
    for k, v in state["adam_v"].items():
        arrays["adam_v/" + k] = v
    if state["best"]["snapshot"] is not None:
        for k, v in state["best"]["snapshot"].items():
            arrays["best/" + k] = v
    meta = {
        "version": CHECKPOINT_VERSION,
        "seed": model.seed,
        "adam_t": state["adam_t"],
        "epoch_next": state["epoch_next"],
        "rows": state["rows"],
        "best_metric": state["best"]["metric"],
        "best_epoch": state["best"]["epoch"],
        "model_config": vars(model.cfg) | {"sizes": list(model.cfg.sizes)},
        "kernel_config": {"max_step": model.kernel_cfg.max_step,
                          "lambdas": list(model.kernel_cfg.lambdas),
                          "step_mode": model.kernel_cfg.step_mode},
        "train_config": vars(train_cfg),
    }
    np.savez(path, meta=json.dumps(meta, default=float), **arrays)


def load_checkpoint(path: str):
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    mcfg_d = dict(meta["model_config"])
    mcfg_d["sizes"] = tuple(mcfg_d["sizes"])
    mcfg = ModelConfig(**mcfg_d)
    kcfg = KernelConfig(max_step=meta["kernel_config"]["max_step"],
                        lambdas=tuple(meta["kernel_config"]["lambdas"]),
                        step_mode=meta["kernel_config"]["step_mode"])
    model = new_model(mcfg, kcfg, seed=meta["seed"])
    params = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
    model.load_snapshot(params)
    best_snap = {k[len("best/"):]: data[k] for k in data.files if k.startswith("best/")}
    state = {
        "params": params,
        "adam_t": meta["adam_t"],
        "adam_m": {k[len("adam_m/"):]: data[k] for k in data.files
                   if k.startswith("adam_m/")},
        "adam_v": {k[len("adam_v/"):]: data[k] for k in data.files
                   if k.startswith("adam_v/")},
        "epoch_next": meta["epoch_next"],
        "rows": meta["rows"],
        "best": {"metric": meta["best_metric"], "epoch": meta["best_epoch"],
                 "snapshot": best_snap or None},
    }
    tcfg = TrainConfig(**meta["train_config"])
    return model, state, tcfg


# -- gradient checking ----------------------------------------------------------

def frozen_loss(model: MoseModel, data: Dataset, cache: SubgraphCache,
                item_ids, cfg: TrainConfig, rng, grads: dict | None,
                train_mode: bool = True):
    """Loss (and optionally grads) for a fixed batch under a fixed noise tape.

    Returns (loss, picks) where picks records the top-k selections so
    callers can detect selection flips under perturbation.
    """
    sink = grads if grads is not None else model.zero_grads()
    stash = _RouteStash(model.expert_count)
    picks = []
    dropout = cfg.dropout_rate if train_mode else 0.0
    if data.task == "graph":
        nb = len(item_ids)
        ce_sum = 0.0
        for gi in item_ids:
            g = data.graphs[gi]
            group = build_group(g, cache.records[gi], range(g.node_count),
                                act=model.gate_act())
            run = group_forward(model, group, train_mode=train_mode, rng=rng,
                                dropout=dropout)
            stash.add(run)
            picks.append(run.idx.copy())
            hg, arg = _graph_readout(run.h, model.cfg.readout_mode)
            logits, head_cache = model.head.forward(hg, train=train_mode,
                                                    dropout=dropout, rng=rng)
            y = g.graph_label
            ce_sum += -float(log_softmax(logits)[y])
            dlogits = softmax(logits)
            dlogits[y] -= 1.0
            dlogits /= nb
            dhg = model.head.backward(dlogits, head_cache, sink)
            dh = _graph_readout_backward(dhg, run.h.shape, model.cfg.readout_mode, arg)
            run.backward(dh, sink)
        ce = ce_sum / nb
    else:
        g = data.graphs[0]
        chunk = np.asarray(item_ids, dtype=np.int64)
        group = build_group(g, cache.records[0], chunk, act=model.gate_act())
        run = group_forward(model, group, train_mode=train_mode, rng=rng,
                            dropout=dropout)
        stash.add(run)
        picks.append(run.idx.copy())
        logits, head_cache = model.head.forward(run.h, train=train_mode,
                                                dropout=dropout, rng=rng)
        y = g.node_labels[chunk]
        ce = -float(log_softmax(logits)[np.arange(len(chunk)), y].mean())
        dlogits = softmax(logits)
        dlogits[np.arange(len(chunk)), y] -= 1.0
        dlogits /= len(chunk)
        dh = model.head.backward(dlogits, head_cache, sink)
        run.backward(dh, sink)
    imp, _ = _apply_importance(stash, cfg.beta, model, sink)
    return total_loss(ce, imp, cfg.beta), picks


def grad_check(model: MoseModel, data: Dataset, cache: SubgraphCache,
               item_ids, cfg: TrainConfig, step: float = 1e-5,
               train_mode: bool = True) -> float:
    """Compare analytic gradients against central finite differences.

    Routing noise and dropout are recorded once and replayed for every
    perturbed evaluation; if a perturbation flips a top-k selection the
    step shrinks, and a persistent flip is an error. Returns the max
    relative error over every entry of every parameter tensor.
    """
    recorder = RecordingRng(substream(cfg.seed, 500))
    recorded = False

    def run(with_grads):
        nonlocal recorded
        if train_mode:
            local = ReplayRng(recorder.tape) if recorded else recorder
        else:
            local = None
        grads = model.zero_grads() if with_grads else None
        loss, picks = frozen_loss(model, data, cache, item_ids, cfg,
                                  local, grads, train_mode)
        if train_mode:
            recorded = True
        return loss, picks, grads

    base_loss, base_picks, grads = run(with_grads=True)
    if not np.isfinite(base_loss):
        raise NonFiniteLossError(0, 0, _param_norms(model))
    params = model.parameters()
    worst = 0.0
    for name in sorted(params):
        arr = params[name]
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = arr[ix]
            h = step
            for _attempt in range(3):
                try:
                    arr[ix] = orig + h
                    lp, picks_p, _ = run(with_grads=False)
                    arr[ix] = orig - h
                    lm, picks_m, _ = run(with_grads=False)
                    flipped = any(not np.array_equal(a, b)
                                  for a, b in zip(base_picks, picks_p)) or \
                              any(not np.array_equal(a, b)
                                  for a, b in zip(base_picks, picks_m))
                except ReplayMismatch:
                    flipped = True  # routing changed the draw sequence
                finally:
                    arr[ix] = orig
                if not flipped:
                    break
                h /= 10.0
            else:
                raise RuntimeError(f"top-k selection keeps flipping at {name}{ix}")
            numeric = (lp - lm) / (2 * h)
            analytic = grads[name][ix]
            scale = max(abs(numeric), abs(analytic), 1.0)
            worst = max(worst, abs(numeric - analytic) / scale)
    return worst
