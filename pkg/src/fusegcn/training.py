"""Training loop, optimizer, stratified splits, metrics, attention traces.

Training is full-batch and deterministic per (dataset, config, seed): the
split, parameter init, and every update follow fixed-order numpy arithmetic.
Early stopping keeps the parameters of the best validation epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses as L
from . import model as M
from .autodiff import Tape, backward, finite_diff_check
from .graphs import Graph, normalized_adjacency
from .model import ATTENTION_VARIANTS, RESIDUAL_FORMS, ModelParams

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    prop_weight: float = 0.8      # weight on the propagated signal in residual layers
    common_mix: float = 0.85      # weight on the anchor MLP inside the common-encoder input
    knn_k: int = 7
    hidden_dim: int = 64
    loss_weights: L.LossWeights = field(default_factory=L.LossWeights)
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 500
    patience: int = 100
    seed: int = 0
    train_per_class: int = 40
    val_per_class: int = 40
    attention_variant: str = "sigmoid"
    ce_reduction: str = "sum"
    residual_form: str = "gcn"
    combiner_depth: int = 1
    normalize_closeness: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.train_per_class < 1:
            raise ValueError("train_per_class must be >= 1")
        if not 0.0 <= self.prop_weight <= 1.0 or not 0.0 <= self.common_mix <= 1.0:
            raise ValueError("mixing weights must lie in [0, 1]")
        if self.attention_variant not in ATTENTION_VARIANTS:
            raise ValueError(f"attention_variant must be one of {ATTENTION_VARIANTS}")
        if self.ce_reduction not in ("sum", "mean"):
            raise ValueError("ce_reduction must be 'sum' or 'mean'")
        if self.residual_form not in RESIDUAL_FORMS:
            raise ValueError(f"residual_form must be one of {RESIDUAL_FORMS}")


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        sets = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("split sets must be pairwise disjoint")


def make_split(g: Graph, cfg: TrainConfig, seed: int) -> Split:
    """Stratified split: per class, sample train then validation nodes; rest test."""
    if g.labels is None:
        raise ValueError("cannot split an unlabeled graph")
    rng = np.random.default_rng(seed)
    train, val = [], []
    need = cfg.train_per_class + cfg.val_per_class
    for c in range(g.n_classes):
        members = np.flatnonzero(g.labels == c)
        if members.size < need:
            raise ValueError(
                f"class {c} has {members.size} nodes, needs {need} for the split")
        picked = rng.choice(members, size=need, replace=False)
        train.append(picked[:cfg.train_per_class])
        val.append(picked[cfg.train_per_class:])
    train = np.sort(np.concatenate(train))
    val = np.sort(np.concatenate(val))
    rest = np.setdiff1d(np.arange(g.n_nodes), np.concatenate([train, val]))
    return Split(train, val, rest)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def init_adam_state(params: dict[str, np.ndarray]):
    return {name: (np.zeros_like(v), np.zeros_like(v)) for name, v in params.items()}


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state,
              lr: float, weight_decay: float, t: int, bias_names=()):
    """Adaptive-moment update with bias correction and decoupled weight decay.

    Weight decay skips the names listed in `bias_names`. Updates params and
    state in place and returns them.
    """
    for name, p in params.items():
        g = grads[name]
        m, v = state[name]
        m[...] = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v[...] = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1 ** t)
        v_hat = v / (1.0 - ADAM_BETA2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if weight_decay and name not in bias_names:
            p -= lr * weight_decay * p
    return params, state


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def evaluate(y_hat: np.ndarray, labels: np.ndarray, node_set: np.ndarray):
    """(accuracy, macro-F1) over `node_set`.

    Macro-F1 averages per-class F1 over classes that have true members in
    the node set, plus classes predicted there without true members (those
    contribute F1 = 0); classes absent on both sides are skipped. Zero
    denominators give F1 = 0.
    """
    node_set = np.asarray(node_set)
    pred = np.argmax(y_hat[node_set], axis=1)
    true = labels[node_set]
    accuracy = float(np.mean(pred == true))
    classes = np.union1d(np.unique(true), np.unique(pred))
    f1s = []
    for c in classes:
        tp = np.count_nonzero((pred == c) & (true == c))
        fp = np.count_nonzero((pred == c) & (true != c))
        fn = np.count_nonzero((pred != c) & (true == c))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return accuracy, float(np.mean(f1s))


def attention_norm_trace(att_t: np.ndarray, att_f: np.ndarray, att_c: np.ndarray):
    """Mean of row-wise L2 norms for each attention matrix."""
    return tuple(float(np.mean(np.linalg.norm(a, axis=1))) for a in (att_t, att_f, att_c))


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    loss_total: float
    loss_cl: float
    loss_c: float
    loss_d: float
    train_acc: float
    val_acc: float
    test_acc: float
    attn_t: float
    attn_f: float
    attn_c: float


@dataclass
class RunTrace:
    records: list[EpochRecord]
    best_epoch: int
    final_accuracy: float
    final_macro_f1: float


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.eye(n_classes)[labels]


def train(g: Graph, g_f: Graph, cfg: TrainConfig):
    """Full-batch training of the three-channel model.

    `g` is the labeled topology graph, `g_f` the kNN feature graph over the
    same nodes. Returns (best ModelParams, RunTrace).
    """
    if g.labels is None:
        raise ValueError("training requires labels")
    if g_f.n_nodes != g.n_nodes:
        raise ValueError("feature graph must cover the same nodes")
    n_classes = g.n_classes
    y = one_hot(g.labels, n_classes)
    split = make_split(g, cfg, cfg.seed)
    p_t = normalized_adjacency(g)
    p_f = normalized_adjacency(g_f)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    params = ModelParams.init(g.features.shape[1], n_classes, cfg.hidden_dim, rng,
                              cfg.combiner_depth)
    state = init_adam_state(params.arrays)
    bias_names = {n for n in params.names() if params.is_bias(n)}

    records = []
    best_val = -1.0
    best_epoch = 0
    best_params = params.copy()
    for epoch in range(1, cfg.epochs + 1):
        tape = Tape()
        fs = M.forward_full(tape, params, p_t, p_f, g.features,
                            cfg.prop_weight, cfg.common_mix,
                            cfg.attention_variant, cfg.residual_form)
        l_cl = L.classification_loss(fs.y_hat, y, split.train, cfg.ce_reduction)
        l_c = L.closeness_loss(fs.z_ct, fs.z_cf, cfg.normalize_closeness)
        l_d = L.disparity_loss(fs.z_t, fs.z_ct, fs.z_f, fs.z_cf)
        l_total = L.total_loss(l_cl, l_c, l_d, cfg.loss_weights)

        train_acc, _ = evaluate(fs.y_hat.value, g.labels, split.train)
        val_acc, _ = evaluate(fs.y_hat.value, g.labels, split.val)
        test_acc, _ = evaluate(fs.y_hat.value, g.labels, split.test)
        attn = attention_norm_trace(fs.att_t.value, fs.att_f.value, fs.att_c.value)
        records.append(EpochRecord(epoch, l_total.item(), l_cl.item(), l_c.item(),
                                   l_d.item(), train_acc, val_acc, test_acc, *attn))
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_params = params.copy()
        if epoch - best_epoch >= cfg.patience:
            break

        backward(tape, l_total)
        grads = {name: fs.leaves[name].grad for name in params.names()}
        adam_step(params.arrays, grads, state, cfg.lr, cfg.weight_decay, epoch, bias_names)

    tape = Tape()
    fs = M.forward_full(tape, best_params, p_t, p_f, g.features,
                        cfg.prop_weight, cfg.common_mix,
                        cfg.attention_variant, cfg.residual_form)
    final_acc, final_f1 = evaluate(fs.y_hat.value, g.labels, split.test)
    return best_params, RunTrace(records, best_epoch, final_acc, final_f1)


def train_baseline(g: Graph, cfg: TrainConfig, graph_for_propagation: Graph | None = None):
    """Train a plain two-layer GCN baseline.

    Propagation runs over `graph_for_propagation` (defaults to `g` itself;
    pass the kNN feature graph for the feature-space baseline). Labels,
    features, and the split always come from `g`.
    """
    if g.labels is None:
        raise ValueError("training requires labels")
    prop_graph = g if graph_for_propagation is None else graph_for_propagation
    n_classes = g.n_classes
    y = one_hot(g.labels, n_classes)
    split = make_split(g, cfg, cfg.seed)
    p = normalized_adjacency(prop_graph)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    params = M.baseline_init(g.features.shape[1], n_classes, cfg.hidden_dim, rng)
    state = init_adam_state(params)

    records = []
    best_val = -1.0
    best_epoch = 0
    best_params = {k: v.copy() for k, v in params.items()}
    for epoch in range(1, cfg.epochs + 1):
        tape = Tape()
        y_hat, leaves = M.gcn_baseline_forward(tape, p, g.features, params)
        l_cl = L.classification_loss(y_hat, y, split.train, cfg.ce_reduction)
        loss = ad.scale(l_cl, cfg.loss_weights.classification)

        train_acc, _ = evaluate(y_hat.value, g.labels, split.train)
        val_acc, _ = evaluate(y_hat.value, g.labels, split.val)
        test_acc, _ = evaluate(y_hat.value, g.labels, split.test)
        records.append(EpochRecord(epoch, loss.item(), l_cl.item(), 0.0, 0.0,
                                   train_acc, val_acc, test_acc, 0.0, 0.0, 0.0))
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
        if epoch - best_epoch >= cfg.patience:
            break

        backward(tape, loss)
        grads = {name: leaves[name].grad for name in params}
        adam_step(params, grads, state, cfg.lr, cfg.weight_decay, epoch)

    tape = Tape()
    y_hat, _ = M.gcn_baseline_forward(tape, p, g.features, best_params)
    final_acc, final_f1 = evaluate(y_hat.value, g.labels, split.test)
    return best_params, RunTrace(records, best_epoch, final_acc, final_f1)


# ---------------------------------------------------------------------------
# whole-model gradient verification
# ---------------------------------------------------------------------------

def random_check_instance(n: int = 12, d: int = 5, c: int = 3, seed: int = 0,
                          edge_prob: float = 0.35):
    """Small labeled random graph for gradient checking (balanced labels)."""
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < edge_prob]
    if not edges:
        edges = [(0, 1)]
    labels = np.arange(n) % c
    g = Graph.from_edges(n, edges, rng.standard_normal((n, d)), labels)
    return g


def model_gradient_check(n: int = 12, d: int = 5, c: int = 3, hidden: int = 8,
                         seed: int = 0, eps: float = 1e-5, tolerance: float = 1e-4,
                         weights: L.LossWeights | None = None,
                         cfg: TrainConfig | None = None):
    """Finite-difference check of the total-loss gradient w.r.t. every parameter."""
    if cfg is None:
        cfg = TrainConfig(hidden_dim=hidden, knn_k=min(3, n - 1),
                          train_per_class=2, val_per_class=1, seed=seed)
    if weights is None:
        weights = L.LossWeights(1.0, 1.0, 1.0)
    g = random_check_instance(n, d, c, seed)
    from .graphs import knn_feature_graph
    g_f = knn_feature_graph(g.features, cfg.knn_k)
    p_t = normalized_adjacency(g)
    p_f = normalized_adjacency(g_f)
    y = one_hot(g.labels, c)
    mask = make_split(g, cfg, seed).train
    rng = np.random.default_rng(seed + 1)
    params = ModelParams.init(d, c, hidden, rng, cfg.combiner_depth)
    names = params.names()

    def f(arrays):
        p = ModelParams(dict(zip(names, arrays)))
        tape = Tape()
        fs = M.forward_full(tape, p, p_t, p_f, g.features, cfg.prop_weight,
                            cfg.common_mix, cfg.attention_variant, cfg.residual_form)
        l_cl = L.classification_loss(fs.y_hat, y, mask, cfg.ce_reduction)
        l_c = L.closeness_loss(fs.z_ct, fs.z_cf, cfg.normalize_closeness)
        l_d = L.disparity_loss(fs.z_t, fs.z_ct, fs.z_f, fs.z_cf)
        l_total = L.total_loss(l_cl, l_c, l_d, weights)
        backward(tape, l_total)
        return l_total.item(), [fs.leaves[nm].grad for nm in names]

    return finite_diff_check(f, [params.arrays[nm] for nm in names], eps, tolerance,
                             param_names=names)
