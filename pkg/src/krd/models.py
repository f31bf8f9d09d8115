"""GCN teacher and MLP student with hand-derived backward passes.

Both architectures share layer shapes d -> F -> ... -> C. Hidden layers
apply Dropout(ReLU(transform)); the final layer is linear so logits feed
softmax directly. The GCN transform is A_hat @ (H @ W) per layer; the MLP
drops the aggregation. No biases (a config flag can add them later if a
variant needs them; default architecture has none).

Backward exploits A_hat symmetry: the adjoint of Z = A_hat @ P is
A_hat @ dZ, so one spmm per layer serves both the weight and the input
gradient. Input gradients are skipped at layer 0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from krd.errors import ContractError, DivergenceError, FormatError, LoadError, ParameterError
from krd.linalg import CsrMatrix, cross_entropy, softmax_rows, spmm
from krd.optim import AdamConfig, Optimizer
from krd.rng import Rng

log = logging.getLogger(__name__)


@dataclass
class Model:
    kind: str  # "gcn" or "mlp"
    weights: list
    dropout: float
    version: int = 0
    _logit_cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def touch(self) -> None:
        """Mark weights as mutated; invalidates cached logits."""
        self.version += 1
        self._logit_cache.clear()

    def copy_weights(self) -> list:
        return [w.copy() for w in self.weights]

    def set_weights(self, weights: list) -> None:
        self.weights = [w.copy() for w in weights]
        self.touch()


class TeacherModel(Model):
    def __init__(self, weights, dropout):
        super().__init__("gcn", weights, dropout)


class StudentModel(Model):
    def __init__(self, weights, dropout):
        super().__init__("mlp", weights, dropout)


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    hidden: int = 64
    layers: int = 2
    seed: int = 0
    patience: int = 50  # 0 disables early stopping

    def __post_init__(self):
        if self.epochs <= 0:
            raise ParameterError("epochs must be positive")
        if self.layers < 1:
            raise ParameterError("layers must be at least 1")
        if self.hidden < 1:
            raise ParameterError("hidden width must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError("dropout must lie in [0, 1)")


def glorot_init(sizes: list, rng: Rng) -> list:
    """Uniform +/- sqrt(6 / (fan_in + fan_out)) per layer."""
    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = (rng.uniform((fan_in, fan_out)) * 2.0 - 1.0) * bound
        weights.append(w)
    return weights


def init_model(kind: str, num_features: int, num_classes: int, cfg: TrainConfig, rng: Rng) -> Model:
    sizes = [num_features] + [cfg.hidden] * (cfg.layers - 1) + [num_classes]
    weights = glorot_init(sizes, rng.spawn("init", kind))
    cls = TeacherModel if kind == "gcn" else StudentModel
    return cls(weights, cfg.dropout)


@dataclass
class Activations:
    """Everything backward() needs from one forward pass."""

    logits: np.ndarray
    inputs: list  # input matrix of each layer (post-dropout for l > 0)
    relu_masks: list  # per hidden layer, float 0/1
    drop_masks: list  # per hidden layer, scaled mask or None
    train_mode: bool
    version: int


def _forward(model: Model, adj, x: np.ndarray, train_mode: bool, rng) -> Activations:
    if model.kind == "gcn" and adj is None:
        raise ParameterError("gcn forward requires an adjacency")
    h = np.asarray(x, dtype=np.float64)
    if h.shape[1] != model.weights[0].shape[0]:
        raise ParameterError(
            f"feature width {h.shape[1]} != model input width {model.weights[0].shape[0]}"
        )
    inputs, relu_masks, drop_masks = [], [], []
    keep = 1.0 - model.dropout
    for l, w in enumerate(model.weights):
        inputs.append(h)
        z = h @ w
        if model.kind == "gcn":
            z = spmm(adj, z)
        if l == model.num_layers - 1:
            h = z  # final layer stays linear
            break
        mask = (z > 0.0).astype(np.float64)
        relu_masks.append(mask)
        h = z * mask
        if train_mode and model.dropout > 0.0:
            dmask = rng.bernoulli(np.full(h.shape, keep)).astype(np.float64) / keep
            drop_masks.append(dmask)
            h = h * dmask
        else:
            drop_masks.append(None)
    if not np.isfinite(h).all():
        raise DivergenceError("non-finite activation in forward pass")
    return Activations(h, inputs, relu_masks, drop_masks, train_mode, model.version)


def gcn_forward(model: Model, adj: CsrMatrix, x, train_mode: bool = False, rng=None) -> Activations:
    return _forward(model, adj, x, train_mode, rng)


def mlp_forward(model: Model, x, train_mode: bool = False, rng=None) -> Activations:
    return _forward(model, None, x, train_mode, rng)


def forward(model: Model, adj, x, train_mode: bool = False, rng=None) -> Activations:
    if model.kind == "gcn":
        return gcn_forward(model, adj, x, train_mode, rng)
    return mlp_forward(model, x, train_mode, rng)


def backward(model: Model, adj, acts: Activations, dlogits: np.ndarray) -> list:
    """Weight gradients for the loss whose logit gradient is ``dlogits``."""
    if acts.version != model.version:
        raise ContractError("stale activation cache: model weights changed after forward")
    if dlogits.shape != acts.logits.shape:
        raise ParameterError(
            f"loss gradient shape {dlogits.shape} != logits shape {acts.logits.shape}"
        )
    grads = [None] * model.num_layers
    g = dlogits
    for l in range(model.num_layers - 1, -1, -1):
        s = spmm(adj, g) if model.kind == "gcn" else g
        grads[l] = acts.inputs[l].T @ s
        if l == 0:
            break
        g = s @ model.weights[l].T
        if acts.drop_masks[l - 1] is not None:
            g = g * acts.drop_masks[l - 1]
        g = g * acts.relu_masks[l - 1]
    return grads


def predict(model: Model, adj, x) -> tuple:
    """Eval-mode (logits, probabilities, argmax labels); ties go low."""
    acts = forward(model, adj, x, train_mode=False)
    probs = softmax_rows(acts.logits)
    return acts.logits, probs, probs.argmax(axis=1)


def cached_base_logits(model: Model, adj, x) -> np.ndarray:
    """Eval-mode logits on the unperturbed inputs, memoized per weight version."""
    hit = model._logit_cache.get("base")
    if hit is not None and hit[0] == model.version:
        return hit[1]
    logits = forward(model, adj, x, train_mode=False).logits
    model._logit_cache["base"] = (model.version, logits)
    return logits


def accuracy(pred: np.ndarray, labels: np.ndarray, ids: np.ndarray) -> float:
    if len(ids) == 0:
        raise ParameterError("accuracy over an empty id set")
    return float((pred[ids] == labels[ids]).mean())


def label_loss_and_grad(logits: np.ndarray, labels: np.ndarray, ids: np.ndarray) -> tuple:
    """Mean cross-entropy over ``ids`` plus its gradient on the full logits."""
    if len(ids) == 0:
        return 0.0, np.zeros_like(logits)
    probs = softmax_rows(logits[ids])
    loss = float(np.mean([cross_entropy(probs[k], int(labels[i])) for k, i in enumerate(ids)]))
    grad_rows = probs.copy()
    grad_rows[np.arange(len(ids)), labels[ids]] -= 1.0
    grad = np.zeros_like(logits)
    grad[ids] = grad_rows / len(ids)
    return loss, grad


def train_teacher(bundle, adj: CsrMatrix, split, cfg: TrainConfig) -> tuple:
    """Pretrain the GCN on the labeled split. Returns (model, history).

    The returned model carries the weights of the epoch with the best
    validation accuracy. History rows: (epoch, train_loss, val_acc).
    """
    if len(split.train_ids) == 0:
        raise ParameterError("empty training split")
    root = Rng(cfg.seed).spawn("teacher")
    model = init_model("gcn", bundle.num_features, bundle.num_classes, cfg, root)
    drop_rng = root.spawn("dropout")
    opt = Optimizer(AdamConfig(lr=cfg.lr, weight_decay=cfg.weight_decay))
    x, labels = bundle.features, bundle.labels

    best_val, best_weights, best_epoch, stale = -1.0, model.copy_weights(), 0, 0
    history = []
    for epoch in range(cfg.epochs):
        acts = forward(model, adj, x, train_mode=True, rng=drop_rng)
        loss, dlogits = label_loss_and_grad(acts.logits, labels, split.train_ids)
        if not np.isfinite(loss):
            raise DivergenceError(f"teacher loss diverged at epoch {epoch}")
        grads = backward(model, adj, acts, dlogits)
        opt.step(
            {str(i): w for i, w in enumerate(model.weights)},
            {str(i): g for i, g in enumerate(grads)},
        )
        model.touch()
        _, _, pred = predict(model, adj, x)
        val_acc = accuracy(pred, labels, split.val_ids) if len(split.val_ids) else 0.0
        history.append((epoch, loss, val_acc))
        if val_acc > best_val:
            best_val, best_weights, best_epoch, stale = val_acc, model.copy_weights(), epoch, 0
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                break
    model.set_weights(best_weights)
    log.info("teacher: best val %.4f at epoch %d (%d epochs run)", best_val, best_epoch, len(history))
    return model, history


def save_model(model: Model, path, seed: int = 0, epoch: int = 0) -> None:
    """Checkpoint: meta.json + weights.bin (little-endian f64, layer order)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": model.kind,
        "layer_sizes": model.layer_sizes,
        "dropout": model.dropout,
        "seed": seed,
        "epoch": epoch,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    blob = b"".join(np.ascontiguousarray(w, dtype="<f8").tobytes() for w in model.weights)
    (root / "weights.bin").write_bytes(blob)


def load_model(path) -> Model:
    root = Path(path)
    for name in ("meta.json", "weights.bin"):
        if not (root / name).is_file():
            raise LoadError(f"checkpoint file missing: {root / name}")
    try:
        meta = json.loads((root / "meta.json").read_text())
        kind = meta["kind"]
        sizes = [int(s) for s in meta["layer_sizes"]]
        dropout = float(meta["dropout"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad checkpoint meta.json: {exc}") from exc
    if kind not in ("gcn", "mlp"):
        raise FormatError(f"unknown model kind {kind!r}")
    raw = (root / "weights.bin").read_bytes()
    expected = sum(a * b for a, b in zip(sizes[:-1], sizes[1:]))
    if len(raw) != 8 * expected:
        raise FormatError(
            f"weights.bin holds {len(raw)} bytes, expected {8 * expected} for sizes {sizes}"
        )
    flat = np.frombuffer(raw, dtype="<f8")
    weights, off = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[off : off + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        off += fan_in * fan_out
    cls = TeacherModel if kind == "gcn" else StudentModel
    return cls(weights, dropout)
