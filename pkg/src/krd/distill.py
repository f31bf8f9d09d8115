"""Distillation losses and the end-to-end training loop.

Loss assembly (natural log, probability floor 1e-12, no tau^2 rescale):

    L_label = mean CE over labeled nodes
    L_KD    = mean over nodes of KL(softmax(z_i), softmax(h_i))
    L_KRD   = mean over sampled pairs of
              KL(softmax(z_student/tau), softmax(h_teacher/tau))
    L_total = lam * L_label + (1 - lam) * (L_KD + L_KRD)

KL arguments are (student, teacher) in that order, exactly as the method
defines them; the conventional reversed direction is available through
the pairing direction switch, not by flipping the KL itself.

The KL gradient w.r.t. student logits is p * (r - KL) with
r = ln p - ln max(q, floor), scaled by 1/tau under temperature. It is
not the softmax-cross-entropy shortcut; see tests for the
finite-difference check.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from krd.errors import ContractError, DivergenceError, ParameterError
from krd.graphs import GraphBundle, SplitSpec, induced_subbundle, normalize_adjacency
from krd.knowledge import ReliabilityProfile
from krd.linalg import PROB_FLOOR, kl_rows, softmax_rows
from krd.models import (
    Model,
    StudentModel,
    TrainConfig,
    accuracy,
    backward,
    forward,
    init_model,
    label_loss_and_grad,
    save_model,
)
from krd.optim import AdamConfig, Optimizer
from krd.rng import Rng
from krd.sampler import (
    ProbabilityModel,
    SampledSupervision,
    build_agreement_histogram,
    fit_alpha,
    momentum_update,
    sample_supervision,
)

log = logging.getLogger(__name__)


@dataclass
class DistillConfig:
    lam: float = 0.3  # balance weight on the supervised term
    tau: float = 1.0
    eta: float = 0.99
    delta: float = 1.0
    num_samples: int = 10  # Monte-Carlo draws for reliability
    strategy: str = "knowledge"
    prob_kind: str = "power_learnable"
    fixed_alpha: float = 1.0  # used only by prob_kind="power_fixed"
    krd_direction: str = "teacher_at_sampled"
    epochs: int = 500
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    hidden: int = 64
    layers: int = 2
    seed: int = 0
    patience: int = 50
    fit_bins: int = 20

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError("lam must lie in [0, 1]")
        if self.tau <= 0.0:
            raise ParameterError("tau must be positive")
        if self.krd_direction not in ("teacher_at_sampled", "teacher_at_center"):
            raise ParameterError(f"unknown krd_direction {self.krd_direction!r}")
        if self.epochs <= 0:
            raise ParameterError("epochs must be positive")


def _kl_terms(student_rows: np.ndarray, teacher_rows: np.ndarray, tau: float) -> tuple:
    """Per-row KL(softmax(z/tau), softmax(h/tau)) and gradient w.r.t. z."""
    p = softmax_rows(student_rows, temperature=tau)
    q = softmax_rows(teacher_rows, temperature=tau)
    kl = kl_rows(p, q)
    r = np.log(np.maximum(p, 1e-300)) - np.log(np.maximum(q, PROB_FLOOR))
    grad = p * (r - kl[:, None]) / tau
    return kl, grad


def loss_kd(student_logits: np.ndarray, teacher_logits: np.ndarray, node_ids: np.ndarray) -> tuple:
    """Mean KL(student, teacher) over node_ids. Returns (loss, grad on logits)."""
    grad = np.zeros_like(student_logits)
    if len(node_ids) == 0:
        return 0.0, grad
    kl, g = _kl_terms(student_logits[node_ids], teacher_logits[node_ids], 1.0)
    grad[node_ids] = g / len(node_ids)
    return float(kl.mean()), grad


def loss_krd(
    student_logits: np.ndarray,
    teacher_logits: np.ndarray,
    pairs: SampledSupervision,
    tau: float,
) -> tuple:
    """Mean tempered KL over sampled (teacher_node, student_node) pairs."""
    grad = np.zeros_like(student_logits)
    m = pairs.num_pairs
    if m == 0:
        return 0.0, grad
    teacher_nodes = pairs.pairs[:, 0]
    student_nodes = pairs.pairs[:, 1]
    kl, g = _kl_terms(student_logits[student_nodes], teacher_logits[teacher_nodes], tau)
    np.add.at(grad, student_nodes, g / m)  # student nodes repeat across pairs
    return float(kl.mean()), grad


def loss_total(lam: float, ce_term: float, kd_term: float, krd_term: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ParameterError("lam must lie in [0, 1]")
    return lam * ce_term + (1.0 - lam) * (kd_term + krd_term)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss_label: float
    loss_kd: float
    loss_krd: float
    alpha: float
    pairs: int
    val_acc: float


@dataclass
class DistillRun:
    student: StudentModel  # carries the best-validation weights
    history: list
    best_epoch: int
    best_val_acc: float
    alpha_final: float
    method: str

    def validate(self) -> "DistillRun":
        if self.history:
            best = max(r.val_acc for r in self.history)
            if abs(best - self.best_val_acc) > 1e-12:
                raise ContractError("best-val snapshot accuracy != max of history")
        return self


@dataclass(frozen=True)
class DistillView:
    """The graph the distillation loop actually sees.

    Transductive: the full bundle. Inductive: the subgraph induced by
    non-inductive nodes; id arrays are in view coordinates.
    """

    bundle: GraphBundle
    adj: object
    train_ids: np.ndarray
    val_ids: np.ndarray
    kd_ids: np.ndarray  # nodes the KD term averages over
    to_view: np.ndarray  # full-graph id -> view id, -1 where absent


def make_view(bundle: GraphBundle, adj, split: SplitSpec) -> DistillView:
    n = bundle.num_nodes
    if split.mode == "transductive" or split.inductive_ids.size == 0:
        ident = np.arange(n, dtype=np.int64)
        return DistillView(bundle, adj, split.train_ids, split.val_ids, ident, ident)
    keep = np.setdiff1d(np.arange(n), split.inductive_ids)
    sub, remap = induced_subbundle(bundle, keep)
    return DistillView(
        bundle=sub,
        adj=normalize_adjacency(sub),
        train_ids=remap[split.train_ids],
        val_ids=remap[split.val_ids],
        kd_ids=np.arange(sub.num_nodes, dtype=np.int64),
        to_view=remap,
    )


def run_distillation(
    bundle: GraphBundle,
    adj,
    split: SplitSpec,
    teacher: Model,
    profile: ReliabilityProfile,
    cfg: DistillConfig,
    enable_krd: bool = True,
) -> DistillRun:
    """Train the student MLP against labels, teacher outputs, and sampled
    neighbor supervision; return the best-validation student.

    With ``enable_krd`` off this is the plain-distillation baseline: no
    sampling draws, no alpha fitting, same everything else, so a KRD run
    whose sampler returns zero pairs is bit-identical to it.
    """
    view = make_view(bundle, adj, split)
    supervised_only = cfg.lam == 1.0
    use_krd = enable_krd and not supervised_only
    use_kd = not supervised_only
    if use_krd and len(profile.rho) != view.bundle.num_nodes:
        raise ContractError(
            f"profile covers {len(profile.rho)} nodes, distillation view has "
            f"{view.bundle.num_nodes}"
        )

    teacher_logits = None
    if use_kd:
        teacher_weights_before = [w.copy() for w in teacher.weights]
        teacher_logits = forward(teacher, view.adj, view.bundle.features).logits

    root = Rng(cfg.seed).spawn("distill")
    student = init_model(
        "mlp",
        view.bundle.num_features,
        view.bundle.num_classes,
        _student_train_cfg(cfg),
        root,
    )
    drop_rng = root.spawn("student", "dropout")
    sample_rng = root.spawn("sampling")
    opt = Optimizer(AdamConfig(lr=cfg.lr, weight_decay=cfg.weight_decay))
    prob_model = ProbabilityModel(
        kind=cfg.prob_kind,
        alpha=cfg.fixed_alpha if cfg.prob_kind == "power_fixed" else 1.0,
        eta=cfg.eta,
        fit_bins=cfg.fit_bins,
    )
    teacher_pred = teacher_logits.argmax(axis=1) if use_kd else None
    x, labels = view.bundle.features, view.bundle.labels

    best_val, best_weights, best_epoch, stale = -1.0, student.copy_weights(), 0, 0
    history = []
    for epoch in range(cfg.epochs):
        acts = forward(student, None, x, train_mode=True, rng=drop_rng)
        ce, g_ce = label_loss_and_grad(acts.logits, labels, view.train_ids)

        kd = krd = 0.0
        sampled_count = 0
        if use_kd:
            kd, g_kd = loss_kd(acts.logits, teacher_logits, view.kd_ids)
        if use_krd:
            sup = sample_supervision(
                view.bundle.edges,
                profile,
                prob_model,
                cfg.strategy,
                cfg.krd_direction,
                sample_rng,
                epoch,
            )
            sampled_count = sup.num_pairs
            krd, g_krd = loss_krd(acts.logits, teacher_logits, sup, cfg.tau)

        total = loss_total(cfg.lam, ce, kd, krd)
        if not np.isfinite(total):
            raise DivergenceError(f"distillation loss diverged at epoch {epoch}")
        if supervised_only:
            g_total = g_ce  # exact: no teacher influence at lam = 1
        else:
            g_total = cfg.lam * g_ce + (1.0 - cfg.lam) * (g_kd + (g_krd if use_krd else 0.0))

        grads = backward(student, None, acts, g_total)
        opt.step(
            {str(i): w for i, w in enumerate(student.weights)},
            {str(i): g for i, g in enumerate(grads)},
        )
        student.touch()

        eval_logits = forward(student, None, x).logits
        student_pred = eval_logits.argmax(axis=1)
        val_acc = accuracy(student_pred, labels, view.val_ids) if len(view.val_ids) else 0.0

        # refit alpha after the optimizer step; only the knowledge strategy
        # with a learnable kind consumes it
        if use_krd and prob_model.learnable and cfg.strategy == "knowledge":
            hist = build_agreement_histogram(
                teacher_pred, student_pred, profile.rho_normalized, cfg.fit_bins
            )
            if hist.empty:
                log.warning("epoch %d: empty agreement histogram, alpha kept", epoch)
            else:
                alpha_new = fit_alpha(hist, prob_model.kind)
                prob_model.alpha = momentum_update(prob_model.alpha, alpha_new, cfg.eta)

        history.append(
            EpochRecord(epoch, ce, kd, krd, prob_model.alpha, sampled_count, val_acc)
        )
        if val_acc > best_val:
            best_val, best_weights, best_epoch, stale = (
                val_acc,
                student.copy_weights(),
                epoch,
                0,
            )
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                break

    if use_kd:
        for before, after in zip(teacher_weights_before, teacher.weights):
            if not np.array_equal(before, after):
                raise ContractError("teacher weights changed during distillation")

    student.set_weights(best_weights)
    method = "krd" if use_krd else ("mlp" if supervised_only else "glnn")
    run = DistillRun(
        student=student,
        history=history,
        best_epoch=best_epoch,
        best_val_acc=best_val,
        alpha_final=prob_model.alpha,
        method=method,
    )
    return run.validate()


def glnn_baseline(
    bundle: GraphBundle, adj, split: SplitSpec, teacher: Model, cfg: DistillConfig
) -> DistillRun:
    """Plain distillation: the same loop with the sampled term disabled."""
    empty = ReliabilityProfile(
        rho=np.zeros(0),
        rho_max=0.0,
        rho_normalized=np.zeros(0),
        base_entropy=np.zeros(0),
        num_samples=0,
        delta=1.0,
        degenerate=True,
    )
    return run_distillation(bundle, adj, split, teacher, empty, cfg, enable_krd=False)


def _student_train_cfg(cfg: DistillConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        lr=cfg.lr,
        weight_decay=cfg.weight_decay,
        dropout=cfg.dropout,
        hidden=cfg.hidden,
        layers=cfg.layers,
        seed=cfg.seed,
        patience=cfg.patience,
    )


def write_run_dir(path, cfg: DistillConfig, run: DistillRun, metrics: dict) -> Path:
    """Persist one run: config.json, history.csv, student checkpoint, metrics.json."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    doc = asdict(cfg)
    doc["method"] = run.method
    (root / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    rows = ["epoch,loss_label,loss_kd,loss_krd,alpha,pairs,val_acc"]
    for r in run.history:
        rows.append(
            f"{r.epoch},{r.loss_label:.17g},{r.loss_kd:.17g},{r.loss_krd:.17g},"
            f"{r.alpha:.17g},{r.pairs},{r.val_acc:.17g}"
        )
    (root / "history.csv").write_text("\n".join(rows) + "\n")
    save_model(run.student, root / "student", seed=cfg.seed, epoch=run.best_epoch)
    (root / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    return root
