"""Evaluation metrics and diagnostic histograms.

Pure functions of model outputs; re-evaluation is bit-identical.
"Confidence" means the max softmax probability at temperature 1.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from krd.errors import FormatError, ParameterError
from krd.graphs import GraphBundle, SplitSpec
from krd.knowledge import dirichlet_energy
from krd.linalg import softmax_rows
from krd.models import Model, forward


@dataclass
class RunMetrics:
    split_accuracy: dict  # split name -> fraction
    mean_confidence_correct: float
    std_confidence_correct: float
    dirichlet_energy: dict = field(default_factory=dict)  # "teacher"/"student" -> float
    seed: int = 0
    config_hash: str = ""
    improvement_over_baseline: float | None = None

    def to_json(self) -> dict:
        doc = {
            "split_accuracy": {k: float(v) for k, v in sorted(self.split_accuracy.items())},
            "mean_confidence_correct": float(self.mean_confidence_correct),
            "std_confidence_correct": float(self.std_confidence_correct),
            "dirichlet_energy": {k: float(v) for k, v in sorted(self.dirichlet_energy.items())},
            "seed": int(self.seed),
            "config_hash": self.config_hash,
        }
        if self.improvement_over_baseline is not None:
            doc["improvement_over_baseline"] = float(self.improvement_over_baseline)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "RunMetrics":
        return cls(
            split_accuracy=dict(doc["split_accuracy"]),
            mean_confidence_correct=float(doc["mean_confidence_correct"]),
            std_confidence_correct=float(doc["std_confidence_correct"]),
            dirichlet_energy=dict(doc["dirichlet_energy"]),
            seed=int(doc["seed"]),
            config_hash=str(doc["config_hash"]),
            improvement_over_baseline=(
                float(doc["improvement_over_baseline"])
                if "improvement_over_baseline" in doc
                else None
            ),
        )


def config_hash(cfg_doc: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(cfg_doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def evaluate(model: Model, bundle: GraphBundle, adj, split: SplitSpec) -> RunMetrics:
    """Per-split argmax accuracy plus confidence stats on the test split.

    Students run featurewise (adj ignored for MLP kinds); teachers need
    the adjacency. Empty splits are simply absent from the result. In
    inductive mode "test" covers only the observed part of the test set
    and "inductive" the held-out nodes.
    """
    logits = forward(model, adj if model.kind == "gcn" else None, bundle.features).logits
    probs = softmax_rows(logits)
    pred = probs.argmax(axis=1)
    labels = bundle.labels

    sets = {"train": split.train_ids, "val": split.val_ids}
    if split.inductive_ids.size:
        sets["test"] = np.setdiff1d(split.test_ids, split.inductive_ids)
        sets["inductive"] = split.inductive_ids
    else:
        sets["test"] = split.test_ids
    acc = {}
    for name, ids in sets.items():
        ids = ids[labels[ids] != -1] if ids.size else ids
        if ids.size:
            acc[name] = float((pred[ids] == labels[ids]).mean())

    conf_ids = sets.get("inductive") if split.inductive_ids.size else sets.get("test")
    mean_conf = std_conf = 0.0
    if conf_ids is not None and conf_ids.size:
        correct = conf_ids[pred[conf_ids] == labels[conf_ids]]
        if correct.size:
            conf = probs[correct].max(axis=1)
            mean_conf, std_conf = float(conf.mean()), float(conf.std())
    return RunMetrics(acc, mean_conf, std_conf)


def attach_energies(
    metrics: RunMetrics, bundle: GraphBundle, teacher_probs, student_probs
) -> RunMetrics:
    if teacher_probs is not None:
        metrics.dirichlet_energy["teacher"] = dirichlet_energy(teacher_probs, bundle)
    if student_probs is not None:
        metrics.dirichlet_energy["student"] = dirichlet_energy(student_probs, bundle)
    return metrics


def confidence_histogram(probs: np.ndarray, correct_mask: np.ndarray, bins: int) -> list:
    """Histogram rows (bin_lo, bin_hi, count) of max-softmax confidence
    over correctly predicted nodes, uniform bins on [0, 1]."""
    if bins < 2:
        raise ParameterError("bins must be at least 2")
    conf = np.asarray(probs, dtype=np.float64).max(axis=1)[np.asarray(correct_mask, dtype=bool)]
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(conf, bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def false_negative_entropy(
    teacher_pred: np.ndarray,
    student_pred: np.ndarray,
    labels: np.ndarray,
    teacher_entropy: np.ndarray,
    bins: int = 20,
) -> list:
    """Histogram of teacher entropy over nodes the teacher gets right and
    the student gets wrong. Bin range [0, max entropy observed]."""
    teacher_pred = np.asarray(teacher_pred)
    student_pred = np.asarray(student_pred)
    labels = np.asarray(labels)
    ent = np.asarray(teacher_entropy, dtype=np.float64)
    if not (len(teacher_pred) == len(student_pred) == len(labels) == len(ent)):
        raise ParameterError("false_negative_entropy input length mismatch")
    mask = (labels != -1) & (teacher_pred == labels) & (student_pred != labels)
    hi = float(ent.max()) if ent.size else 1.0
    hi = hi if hi > 0.0 else 1.0
    edges = np.linspace(0.0, hi, bins + 1)
    counts, _ = np.histogram(ent[mask], bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def reliability_stratum_curve(
    per_epoch_student_preds: list,
    teacher_pred: np.ndarray,
    rho_norm: np.ndarray,
    top: float = 0.2,
    within: float = 0.5,
) -> list:
    """Per epoch: among student-teacher-agreeing nodes inside the most
    reliable ``within`` fraction, the share falling in the most reliable
    ``top`` fraction. Reliability ranks by ascending rho (small = reliable).
    A student matching at random scores about top/within."""
    if not per_epoch_student_preds:
        raise ParameterError("no per-epoch student predictions recorded")
    if not 0.0 < top <= within <= 1.0:
        raise ParameterError("need 0 < top <= within <= 1")
    rho_norm = np.asarray(rho_norm, dtype=np.float64)
    order = np.argsort(rho_norm, kind="stable")
    n = len(rho_norm)
    top_set = np.zeros(n, dtype=bool)
    top_set[order[: int(round(top * n))]] = True
    within_set = np.zeros(n, dtype=bool)
    within_set[order[: int(round(within * n))]] = True
    out = []
    for pred in per_epoch_student_preds:
        agree = np.asarray(pred) == teacher_pred
        pool = agree & within_set
        out.append(float((agree & top_set).sum() / pool.sum()) if pool.sum() else 0.0)
    return out


def save_histogram_csv(rows: list, path) -> None:
    lines = ["bin_lo,bin_hi,count"]
    for lo, hi, count in rows:
        lines.append(f"{lo:.17g},{hi:.17g},{count}")
    Path(path).write_text("\n".join(lines) + "\n")


def save_metrics(metrics: RunMetrics, path) -> None:
    Path(path).write_text(json.dumps(metrics.to_json(), indent=2, sort_keys=True) + "\n")


def load_metrics(path) -> RunMetrics:
    try:
        return RunMetrics.from_json(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad metrics.json: {exc}") from exc
