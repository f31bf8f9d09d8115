"""Graph bundles: load, validate, normalize, split, synthesize.

A bundle directory holds meta.json, edges.csv, features.bin, labels.csv
and optionally splits.json (see ``save_bundle`` for the exact formats).
Bundles are immutable after construction; edges are canonicalized to
(u, v) with u < v, deduplicated, sorted, self-loops dropped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from krd.errors import FormatError, LoadError, ParameterError
from krd.linalg import CsrMatrix
from krd.rng import Rng

log = logging.getLogger(__name__)

META_NAME = "meta.json"
EDGES_NAME = "edges.csv"
FEATURES_NAME = "features.bin"
LABELS_NAME = "labels.csv"
SPLITS_NAME = "splits.json"


@dataclass(frozen=True)
class GraphBundle:
    """One immutable graph dataset."""

    name: str
    num_nodes: int
    num_features: int
    num_classes: int
    features: np.ndarray  # float64 N x d (widened from f32 on disk)
    labels: np.ndarray  # int64 length N, -1 = unknown
    edges: np.ndarray  # int64 E x 2, canonical u < v, sorted, deduplicated

    def validate(self) -> "GraphBundle":
        n, d, c = self.num_nodes, self.num_features, self.num_classes
        if self.features.shape != (n, d):
            raise FormatError(f"feature matrix shape {self.features.shape} != ({n}, {d})")
        bad = np.flatnonzero(~np.isfinite(self.features).all(axis=1))
        if bad.size:
            raise FormatError(f"non-finite feature value at row {int(bad[0])}")
        if self.labels.shape != (n,):
            raise FormatError(f"labels length {self.labels.shape} != {n}")
        known = self.labels[self.labels != -1]
        if known.size and (known.min() < 0 or known.max() >= c):
            raise FormatError(f"label outside [0, {c})")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise FormatError(f"edge endpoint outside [0, {n})")
            if (self.edges[:, 0] >= self.edges[:, 1]).any():
                raise FormatError("edge list not canonical (u < v required)")
            if len(np.unique(self.edges, axis=0)) != len(self.edges):
                raise FormatError("duplicate undirected edge")
        return self

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        """Degree of each node counting the self-loop of A+I."""
        deg = np.ones(self.num_nodes, dtype=np.int64)
        if self.edges.size:
            deg += np.bincount(self.edges.ravel(), minlength=self.num_nodes)
        return deg


def canonical_edges(pairs: np.ndarray, num_nodes: int) -> tuple:
    """Symmetrize, dedup, drop self-loops. Returns (edges, dropped_self_loops)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size == 0:
        return np.zeros((0, 2), dtype=np.int64), 0
    if pairs.min() < 0 or pairs.max() >= num_nodes:
        raise FormatError(f"edge endpoint outside [0, {num_nodes})")
    self_loops = int((pairs[:, 0] == pairs[:, 1]).sum())
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return edges, self_loops


def load_bundle(path) -> GraphBundle:
    root = Path(path)
    for name in (META_NAME, EDGES_NAME, FEATURES_NAME, LABELS_NAME):
        if not (root / name).is_file():
            raise LoadError(f"bundle file missing: {root / name}")
    try:
        meta = json.loads((root / META_NAME).read_text())
        name = str(meta["name"])
        n, d, c = int(meta["num_nodes"]), int(meta["num_features"]), int(meta["num_classes"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad {META_NAME}: {exc}") from exc
    if n <= 0 or d <= 0 or c <= 0:
        raise FormatError(f"bad {META_NAME}: counts must be positive")

    raw = (root / FEATURES_NAME).read_bytes()
    if len(raw) != 4 * n * d:
        raise FormatError(
            f"{FEATURES_NAME} holds {len(raw)} bytes, expected {4 * n * d} for N={n}, d={d}"
        )
    features = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, d)

    try:
        labels = np.loadtxt(root / LABELS_NAME, dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise FormatError(f"bad {LABELS_NAME}: {exc}") from exc
    if labels.shape != (n,):
        raise FormatError(f"{LABELS_NAME} holds {labels.shape[0]} lines, expected {n}")

    edge_text = (root / EDGES_NAME).read_text().strip()
    if edge_text:
        try:
            pairs = np.array(
                [line.split(",") for line in edge_text.splitlines()], dtype=np.int64
            )
        except ValueError as exc:
            raise FormatError(f"bad {EDGES_NAME}: {exc}") from exc
        if pairs.shape[1] != 2:
            raise FormatError(f"bad {EDGES_NAME}: expected two columns")
    else:
        pairs = np.zeros((0, 2), dtype=np.int64)
    edges, dropped = canonical_edges(pairs, n)
    if dropped:
        log.warning("%s: dropped %d self-loop(s) at load", name, dropped)

    bundle = GraphBundle(name, n, d, c, features, labels, edges)
    return bundle.validate()


def save_bundle(bundle: GraphBundle, path) -> None:
    """Write the bundle directory; output is byte-deterministic."""
    bundle.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": bundle.name,
        "num_nodes": bundle.num_nodes,
        "num_features": bundle.num_features,
        "num_classes": bundle.num_classes,
    }
    (root / META_NAME).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    lines = [f"{u},{v}" for u, v in bundle.edges]
    (root / EDGES_NAME).write_text("\n".join(lines) + ("\n" if lines else ""))
    (root / FEATURES_NAME).write_bytes(
        np.ascontiguousarray(bundle.features, dtype="<f4").tobytes()
    )
    (root / LABELS_NAME).write_text("".join(f"{y}\n" for y in bundle.labels))


def normalize_adjacency(bundle: GraphBundle) -> CsrMatrix:
    """D-hat^(-1/2) (A + I) D-hat^(-1/2) in compressed row form."""
    n = bundle.num_nodes
    deg = bundle.degrees().astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg)
    # directed expansion of the undirected edge list plus the diagonal
    if bundle.edges.size:
        src = np.concatenate([bundle.edges[:, 0], bundle.edges[:, 1], np.arange(n)])
        dst = np.concatenate([bundle.edges[:, 1], bundle.edges[:, 0], np.arange(n)])
    else:
        src = np.arange(n)
        dst = np.arange(n)
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    vals = inv_sqrt[src] * inv_sqrt[dst]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return CsrMatrix(indptr=indptr, indices=dst.astype(np.int64), data=vals, shape=(n, n))


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint node-id sets for one evaluation protocol."""

    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    observed_unlabeled_ids: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.int64)
    )
    inductive_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    mode: str = "transductive"

    def validate(self, num_nodes: int) -> "SplitSpec":
        if self.mode not in ("transductive", "inductive"):
            raise ParameterError(f"unknown split mode {self.mode!r}")
        named = [self.train_ids, self.val_ids, self.test_ids]
        for ids in named + [self.observed_unlabeled_ids, self.inductive_ids]:
            if ids.size and (ids.min() < 0 or ids.max() >= num_nodes):
                raise FormatError(f"split id outside [0, {num_nodes})")
        joined = np.concatenate(named)
        if len(np.unique(joined)) != len(joined):
            raise FormatError("train/val/test overlap")
        if self.inductive_ids.size and self.mode == "transductive":
            raise FormatError("inductive ids present in transductive mode")
        if (
            self.observed_unlabeled_ids.size
            and np.intersect1d(self.observed_unlabeled_ids, self.inductive_ids).size
        ):
            raise FormatError("observed/inductive pools overlap")
        return self

    def to_json(self) -> dict:
        return {
            "train": self.train_ids.tolist(),
            "val": self.val_ids.tolist(),
            "test": self.test_ids.tolist(),
            "observed_unlabeled": self.observed_unlabeled_ids.tolist(),
            "inductive": self.inductive_ids.tolist(),
        }


def _ids(seq) -> np.ndarray:
    return np.sort(np.asarray(list(seq), dtype=np.int64))


def load_splits(path, bundle: GraphBundle):
    """SplitSpec from a bundle directory's splits.json, or None if absent."""
    f = Path(path) / SPLITS_NAME
    if not f.is_file():
        return None
    try:
        doc = json.loads(f.read_text())
        spec = SplitSpec(
            train_ids=_ids(doc["train"]),
            val_ids=_ids(doc["val"]),
            test_ids=_ids(doc["test"]),
            observed_unlabeled_ids=_ids(doc.get("observed_unlabeled", [])),
            inductive_ids=_ids(doc.get("inductive", [])),
            mode="inductive" if doc.get("inductive") else "transductive",
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad {SPLITS_NAME}: {exc}") from exc
    return spec.validate(bundle.num_nodes)


def save_splits(spec: SplitSpec, path) -> None:
    doc = spec.to_json()
    (Path(path) / SPLITS_NAME).write_text(json.dumps(doc, sort_keys=True) + "\n")


def make_split(
    bundle: GraphBundle,
    mode: str = "transductive",
    seed: int = 0,
    train_per_class: int = 20,
    val_size: int = 500,
    test_size: int = 1000,
    train_ratio: float = 0.0,
    inductive_fraction: float = 0.2,
) -> SplitSpec:
    """Seeded Planetoid-style split (or ratio split when train_ratio > 0).

    Planetoid style picks ``train_per_class`` labeled nodes per class, then
    ``val_size`` and ``test_size`` from the remainder. Ratio style picks
    ``train_ratio`` of all labeled nodes for train and splits the rest
    evenly into val/test. In inductive mode a further
    ``inductive_fraction`` of the non-train, non-val pool (test included)
    is held out of the training graph entirely.
    """
    if mode not in ("transductive", "inductive"):
        raise ParameterError(f"unknown split mode {mode!r}")
    rng = Rng(seed).spawn("split", bundle.name, mode)
    n = bundle.num_nodes
    labeled = np.flatnonzero(bundle.labels != -1)
    order = labeled[rng.permutation(labeled.size)]

    if train_ratio > 0.0:
        k = int(round(train_ratio * order.size))
        if k == 0 or k >= order.size:
            raise ParameterError(f"train_ratio {train_ratio} leaves an empty split")
        train = order[:k]
        rest = order[k:]
        val = rest[: rest.size // 2]
        test = rest[rest.size // 2 :]
    else:
        picks = []
        for c in range(bundle.num_classes):
            cls = order[bundle.labels[order] == c][:train_per_class]
            if cls.size < train_per_class:
                raise ParameterError(
                    f"class {c} has only {cls.size} labeled nodes, need {train_per_class}"
                )
            picks.append(cls)
        train = np.concatenate(picks)
        rest = order[~np.isin(order, train)]
        if rest.size < val_size + test_size:
            raise ParameterError(
                f"val+test sizes {val_size}+{test_size} exceed remaining {rest.size} nodes"
            )
        val = rest[:val_size]
        test = rest[val_size : val_size + test_size]

    train, val, test = np.sort(train), np.sort(val), np.sort(test)
    unlabeled_pool = np.setdiff1d(np.arange(n), np.concatenate([train, val]))
    if mode == "inductive":
        if not 0.0 <= inductive_fraction <= 1.0:
            raise ParameterError("inductive_fraction must lie in [0, 1]")
        pool = unlabeled_pool
        k = int(round(inductive_fraction * pool.size))
        shuffled = pool[rng.permutation(pool.size)]
        inductive = np.sort(shuffled[:k])
        observed = np.sort(shuffled[k:])
    else:
        inductive = np.zeros(0, dtype=np.int64)
        observed = np.sort(np.setdiff1d(unlabeled_pool, test))
    spec = SplitSpec(train, val, test, observed, inductive, mode)
    return spec.validate(n)


def induced_subbundle(bundle: GraphBundle, keep_ids: np.ndarray) -> tuple:
    """Subgraph on ``keep_ids`` (sorted). Returns (bundle, old->new id map)."""
    keep = np.sort(np.asarray(keep_ids, dtype=np.int64))
    remap = -np.ones(bundle.num_nodes, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    if bundle.edges.size:
        mask = (remap[bundle.edges[:, 0]] >= 0) & (remap[bundle.edges[:, 1]] >= 0)
        edges = remap[bundle.edges[mask]]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    sub = GraphBundle(
        name=bundle.name + ":induced",
        num_nodes=int(keep.size),
        num_features=bundle.num_features,
        num_classes=bundle.num_classes,
        features=bundle.features[keep],
        labels=bundle.labels[keep],
        edges=edges,
    )
    return sub.validate(), remap


def synth_graph(
    num_nodes: int,
    num_classes: int,
    intra_p: float,
    inter_p: float,
    feature_noise: float,
    seed: int,
) -> GraphBundle:
    """Stochastic block model with class-prototype features plus noise.

    Labels are balanced to within one node per class. Features live in
    ``num_classes`` dimensions: one-hot prototype of the class plus
    ``feature_noise`` times standard normal noise.
    """
    if num_classes > num_nodes:
        raise ParameterError("num_classes exceeds num_nodes")
    if num_classes < 1:
        raise ParameterError("num_classes must be at least 1")
    for p in (intra_p, inter_p):
        if not 0.0 <= p <= 1.0:
            raise ParameterError("edge probabilities must lie in [0, 1]")
    if feature_noise < 0.0:
        raise ParameterError("feature_noise must be nonnegative")

    rng = Rng(seed).spawn("synth")
    labels = np.arange(num_nodes, dtype=np.int64) % num_classes
    labels = labels[rng.spawn("labels").permutation(num_nodes)]

    iu, ju = np.triu_indices(num_nodes, k=1)
    probs = np.where(labels[iu] == labels[ju], intra_p, inter_p)
    mask = rng.spawn("edges").bernoulli(probs)
    edges = np.stack([iu[mask], ju[mask]], axis=1).astype(np.int64)

    proto = np.eye(num_classes)
    features = proto[labels] + feature_noise * rng.spawn("features").normal(
        (num_nodes, num_classes)
    )

    bundle = GraphBundle(
        name=f"synth-n{num_nodes}-c{num_classes}-s{seed}",
        num_nodes=num_nodes,
        num_features=num_classes,
        num_classes=num_classes,
        features=features,
        labels=labels,
        edges=edges,
    )
    return bundle.validate()
