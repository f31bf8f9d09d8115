"""Dense/sparse linear algebra and probability/loss primitives.

All matrices are float64 numpy arrays in row-major order. Entropy, KL and
cross-entropy use the natural logarithm throughout; KL and cross-entropy
floor probabilities at 1e-12 so one-hot teacher rows cannot produce
infinities. Those two conventions are part of the loss contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from krd import backend
from krd.errors import ParameterError

PROB_FLOOR = 1e-12


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ParameterError(f"expected a 2-d matrix, got shape {m.shape}")
    return np.ascontiguousarray(m)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ParameterError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


@dataclass(frozen=True)
class CsrMatrix:
    """Square sparse matrix in compressed row form."""

    indptr: np.ndarray  # int64, length nrows+1
    indices: np.ndarray  # int64, length nnz
    data: np.ndarray  # float64, length nnz
    shape: tuple

    @property
    def nnz(self) -> int:
        return len(self.data)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        for i in range(self.shape[0]):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            dense[i, self.indices[lo:hi]] = self.data[lo:hi]
        return dense

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return spmm(self, x)


def spmm(adj: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse @ dense, equal to ``adj.to_dense() @ x``."""
    x = as_matrix(x)
    if adj.shape[1] != x.shape[0]:
        raise ParameterError(f"spmm shape mismatch: {adj.shape} @ {x.shape}")
    return backend.csr_matmul(adj.indptr, adj.indices, adj.data, x)


def softmax_rows(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of ``logits / temperature`` with max subtraction."""
    if temperature <= 0.0:
        raise ParameterError("softmax temperature must be positive")
    z = as_matrix(logits) / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    if temperature <= 0.0:
        raise ParameterError("softmax temperature must be positive")
    z = as_matrix(logits) / temperature
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Natural-log entropy of each probability row, with 0 ln 0 = 0."""
    p = as_matrix(probs)
    if p.min() < 0.0:
        raise ParameterError("entropy input has a negative entry")
    plogp = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return -plogp.sum(axis=1)


def entropy_row(probs_row) -> float:
    return float(entropy_rows(np.atleast_2d(np.asarray(probs_row, dtype=np.float64)))[0])


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) with q floored at PROB_FLOOR before division."""
    p, q = as_matrix(p), as_matrix(q)
    if p.shape != q.shape:
        raise ParameterError(f"kl shape mismatch: {p.shape} vs {q.shape}")
    qf = np.maximum(q, PROB_FLOOR)
    terms = np.where(p > 0.0, p * (np.log(np.where(p > 0.0, p, 1.0)) - np.log(qf)), 0.0)
    return terms.sum(axis=1)


def kl_row(p, q) -> float:
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    return float(kl_rows(p, q)[0])


def cross_entropy(probs_row, label: int) -> float:
    """-ln p[label], floored at PROB_FLOOR."""
    p = np.asarray(probs_row, dtype=np.float64).ravel()
    if not 0 <= label < len(p):
        raise ParameterError(f"label {label} out of range for {len(p)} classes")
    return float(-np.log(max(p[label], PROB_FLOOR)))


def gaussian_perturb(x: np.ndarray, delta: float, rng) -> np.ndarray:
    """A fresh copy ``x + delta * Z`` with Z i.i.d. standard normal."""
    if delta <= 0.0:
        raise ParameterError("perturbation scale delta must be positive")
    x = as_matrix(x)
    return x + delta * rng.normal(x.shape)
