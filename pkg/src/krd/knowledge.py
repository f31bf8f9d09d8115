"""Knowledge reliability: entropy invariance under feature perturbation.

For each node the teacher's output entropy is measured on the clean
features and on K perturbed copies X + delta * Z. The mean squared
entropy shift, scaled by 1/delta^2, is the reliability metric rho.
Smaller rho means the node's knowledge survives noise, i.e. is more
reliable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from krd.errors import ParameterError
from krd.graphs import GraphBundle
from krd.linalg import entropy_rows, gaussian_perturb, softmax_rows
from krd.models import Model, forward

RHO_DEGENERATE_EPS = 0.0  # rho_max must be strictly positive to normalize


@dataclass(frozen=True)
class ReliabilityProfile:
    rho: np.ndarray  # nonnegative, length N
    rho_max: float
    rho_normalized: np.ndarray  # rho / rho_max, in [0,1]; zeros when degenerate
    base_entropy: np.ndarray  # teacher output entropy per node, clean features
    num_samples: int
    delta: float
    degenerate: bool  # teacher output did not react to perturbation at all

    def validate(self) -> "ReliabilityProfile":
        if (self.rho < 0.0).any():
            raise ParameterError("rho must be nonnegative")
        if not self.degenerate:
            r = self.rho_normalized
            if r.min() < 0.0 or r.max() > 1.0 + 1e-12:
                raise ParameterError("rho_normalized outside [0, 1]")
        return self


def quantify_reliability(
    teacher: Model, adj, x: np.ndarray, delta: float, num_samples: int, rng
) -> ReliabilityProfile:
    """Monte-Carlo estimate of rho_i = (1/delta^2) E[(H(Y'_i) - H(Y_i))^2].

    All forwards run in eval mode; dropout noise would contaminate the
    perturbation signal. Deterministic for a fixed rng stream.
    """
    if num_samples < 1:
        raise ParameterError("num_samples must be at least 1")
    if delta <= 0.0:
        raise ParameterError("delta must be positive")
    base_probs = softmax_rows(forward(teacher, adj, x).logits)
    base_entropy = entropy_rows(base_probs)
    acc = np.zeros(len(base_entropy))
    for _ in range(num_samples):
        xp = gaussian_perturb(x, delta, rng)
        probs = softmax_rows(forward(teacher, adj, xp).logits)
        diff = entropy_rows(probs) - base_entropy
        acc += diff * diff
    rho = acc / (num_samples * delta * delta)
    rho_max = float(rho.max()) if rho.size else 0.0
    degenerate = rho_max <= RHO_DEGENERATE_EPS
    rho_norm = np.zeros_like(rho) if degenerate else rho / rho_max
    return ReliabilityProfile(
        rho=rho,
        rho_max=rho_max,
        rho_normalized=rho_norm,
        base_entropy=base_entropy,
        num_samples=num_samples,
        delta=delta,
        degenerate=degenerate,
    ).validate()


def entropy_profile(probs: np.ndarray) -> np.ndarray:
    return entropy_rows(probs)


def dirichlet_energy(y: np.ndarray, bundle: GraphBundle) -> float:
    """Sum over directed neighbor pairs of ||Y_i/sqrt(d_i) - Y_j/sqrt(d_j)||^2.

    Degrees count the self-loop of A + I, consistent with the normalized
    adjacency. Diagnostic only, never differentiated.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != bundle.num_nodes:
        raise ParameterError(f"y has {y.shape[0]} rows, bundle has {bundle.num_nodes} nodes")
    if bundle.edges.size == 0:
        return 0.0
    scaled = y / np.sqrt(bundle.degrees().astype(np.float64))[:, None]
    diff = scaled[bundle.edges[:, 0]] - scaled[bundle.edges[:, 1]]
    # each undirected edge contributes twice (i->j and j->i)
    return float(2.0 * (diff * diff).sum())


def save_reliability_csv(profile: ReliabilityProfile, path) -> None:
    lines = ["node_id,rho,rho_normalized,entropy"]
    for i in range(len(profile.rho)):
        lines.append(
            f"{i},{profile.rho[i]:.17g},{profile.rho_normalized[i]:.17g},"
            f"{profile.base_entropy[i]:.17g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_reliability_csv(path) -> ReliabilityProfile:
    """Rebuild a profile from its CSV export (delta/K metadata not stored)."""
    rows = Path(path).read_text().strip().splitlines()
    if not rows or rows[0] != "node_id,rho,rho_normalized,entropy":
        raise ParameterError("bad reliability csv header")
    body = np.array([r.split(",") for r in rows[1:]], dtype=np.float64)
    rho = body[:, 1]
    rho_max = float(rho.max()) if rho.size else 0.0
    degenerate = rho_max <= RHO_DEGENERATE_EPS
    return ReliabilityProfile(
        rho=rho,
        rho_max=rho_max,
        rho_normalized=body[:, 2],
        base_entropy=body[:, 3],
        num_samples=0,
        delta=float("nan"),
        degenerate=degenerate,
    )
