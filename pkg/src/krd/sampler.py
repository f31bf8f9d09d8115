"""Sampling probability models, alpha fitting, and per-epoch pair draws.

The probability that a node serves as a teacher ("knowledge point") is a
monotone nonincreasing function of its normalized reliability rho_n:

    power:       1 - rho_n^alpha
    exponential: clamp(alpha * exp(-alpha * rho_n), 0, 1)
    gaussian:    exp(-rho_n^2 / (2 alpha^2))

alpha is refit every epoch against the teacher/student agreement
histogram (least squares on a log grid plus golden-section refinement)
and smoothed by momentum. Fixed-power variants skip fitting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from krd.errors import FitError, ParameterError
from krd.knowledge import ReliabilityProfile

log = logging.getLogger(__name__)

KINDS = ("power_learnable", "power_fixed", "exponential_learnable", "gaussian_learnable")
STRATEGIES = ("knowledge", "entropy", "random", "all")

ALPHA_LO = 0.05
ALPHA_HI = 20.0
GRID_POINTS = 200
ALPHA_TOL = 1e-3


@dataclass
class ProbabilityModel:
    kind: str = "power_learnable"
    alpha: float = 1.0  # alpha^(0) = 1
    eta: float = 0.99
    fit_bins: int = 20

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown probability model kind {self.kind!r}")
        if self.alpha <= 0.0:
            raise ParameterError("alpha must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError("eta must lie in [0, 1]")
        if self.fit_bins < 1:
            raise ParameterError("fit_bins must be at least 1")

    @property
    def learnable(self) -> bool:
        return self.kind != "power_fixed"


def eval_probability(model: ProbabilityModel, rho_norm) -> np.ndarray:
    """Sampling probability at normalized reliability, clamped to [0, 1]."""
    if model.alpha <= 0.0:
        raise ParameterError("alpha must be positive")
    r = np.asarray(rho_norm, dtype=np.float64)
    if r.size and (r.min() < 0.0 or r.max() > 1.0):
        raise ParameterError("rho_norm outside [0, 1]")
    a = model.alpha
    if model.kind in ("power_learnable", "power_fixed"):
        p = 1.0 - r**a
    elif model.kind == "exponential_learnable":
        p = a * np.exp(-a * r)
    else:  # gaussian_learnable
        p = np.exp(-(r * r) / (2.0 * a * a))
    return np.clip(p, 0.0, 1.0)


@dataclass(frozen=True)
class AgreementHistogram:
    """Teacher/student agreement counts bucketed by normalized reliability."""

    bin_edges: np.ndarray  # length B+1, uniform on [0,1]
    counts: np.ndarray  # int64, length B
    density: np.ndarray  # min/max normalized to [0,1]
    empty: bool

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def build_agreement_histogram(
    teacher_pred: np.ndarray, student_pred: np.ndarray, rho_norm: np.ndarray, bins: int
) -> AgreementHistogram:
    if bins < 1:
        raise ParameterError("bins must be at least 1")
    teacher_pred = np.asarray(teacher_pred)
    student_pred = np.asarray(student_pred)
    rho_norm = np.asarray(rho_norm, dtype=np.float64)
    if not (len(teacher_pred) == len(student_pred) == len(rho_norm)):
        raise ParameterError("prediction/reliability length mismatch")
    agree = rho_norm[teacher_pred == student_pred]
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(agree, bins=edges)
    counts = counts.astype(np.int64)
    lo, hi = counts.min(), counts.max()
    if hi == 0:
        return AgreementHistogram(edges, counts, np.zeros(bins), empty=True)
    if hi == lo:
        density = np.ones(bins)
    else:
        density = (counts - lo) / float(hi - lo)
    return AgreementHistogram(edges, counts, density, empty=False)


def _sum_sq_err(alpha: float, kind: str, centers: np.ndarray, density: np.ndarray) -> float:
    probe = ProbabilityModel(kind=kind, alpha=alpha)
    resid = eval_probability(probe, centers) - density
    return float((resid * resid).sum())


def fit_alpha(hist: AgreementHistogram, kind: str = "power_learnable") -> float:
    """Least-squares alpha over [ALPHA_LO, ALPHA_HI].

    Log grid of GRID_POINTS candidates, then golden-section refinement of
    the bracketing interval down to ALPHA_TOL. Bins with zero raw count
    carry no evidence and are excluded.
    """
    if hist.empty:
        raise FitError("agreement histogram is empty")
    keep = hist.counts > 0
    centers, density = hist.centers[keep], hist.density[keep]
    grid = np.exp(np.linspace(np.log(ALPHA_LO), np.log(ALPHA_HI), GRID_POINTS))
    errs = [_sum_sq_err(a, kind, centers, density) for a in grid]
    best = int(np.argmin(errs))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, GRID_POINTS - 1)]
    alpha = _golden_section(lambda a: _sum_sq_err(a, kind, centers, density), lo, hi)
    # the bracket midpoint sits up to ALPHA_TOL below a pegged bound
    if alpha >= ALPHA_HI - 2.0 * ALPHA_TOL:
        log.warning("fit_alpha hit the search upper bound %.2f", ALPHA_HI)
    return alpha


_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_section(fn, lo: float, hi: float, tol: float = ALPHA_TOL) -> float:
    a, b = lo, hi
    c = b - (b - a) * _INV_PHI
    d = a + (b - a) * _INV_PHI
    fc, fd = fn(c), fn(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * _INV_PHI
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * _INV_PHI
            fd = fn(d)
    return 0.5 * (a + b)


def momentum_update(alpha_prev: float, alpha_new: float, eta: float) -> float:
    if not 0.0 <= eta <= 1.0:
        raise ParameterError("eta must lie in [0, 1]")
    return eta * alpha_prev + (1.0 - eta) * alpha_new


@dataclass(frozen=True)
class SampledSupervision:
    """Directed (teacher_node, student_node) pairs drawn for one epoch."""

    pairs: np.ndarray  # int64 M x 2
    strategy: str
    epoch: int

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)


def directed_pairs(edges: np.ndarray, direction: str) -> np.ndarray:
    """All ordered (teacher, student) neighbor pairs in deterministic order.

    Every undirected edge yields both orientations. ``direction`` names
    which endpoint of the oriented pair (center, sampled-neighbor) acts
    as the teacher; it changes role assignment, not the pair set.
    """
    if direction not in ("teacher_at_sampled", "teacher_at_center"):
        raise ParameterError(f"unknown krd direction {direction!r}")
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    centers = np.concatenate([edges[:, 0], edges[:, 1]])
    sampled = np.concatenate([edges[:, 1], edges[:, 0]])
    if direction == "teacher_at_sampled":
        teacher, student = sampled, centers
    else:
        teacher, student = centers, sampled
    pairs = np.stack([teacher, student], axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def pair_probabilities(
    pairs: np.ndarray, profile: ReliabilityProfile, model: ProbabilityModel, strategy: str
) -> np.ndarray:
    """Per-pair inclusion probability, driven by the teacher-side node."""
    if strategy not in STRATEGIES:
        raise ParameterError(f"unknown sampling strategy {strategy!r}")
    m = len(pairs)
    if strategy == "all":
        return np.ones(m)
    if strategy == "random":
        return np.full(m, 0.5)
    teacher_side = pairs[:, 0]
    if strategy == "entropy":
        ent = profile.base_entropy
        span = ent.max() - ent.min()
        norm = np.zeros_like(ent) if span == 0.0 else (ent - ent.min()) / span
        return norm[teacher_side]
    if profile.degenerate:
        return np.ones(m)
    return eval_probability(model, profile.rho_normalized[teacher_side])


def sample_supervision(
    edges: np.ndarray,
    profile: ReliabilityProfile,
    model: ProbabilityModel,
    strategy: str,
    direction: str,
    rng,
    epoch: int,
) -> SampledSupervision:
    """Fresh Bernoulli draw over all directed neighbor pairs for one epoch."""
    pairs = directed_pairs(edges, direction)
    if len(pairs) == 0:
        return SampledSupervision(pairs, strategy, epoch)
    probs = pair_probabilities(pairs, profile, model, strategy)
    take = rng.bernoulli(probs)
    return SampledSupervision(pairs[take], strategy, epoch)
