"""Deterministic counter-based random number generation.

The stream is splitmix64 evaluated at an incrementing counter, so a block of
draws is a pure function of (key, counter range). That keeps every stream
platform-independent and lets the hot block generation run either through
the compiled kernel or the numpy fallback with identical output. Gaussian
draws use Box-Muller on top of the uniform stream.
"""

from __future__ import annotations

import numpy as np

from krd import backend
from krd.errors import ParameterError

_U64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)

# FNV-1a 64-bit, used to fold stream tags into child keys
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix64(z: int) -> int:
    z &= _U64
    z = ((z ^ (z >> 30)) * _MIX_A) & _U64
    z = ((z ^ (z >> 27)) * _MIX_B) & _U64
    return z ^ (z >> 31)


def _fnv1a(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _U64
    return h


class Rng:
    """Seedable counter-based generator with derivable substreams."""

    def __init__(self, seed: int):
        self.key = _mix64(int(seed) & _U64)
        self.counter = 0

    def spawn(self, *tags) -> "Rng":
        """Independent child stream, deterministic in (seed, tags)."""
        label = "/".join(str(t) for t in tags)
        child = Rng(0)
        child.key = _mix64(self.key ^ _fnv1a(label))
        return child

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` uint64 values from the stream."""
        block = backend.mix64_block(self.key, self.counter, int(n))
        self.counter += int(n)
        return block

    def uniform(self, shape) -> np.ndarray:
        """Uniform float64 draws in [0, 1)."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u.reshape(shape)

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws via Box-Muller on uniform pairs."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        radius = np.sqrt(-2.0 * np.log1p(-u[:m]))
        angle = (2.0 * np.pi) * u[m:]
        out = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return out[:n].reshape(shape)

    def bernoulli(self, probs: np.ndarray) -> np.ndarray:
        """One boolean per entry of ``probs``; True with that probability."""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
            raise ParameterError("bernoulli probabilities must lie in [0, 1]")
        return self.uniform(probs.shape) < probs

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (argsort of uniforms)."""
        return np.argsort(self.uniform(int(n)), kind="stable")
