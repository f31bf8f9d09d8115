"""Adam optimizer with decoupled weight decay.

One ``AdamState`` per trainable tensor. Decay is subtracted from the
parameter directly (``lr * weight_decay * param``) rather than added to
the gradient, so the moment estimates never see it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from krd.errors import ParameterError


@dataclass
class AdamState:
    """First/second moment estimates plus a shared step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def for_param(cls, param: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(param), v=np.zeros_like(param))


@dataclass
class AdamConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ParameterError("Adam lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ParameterError("Adam betas must lie in [0, 1)")
        if self.eps <= 0.0:
            raise ParameterError("Adam eps must be positive")
        if self.weight_decay < 0.0:
            raise ParameterError("Adam weight_decay must be nonnegative")


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, cfg: AdamConfig) -> None:
    """Update ``param`` and ``state`` in place for one step."""
    if param.shape != grad.shape:
        raise ParameterError(f"adam shape mismatch: param {param.shape}, grad {grad.shape}")
    state.step += 1
    t = state.step
    state.m *= cfg.beta1
    state.m += (1.0 - cfg.beta1) * grad
    state.v *= cfg.beta2
    state.v += (1.0 - cfg.beta2) * grad * grad
    m_hat = state.m / (1.0 - cfg.beta1**t)
    v_hat = state.v / (1.0 - cfg.beta2**t)
    if cfg.weight_decay != 0.0:
        param -= cfg.lr * cfg.weight_decay * param
    param -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


@dataclass
class Optimizer:
    """Adam over a named collection of parameters."""

    cfg: AdamConfig
    states: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        for name, param in params.items():
            if name not in grads:
                raise ParameterError(f"missing gradient for parameter {name!r}")
            if name not in self.states:
                self.states[name] = AdamState.for_param(param)
            adam_step(param, grads[name], self.states[name], self.cfg)
