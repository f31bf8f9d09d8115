"""Adam against a scalar reference implementation and its documented laws."""

import numpy as np
import pytest

from krd.errors import ParameterError
from krd.optim import AdamConfig, AdamState, Optimizer, adam_step


def reference_adam(w0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, wd=0.0):
    """Scalar oracle: textbook Adam with decoupled decay."""
    w, m, v = w0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        w -= lr * wd * w
        w -= lr * m_hat / (v_hat**0.5 + eps)
    return w


def test_zero_gradient_leaves_params():
    w = np.ones((2, 2))
    state = AdamState.for_param(w)
    adam_step(w, np.zeros_like(w), state, AdamConfig(lr=0.1))
    assert np.array_equal(w, np.ones((2, 2)))
    assert state.step == 1


def test_first_step_on_quadratic():
    # f(w) = w^2 at w = 1: grad 2; first Adam step moves by almost exactly lr
    w = np.array([[1.0]])
    adam_step(w, np.array([[2.0]]), AdamState.for_param(w), AdamConfig(lr=0.1))
    assert abs(w[0, 0] - 0.9) <= 1e-7


def test_step_counter_increments():
    w = np.zeros((1,))
    state = AdamState.for_param(w)
    cfg = AdamConfig(lr=0.01)
    for expected in (1, 2, 3):
        adam_step(w, np.ones((1,)), state, cfg)
        assert state.step == expected


def test_matches_scalar_reference_over_many_steps():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=12)
    w = np.array([0.7])
    state = AdamState.for_param(w)
    cfg = AdamConfig(lr=0.05, weight_decay=0.01)
    for g in grads:
        adam_step(w, np.array([g]), state, cfg)
    expected = reference_adam(0.7, grads, lr=0.05, wd=0.01)
    assert abs(w[0] - expected) <= 1e-12


def test_decay_is_decoupled_from_moments():
    # with zero gradient, decay still shrinks the parameter
    w = np.array([2.0])
    state = AdamState.for_param(w)
    adam_step(w, np.zeros(1), state, AdamConfig(lr=0.1, weight_decay=0.5))
    assert abs(w[0] - 2.0 * (1.0 - 0.1 * 0.5)) <= 1e-15
    assert not state.m.any() and not state.v.any()


def test_shape_mismatch_rejected():
    w = np.zeros((2, 2))
    with pytest.raises(ParameterError):
        adam_step(w, np.zeros((3,)), AdamState.for_param(w), AdamConfig())


def test_config_validation():
    with pytest.raises(ParameterError):
        AdamConfig(lr=0.0)
    with pytest.raises(ParameterError):
        AdamConfig(beta1=1.0)
    with pytest.raises(ParameterError):
        AdamConfig(weight_decay=-0.1)


def test_optimizer_tracks_named_params():
    params = {"a": np.ones(3), "b": np.zeros((2, 2))}
    grads = {"a": np.ones(3), "b": np.ones((2, 2))}
    opt = Optimizer(AdamConfig(lr=0.1))
    opt.step(params, grads)
    assert opt.states["a"].step == 1
    with pytest.raises(ParameterError):
        opt.step(params, {"a": np.ones(3)})
