"""Adam and the step learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingGradientError


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state: AdamState):
    """One in-place Adam update over ``params`` (an iterable of (name, Tensor)).

    Every parameter must hold a gradient; a missing one is an error naming the
    parameter. Bias-corrected moments, update p -= lr * m_hat / (sqrt(v_hat) + eps).
    """
    items = list(params.items() if hasattr(params, "items") else params)
    state.t += 1
    t = state.t
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in items:
        if p.grad is None:
            raise MissingGradientError(f"parameter '{name}' has no gradient; "
                                       "run backward before adam_step")
        g = p.grad.astype(p.data.dtype, copy=False)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / c1
        v_hat = v / c2
        p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
            p.data.dtype, copy=False)


def lr_schedule(epoch: int, base_lr: float, decay: float = 0.8,
                every: int = 150) -> float:
    """Step decay: base_lr * decay ** floor(epoch / every), epoch counted from 0."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return base_lr * decay ** (epoch // every)
