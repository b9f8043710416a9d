"""Shared helpers: finite-difference gradients against the tape."""

import numpy as np
import pytest

from dcnet.engine import Tape


def analytic_grads(fn, tensors):
    """Run fn() under a fresh tape, backprop, return copies of each grad."""
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    return [None if t.grad is None else np.array(t.grad, dtype=np.float64)
            for t in tensors]


def finite_diff_grads(fn, tensors, eps=1e-6):
    """Central differences of fn() w.r.t. every element of every tensor."""
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = fn().item()
            flat[i] = keep - eps
            down = fn().item()
            flat[i] = keep
            g[i] = (up - down) / (2.0 * eps)
        grads.append(g.reshape(t.data.shape))
    return grads


def assert_grads_close(fn, tensors, eps=1e-6, atol=1e-7, rtol=1e-5):
    ana = analytic_grads(fn, tensors)
    num = finite_diff_grads(fn, tensors, eps=eps)
    for t, a, n in zip(tensors, ana, num):
        assert a is not None, f"no analytic grad for tensor of shape {t.shape}"
        np.testing.assert_allclose(a, n, atol=atol, rtol=rtol)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
