"""Adam update traces and the step learning-rate schedule."""

import numpy as np
import pytest

from dcnet.engine import (AdamState, MissingGradientError, Tensor, adam_step,
                          lr_schedule)


def _param(value, grad):
    p = Tensor(np.asarray(value, np.float64), requires_grad=True, dtype=np.float64)
    p.grad = None if grad is None else np.asarray(grad, np.float64)
    return p


class TestAdam:
    def test_first_step_hand_trace(self):
        # unit gradient, defaults: m_hat = v_hat = 1, so the step is
        # lr / (1 + eps) regardless of the gradient's (unit) magnitude.
        p = _param([1.0], [1.0])
        state = AdamState(lr=1e-3)
        adam_step({"w": p}, state)
        expected = 1.0 - 1e-3 / (1.0 + 1e-8)
        np.testing.assert_allclose(p.data, [expected], atol=1e-15)
        assert state.t == 1

    def test_second_step_magnitude_bounded(self):
        p = _param([1.0], [1.0])
        state = AdamState(lr=1e-3)
        adam_step({"w": p}, state)
        first = abs(1.0 - 1e-3 / (1.0 + 1e-8) - float(p.data[0]))  # == 0, recompute below
        before = float(p.data[0])
        p.grad = np.array([1.0])
        adam_step({"w": p}, state)
        second = abs(float(p.data[0]) - before)
        first = abs(1.0 - (1.0 - 1e-3 / (1.0 + 1e-8)))
        assert second <= first * 1.05

    def test_zero_gradient_leaves_parameter_unchanged(self):
        p = _param([2.5], [0.0])
        adam_step({"w": p}, AdamState(lr=0.1))
        np.testing.assert_array_equal(p.data, [2.5])

    def test_missing_gradient_names_parameter(self):
        p = _param([1.0], None)
        with pytest.raises(MissingGradientError, match="spatial.stem.w"):
            adam_step({"spatial.stem.w": p}, AdamState())

    def test_moments_tracked_per_parameter(self):
        a = _param([1.0], [1.0])
        b = _param([1.0], [-1.0])
        state = AdamState(lr=1e-3)
        adam_step({"a": a, "b": b}, state)
        assert set(state.m) == {"a", "b"}
        assert float(a.data[0]) < 1.0 < float(b.data[0])

    def test_descends_a_quadratic(self):
        p = _param([4.0], None)
        state = AdamState(lr=0.05)
        for _ in range(400):
            p.grad = 2.0 * p.data  # d/dp p^2
            adam_step({"p": p}, state)
        assert abs(float(p.data[0])) < 0.05


class TestLrSchedule:
    def test_decay_boundaries(self):
        base = 1e-3
        assert lr_schedule(0, base) == base
        assert lr_schedule(149, base) == base
        np.testing.assert_allclose(lr_schedule(150, base), base * 0.8)
        np.testing.assert_allclose(lr_schedule(300, base), base * 0.64)
        np.testing.assert_allclose(lr_schedule(450, base), base * 0.512)

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            lr_schedule(-1, 1e-3)
