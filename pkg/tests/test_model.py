"""Network structure: config validation, cell semantics, shapes, gradients."""

import numpy as np
import pytest

from dcnet.engine import (ConfigError, DimensionError, Tape, Tensor, mean_all,
                          sum_all)
from dcnet.model import (ClstmState, DCNet, ModelConfig, ParamStore,
                         flatten_bands, init_params, unflatten_bands)


def tiny_config(**overrides):
    base = dict(bands=4, spectral_channels=2, levels=2, fusion_levels=(1, 2),
                fusion_op="s2clstm", backbone="2d3d")
    base.update(overrides)
    return ModelConfig(**base)


def model_inputs(rng, batch=1, bands=4, size=16):
    pan = rng.uniform(0.1, 0.9, (batch, 1, size, size)).astype(np.float32)
    ms = rng.uniform(0.1, 0.9, (batch, bands, size // 4, size // 4)).astype(np.float32)
    return pan, ms


class TestModelConfig:
    def test_defaults(self):
        cfg = ModelConfig()
        assert cfg.spatial_channels == 128
        assert cfg.beta == 4
        assert cfg.fusion_levels == (1, 2, 3, 4)

    def test_beta_must_match_bands(self):
        with pytest.raises(ConfigError, match="beta"):
            ModelConfig(bands=4, beta=8)

    def test_fusion_level_bounds(self):
        with pytest.raises(ConfigError):
            ModelConfig(levels=2, fusion_levels=(3,))

    def test_unknown_fusion_op(self):
        with pytest.raises(ConfigError):
            ModelConfig(fusion_op="mystery")

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig(kernel=4)

    def test_dict_round_trip(self):
        cfg = tiny_config(fusion_levels=(2,), fusion_op="conv", l2_weight=1e-7)
        back = ModelConfig.from_dict(cfg.to_dict())
        assert back == cfg


class TestParamStore:
    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("x.w", Tensor(np.ones(2, np.float32)))
        with pytest.raises(ConfigError):
            store.add("x.w", Tensor(np.ones(2, np.float32)))

    def test_weight_names_exclude_bias_and_slope(self):
        store = init_params(tiny_config(), seed=0)
        weights = store.weight_names()
        assert "spatial.stem.w" in weights
        assert all(not n.endswith(".b") and not n.endswith(".a") for n in weights)
        assert any(n.endswith(".w0") for n in weights)

    def test_snapshot_round_trip_bit_exact(self):
        store = init_params(tiny_config(), seed=1)
        snap = store.snapshot()
        store.load_snapshot(snap)
        for name, p in store.items():
            assert np.array_equal(p.data, snap[name])

    def test_load_rejects_shape_mismatch(self):
        store = init_params(tiny_config(), seed=1)
        snap = store.snapshot()
        snap["spatial.stem.w"] = snap["spatial.stem.w"][:1]
        with pytest.raises(DimensionError):
            store.load_snapshot(snap)

    def test_load_rejects_name_mismatch(self):
        store = init_params(tiny_config(), seed=1)
        snap = store.snapshot()
        del snap["spatial.stem.b"]
        with pytest.raises(ConfigError):
            store.load_snapshot(snap)

    def test_init_is_seed_deterministic(self):
        a = init_params(tiny_config(), seed=7)
        b = init_params(tiny_config(), seed=7)
        assert a.names() == b.names()
        for name, p in a.items():
            assert np.array_equal(p.data, b[name].data)


class TestBandFlattening:
    def test_round_trip(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 4, 5, 6)).astype(np.float32))
        back = unflatten_bands(flatten_bands(x, bands=4, channels=3), 4, 3)
        assert np.array_equal(back.data, x.data)

    def test_channel_order_is_band_major(self, rng):
        # channel k of the flat view must be band k // C, channel k % C
        x = rng.normal(size=(1, 3, 2, 4, 4)).astype(np.float32)
        flat = flatten_bands(Tensor(x), bands=2, channels=3).data
        for band in range(2):
            for c in range(3):
                np.testing.assert_array_equal(flat[0, band * 3 + c], x[0, c, band])


class TestClstmCell:
    def test_zero_weight_trace(self, rng):
        cfg = tiny_config()
        net = DCNet(cfg, seed=0)
        for name, p in net.params.items():
            if name.startswith("cell."):
                p.data = np.zeros_like(p.data)
        fp = Tensor(rng.normal(size=(1, 8, 8, 8)).astype(np.float32))
        fm = Tensor(rng.normal(size=(1, 2, 4, 8, 8)).astype(np.float32))
        state = ClstmState.zeros(1, 2, 4, 8, 8)
        out_p, out_m, new_state = net.s2clstm_step(fp, fm, state)
        assert np.array_equal(new_state.c.data, np.zeros_like(new_state.c.data))
        assert np.array_equal(new_state.h.data, np.zeros_like(new_state.h.data))
        assert np.array_equal(out_p.data, np.zeros_like(out_p.data))
        assert np.array_equal(out_m.data, np.zeros_like(out_m.data))

    def test_zero_weight_gate_values(self, rng):
        # with zero weights every gate must sit at sigmoid(0) = 0.5; probe via
        # a single nonzero forget bias shifting the cell state
        cfg = tiny_config(forget_bias=0.0)
        net = DCNet(cfg, seed=0)
        for name, p in net.params.items():
            if name.startswith("cell."):
                p.data = np.zeros_like(p.data)
        fp = Tensor(rng.normal(size=(1, 8, 8, 8)).astype(np.float32))
        fm = Tensor(rng.normal(size=(1, 2, 4, 8, 8)).astype(np.float32))
        prev_c = rng.normal(size=(1, 2, 4, 8, 8)).astype(np.float32)
        state = ClstmState(h=Tensor(np.zeros_like(prev_c)), c=Tensor(prev_c))
        _, _, new_state = net.s2clstm_step(fp, fm, state)
        # c' = f * c + i * cand = 0.5 * c + 0.5 * 0
        np.testing.assert_allclose(new_state.c.data, 0.5 * prev_c, rtol=1e-6)
        np.testing.assert_allclose(new_state.h.data,
                                   0.5 * np.tanh(0.5 * prev_c), rtol=1e-5)

    def test_state_shapes_preserved(self, rng):
        net = DCNet(tiny_config(), seed=1)
        fp = Tensor(rng.normal(size=(2, 8, 8, 8)).astype(np.float32))
        fm = Tensor(rng.normal(size=(2, 2, 4, 8, 8)).astype(np.float32))
        state = ClstmState.zeros(2, 2, 4, 8, 8)
        out_p, out_m, new_state = net.s2clstm_step(fp, fm, state)
        assert out_p.shape == (2, 8, 8, 8)
        assert out_m.shape == (2, 2, 4, 8, 8)
        assert new_state.h.shape == (2, 2, 4, 8, 8)
        assert new_state.c.shape == (2, 2, 4, 8, 8)


class TestForward:
    def test_output_shape(self, rng):
        net = DCNet(tiny_config(), seed=0)
        pan, ms = model_inputs(rng)
        out = net.forward(pan, ms)
        assert out.shape == (1, 4, 16, 16)

    def test_trace_shapes(self, rng):
        net = DCNet(tiny_config(), seed=0)
        pan, ms = model_inputs(rng)
        trace = {}
        net.forward(pan, ms, trace=trace)
        assert trace["spatial_stem"] == (1, 8, 16, 16)
        assert trace["spectral_stem"] == (1, 2, 4, 16, 16)
        assert trace["level1.spatial"] == (1, 8, 16, 16)
        assert trace["level1.hidden"] == (1, 2, 4, 16, 16)
        assert trace["level2.spectral"] == (1, 2, 4, 16, 16)
        assert trace["output"] == (1, 4, 16, 16)

    def test_input_validation(self, rng):
        net = DCNet(tiny_config(), seed=0)
        pan, ms = model_inputs(rng)
        with pytest.raises(DimensionError):
            net.forward(pan, ms[:, :3])  # wrong band count
        with pytest.raises(DimensionError):
            net.forward(pan[:, :, :12], ms)  # ratio broken

    def test_forward_is_deterministic(self, rng):
        net = DCNet(tiny_config(), seed=3)
        pan, ms = model_inputs(rng)
        a = net.forward(pan, ms).data
        b = net.forward(pan, ms).data
        assert np.array_equal(a, b)

    def test_no_fusion_levels_still_runs(self, rng):
        net = DCNet(tiny_config(fusion_levels=()), seed=0)
        pan, ms = model_inputs(rng)
        out = net.forward(pan, ms)
        assert out.shape == (1, 4, 16, 16)
        assert not any(n.startswith("cell.") for n in net.params.names())

    def test_fusion_only_at_last_level(self, rng):
        net = DCNet(tiny_config(fusion_levels=(2,)), seed=0)
        pan, ms = model_inputs(rng)
        trace = {}
        net.forward(pan, ms, trace=trace)
        assert "level1.hidden" not in trace
        assert "level2.hidden" in trace

    def test_2d2d_backbone_matches_shapes(self, rng):
        net = DCNet(tiny_config(backbone="2d2d"), seed=0)
        pan, ms = model_inputs(rng)
        trace = {}
        out = net.forward(pan, ms, trace=trace)
        assert trace["spectral_stem"] == (1, 2, 4, 16, 16)
        assert out.shape == (1, 4, 16, 16)

    def test_transpose_projection_flag(self, rng):
        net = DCNet(tiny_config(transpose_projection=True), seed=0)
        pan, ms = model_inputs(rng)
        assert net.forward(pan, ms).shape == (1, 4, 16, 16)


class TestAltFusion:
    @pytest.mark.parametrize("op", ["sum", "max", "average", "product", "conv"])
    def test_forward_runs_and_shapes(self, op, rng):
        net = DCNet(tiny_config(fusion_op=op), seed=0)
        pan, ms = model_inputs(rng)
        out = net.forward(pan, ms)
        assert out.shape == (1, 4, 16, 16)
        assert np.all(np.isfinite(out.data))

    def test_elementwise_op_semantics(self, rng):
        cfgs = {op: DCNet(tiny_config(fusion_op=op), seed=0) for op in
                ("sum", "max", "average", "product")}
        fp = Tensor(rng.normal(size=(1, 8, 6, 6)).astype(np.float32))
        fm = Tensor(rng.normal(size=(1, 2, 4, 6, 6)).astype(np.float32))
        vol = unflatten_bands(fp, 4, 2).data
        got = {op: net.alt_fusion(fp, fm).data for op, net in cfgs.items()}
        np.testing.assert_allclose(got["sum"], vol + fm.data, rtol=1e-6)
        np.testing.assert_allclose(got["average"], (vol + fm.data) / 2, rtol=1e-6)
        np.testing.assert_allclose(got["max"], np.maximum(vol, fm.data), rtol=1e-6)
        np.testing.assert_allclose(got["product"], vol * fm.data, rtol=1e-6)

    def test_distinct_ops_give_distinct_outputs(self, rng):
        pan, ms = model_inputs(rng)
        outs = {}
        for op in ("sum", "max", "average", "product"):
            outs[op] = DCNet(tiny_config(fusion_op=op), seed=0).forward(pan, ms).data
        assert not np.allclose(outs["sum"], outs["max"])
        assert not np.allclose(outs["average"], outs["product"])


class TestLoss:
    def test_l1_of_identical_is_zero_plus_reg(self, rng):
        net = DCNet(tiny_config(l2_weight=0.0), seed=0)
        y = Tensor(rng.normal(size=(1, 4, 8, 8)).astype(np.float32))
        total, l1 = net.loss(y, y.data.copy())
        assert total.item() == 0.0 and l1.item() == 0.0

    def test_l2_term_matches_manual_sum(self, rng):
        lam = 1e-4
        net = DCNet(tiny_config(l2_weight=lam), seed=0)
        y = Tensor(rng.normal(size=(1, 4, 8, 8)).astype(np.float32))
        total, l1 = net.loss(y, y.data.copy())
        manual = sum(float(np.sum(net.params[n].data.astype(np.float64) ** 2))
                     for n in net.params.weight_names())
        assert l1.item() == 0.0
        np.testing.assert_allclose(total.item(), lam * manual, rtol=1e-5)

    def test_loss_shape_guard(self, rng):
        net = DCNet(tiny_config(), seed=0)
        y = Tensor(rng.normal(size=(1, 4, 8, 8)).astype(np.float32))
        with pytest.raises(DimensionError):
            net.loss(y, rng.normal(size=(1, 4, 8, 9)))


class TestGradientFlow:
    def test_every_parameter_receives_a_gradient(self, rng):
        net = DCNet(tiny_config(l2_weight=1e-6), seed=0, dtype=np.float64)
        pan, ms = model_inputs(rng, size=8)
        target = rng.normal(size=(1, 4, 8, 8))
        with Tape() as tape:
            out = net.forward(pan.astype(np.float64), ms.astype(np.float64))
            total, _ = net.loss(out, target)
        tape.backward(total)
        missing = [n for n, p in net.params.items() if p.grad is None]
        assert missing == []

    def test_loss_decreases_under_adam(self, rng):
        from dcnet.engine import AdamState, adam_step
        net = DCNet(tiny_config(spectral_channels=2, l2_weight=0.0), seed=0)
        pan, ms = model_inputs(rng, size=8)
        target = net.upsample_ms(ms)  # easy target: reproduce the upsample
        state = AdamState(lr=2e-3)
        losses = []
        for _ in range(30):
            net.params.zero_grad()
            with Tape() as tape:
                out = net.forward(pan, ms)
                total, l1 = net.loss(out, target)
            tape.backward(total)
            adam_step(net.params, state)
            losses.append(l1.item())
        assert losses[-1] < losses[0] * 0.5
