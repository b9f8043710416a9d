"""The dual-channel pan-sharpening network.

Two feature channels run in parallel over L levels: a 2D channel on the pan
image (bands * channels filters) and a 3D channel on the upsampled
multispectral cube (band-preserving 3x3x3 convs). At selected levels a
convolutional LSTM cell fuses the pair; its hidden state feeds back into both
channels and the deepest state enters the reconstruction module. The cell's
gate weights are shared across levels, as in any recurrent cell; the residual
blocks are per-level.

A 3D feature is [batch, C, B, H, W]; its 2D twin is [batch, B*C, H, W] with
channel index band * C + c, so flatten/unflatten are exact inverses.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import bicubic_resample
from .engine import (ConfigError, DimensionError, Tensor, absolute, concat,
                     conv2d, conv3d, conv_transpose3d, grouped_conv, maximum,
                     mean_all, prelu, reshape, sigmoid, sum_all, tanh,
                     transpose)

FUSION_OPS = ("s2clstm", "sum", "max", "average", "product", "conv")
BACKBONES = ("2d3d", "2d2d")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``spectral_channels`` is the 3D channel width C; the 2D channel width is
    bands * C. ``beta`` is the reconstruction width multiplier and must equal
    ``bands`` (the flatten convention requires it); None means bands.
    """

    bands: int = 4
    spectral_channels: int = 32
    beta: int | None = None
    levels: int = 4
    kernel: int = 3
    fusion_levels: tuple = None
    fusion_op: str = "s2clstm"
    backbone: str = "2d3d"
    l2_weight: float = 1e-8
    transpose_projection: bool = False
    forget_bias: float = 0.0
    ratio: int = 4

    def __post_init__(self):
        if self.bands < 1:
            raise ConfigError(f"bands must be >= 1, got {self.bands}")
        if self.spectral_channels < 1:
            raise ConfigError(f"spectral_channels must be >= 1, got "
                              f"{self.spectral_channels}")
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd and >= 1, got {self.kernel}")
        if self.beta is None:
            object.__setattr__(self, "beta", self.bands)
        if self.beta != self.bands:
            raise ConfigError(
                f"beta ({self.beta}) must equal bands ({self.bands}): the 2D "
                f"channel width beta*C must match the band flattening B*C")
        if self.fusion_levels is None:
            object.__setattr__(self, "fusion_levels",
                               tuple(range(1, self.levels + 1)))
        else:
            lv = tuple(sorted(set(int(x) for x in self.fusion_levels)))
            for x in lv:
                if x < 1 or x > self.levels:
                    raise ConfigError(f"fusion level {x} outside 1..{self.levels}")
            object.__setattr__(self, "fusion_levels", lv)
        if self.fusion_op not in FUSION_OPS:
            raise ConfigError(f"fusion_op {self.fusion_op!r} not one of {FUSION_OPS}")
        if self.backbone not in BACKBONES:
            raise ConfigError(f"backbone {self.backbone!r} not one of {BACKBONES}")
        if self.l2_weight < 0:
            raise ConfigError(f"l2_weight must be >= 0, got {self.l2_weight}")
        if self.ratio < 1:
            raise ConfigError(f"ratio must be >= 1, got {self.ratio}")

    @property
    def spatial_channels(self) -> int:
        return self.bands * self.spectral_channels

    def to_dict(self) -> dict:
        return {
            "bands": self.bands,
            "spectral_channels": self.spectral_channels,
            "beta": self.beta,
            "levels": self.levels,
            "kernel": self.kernel,
            "fusion_levels": list(self.fusion_levels),
            "fusion_op": self.fusion_op,
            "backbone": self.backbone,
            "l2_weight": self.l2_weight,
            "transpose_projection": self.transpose_projection,
            "forget_bias": self.forget_bias,
            "ratio": self.ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f: d[f] for f in d}
        if "fusion_levels" in known and known["fusion_levels"] is not None:
            known["fusion_levels"] = tuple(known["fusion_levels"])
        return cls(**known)


class ParamStore:
    """Named, insertion-ordered parameter map."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def weight_names(self):
        """Conv weights only (no biases, no activation slopes)."""
        return [n for n in self._params if n.rsplit(".", 1)[-1].startswith("w")]

    def count_scalars(self) -> int:
        return sum(p.size for p in self._params.values())

    def snapshot(self) -> dict:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_snapshot(self, arrays: dict):
        missing = [n for n in self._params if n not in arrays]
        extra = [n for n in arrays if n not in self._params]
        if missing or extra:
            raise ConfigError(f"parameter set mismatch: missing {missing[:3]}, "
                              f"unexpected {extra[:3]}")
        for n, p in self._params.items():
            arr = np.asarray(arrays[n])
            if arr.shape != p.data.shape:
                raise DimensionError(f"parameter {n!r}: stored shape {arr.shape} "
                                     f"!= expected {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> ParamStore:
    """He-normal conv weights, zero biases, 0.25 activation slopes.

    Creation order is fixed, so identical (config, seed) gives bit-identical
    parameters.
    """
    rng = np.random.default_rng(seed)
    store = ParamStore()
    k = config.kernel
    c = config.spectral_channels
    b = config.bands
    cb = config.spatial_channels

    def conv_w(name, shape):
        fan_in = int(np.prod(shape[1:]))
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        store.add(name, Tensor(w.astype(dtype), dtype=dtype))

    def bias(name, n, value=0.0):
        store.add(name, Tensor(np.full(n, value, dtype=dtype), dtype=dtype))

    def slope(name, n):
        store.add(name, Tensor(np.full(n, 0.25, dtype=dtype), dtype=dtype))

    conv_w("spatial.stem.w", (cb, 1, k, k))
    bias("spatial.stem.b", cb)
    slope("spatial.stem.a", cb)
    for lv in range(1, config.levels + 1):
        for half in ("0", "1"):
            conv_w(f"spatial.res{lv}.w{half}", (cb, cb, k, k))
            bias(f"spatial.res{lv}.b{half}", cb)
            slope(f"spatial.res{lv}.a{half}", cb)

    if config.backbone == "2d3d":
        conv_w("spectral.stem.w", (c, 1, k, k, k))
        bias("spectral.stem.b", c)
        slope("spectral.stem.a", c)
        for lv in range(1, config.levels + 1):
            for half in ("0", "1"):
                conv_w(f"spectral.res{lv}.w{half}", (c, c, k, k, k))
                bias(f"spectral.res{lv}.b{half}", c)
                slope(f"spectral.res{lv}.a{half}", c)
    else:
        conv_w("spectral.stem.w", (cb, b, k, k))
        bias("spectral.stem.b", cb)
        slope("spectral.stem.a", cb)
        for lv in range(1, config.levels + 1):
            for half in ("0", "1"):
                conv_w(f"spectral.res{lv}.w{half}", (cb, cb, k, k))
                bias(f"spectral.res{lv}.b{half}", cb)
                slope(f"spectral.res{lv}.a{half}", cb)

    if config.fusion_op == "s2clstm" and config.fusion_levels:
        for gate in ("i", "f", "o", "c"):
            conv_w(f"cell.{gate}.wp", (c, c, k, k, k))
            conv_w(f"cell.{gate}.wm", (c, c, k, k, k))
            conv_w(f"cell.{gate}.wh", (c, c, k, k, k))
            if gate != "c":
                conv_w(f"cell.{gate}.wc", (c, 1, 1, 1, 1))
            bias(f"cell.{gate}.b", c,
                 value=config.forget_bias if gate == "f" else 0.0)
    elif config.fusion_op == "conv" and config.fusion_levels:
        conv_w("fusion.conv.w", (c, 2 * c, 1, 1, 1))
        bias("fusion.conv.b", c)

    conv_w("recon.proj.w", (c, c, k, k, k))
    bias("recon.proj.b", c)
    conv_w("recon.bottleneck.w", (c, 3 * c, 1, 1, 1))
    bias("recon.bottleneck.b", c)
    slope("recon.bottleneck.a", c)
    for half in ("0", "1"):
        conv_w(f"recon.res.w{half}", (c, c, k, k, k))
        bias(f"recon.res.b{half}", c)
        slope(f"recon.res.a{half}", c)
    conv_w("recon.out.w", (1, c, k, k, k))
    bias("recon.out.b", 1)
    return store


@dataclass
class ClstmState:
    """Hidden and cell volumes, both [batch, C, B, H, W]."""

    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch: int, channels: int, bands: int, h: int, w: int,
              dtype=np.float32) -> "ClstmState":
        shape = (batch, channels, bands, h, w)
        return cls(h=Tensor(np.zeros(shape, dtype), dtype=dtype),
                   c=Tensor(np.zeros(shape, dtype), dtype=dtype))


def flatten_bands(x: Tensor, bands: int, channels: int) -> Tensor:
    """[b, C, B, H, W] -> [b, B*C, H, W], channel index = band * C + c."""
    bsz = x.shape[0]
    h, w = x.shape[3], x.shape[4]
    y = transpose(x, (0, 2, 1, 3, 4))
    return reshape(y, (bsz, bands * channels, h, w))


def unflatten_bands(x: Tensor, bands: int, channels: int) -> Tensor:
    """[b, B*C, H, W] -> [b, C, B, H, W]; inverse of flatten_bands."""
    bsz = x.shape[0]
    h, w = x.shape[2], x.shape[3]
    y = reshape(x, (bsz, bands, channels, h, w))
    return transpose(y, (0, 2, 1, 3, 4))


class DCNet:
    """The trainable network: configuration plus a parameter store."""

    def __init__(self, config: ModelConfig, params: ParamStore | None = None,
                 seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.params = params if params is not None else init_params(config, seed, dtype)

    # -- building blocks ---------------------------------------------------

    def _pad(self) -> int:
        return self.config.kernel // 2

    def spatial_stem(self, pan: Tensor) -> Tensor:
        """[b, 1, H, W] -> [b, B*C, H, W]."""
        p = self.params
        y = conv2d(pan, p["spatial.stem.w"], p["spatial.stem.b"], padding=self._pad())
        return prelu(y, p["spatial.stem.a"])

    def spectral_stem(self, ms_up: Tensor) -> Tensor:
        """[b, B, H, W] (upsampled cube) -> [b, C, B, H, W]."""
        cfg = self.config
        p = self.params
        if cfg.backbone == "2d3d":
            vol = reshape(ms_up, (ms_up.shape[0], 1) + tuple(ms_up.shape[1:]))
            y = conv3d(vol, p["spectral.stem.w"], p["spectral.stem.b"],
                       padding=self._pad())
            return prelu(y, p["spectral.stem.a"])
        y = conv2d(ms_up, p["spectral.stem.w"], p["spectral.stem.b"],
                   padding=self._pad())
        y = prelu(y, p["spectral.stem.a"])
        return unflatten_bands(y, cfg.bands, cfg.spectral_channels)

    def _residual(self, x: Tensor, prefix: str, op) -> Tensor:
        p = self.params
        pad = self._pad()
        inner = prelu(op(x, p[f"{prefix}.w0"], p[f"{prefix}.b0"], padding=pad),
                      p[f"{prefix}.a0"])
        outer = prelu(op(inner, p[f"{prefix}.w1"], p[f"{prefix}.b1"], padding=pad),
                      p[f"{prefix}.a1"])
        return x + outer

    def residual2d(self, x: Tensor, level: int) -> Tensor:
        return self._residual(x, f"spatial.res{level}", conv2d)

    def residual3d(self, x: Tensor, level: int) -> Tensor:
        cfg = self.config
        if cfg.backbone == "2d3d":
            return self._residual(x, f"spectral.res{level}", conv3d)
        flat = flatten_bands(x, cfg.bands, cfg.spectral_channels)
        out = self._residual(flat, f"spectral.res{level}", conv2d)
        return unflatten_bands(out, cfg.bands, cfg.spectral_channels)

    def _project_2d_to_3d(self, fp: Tensor, weight: Tensor, bias=None) -> Tensor:
        """Band-unflatten then one 3D conv (or transposed conv) to C channels."""
        cfg = self.config
        vol = unflatten_bands(fp, cfg.bands, cfg.spectral_channels)
        if cfg.transpose_projection:
            return conv_transpose3d(vol, weight, bias, padding=self._pad(),
                                    output_shape=vol.shape[2:])
        return conv3d(vol, weight, bias, padding=self._pad())

    def s2clstm_step(self, fp: Tensor, fm: Tensor, state: ClstmState):
        """One fusion step.

        fp [b, B*C, H, W] and fm [b, C, B, H, W] are the level's residual
        outputs; returns (feedback_2d, feedback_3d, new_state) where
        feedback_3d is the new hidden state and feedback_2d its flattening.
        """
        cfg = self.config
        p = self.params
        pad = self._pad()

        def gate_sum(gate: str, cell_term: Tensor | None) -> Tensor:
            acc = self._project_2d_to_3d(fp, p[f"cell.{gate}.wp"], p[f"cell.{gate}.b"])
            acc = acc + conv3d(fm, p[f"cell.{gate}.wm"], padding=pad)
            acc = acc + conv3d(state.h, p[f"cell.{gate}.wh"], padding=pad)
            if cell_term is not None:
                acc = acc + grouped_conv(cell_term, p[f"cell.{gate}.wc"],
                                         groups=cfg.spectral_channels)
            return acc

        i = sigmoid(gate_sum("i", state.c))
        f = sigmoid(gate_sum("f", state.c))
        cand = tanh(gate_sum("c", None))
        c_new = f * state.c + i * cand
        o = sigmoid(gate_sum("o", c_new))
        h_new = o * tanh(c_new)
        out_p = flatten_bands(h_new, cfg.bands, cfg.spectral_channels)
        return out_p, h_new, ClstmState(h=h_new, c=c_new)

    def alt_fusion(self, fp: Tensor, fm: Tensor) -> Tensor:
        """Stateless fusion over the pair, in the 3D layout."""
        cfg = self.config
        vol = unflatten_bands(fp, cfg.bands, cfg.spectral_channels)
        op = cfg.fusion_op
        if op == "sum":
            return vol + fm
        if op == "average":
            return (vol + fm) * 0.5
        if op == "max":
            return maximum(vol, fm)
        if op == "product":
            return vol * fm
        if op == "conv":
            both = concat([vol, fm], axis=1)
            return conv3d(both, self.params["fusion.conv.w"],
                          self.params["fusion.conv.b"])
        raise ConfigError(f"alt_fusion called with fusion_op {op!r}")

    def channel_level(self, level: int, fp: Tensor, fm: Tensor,
                      state: ClstmState, h_rec: Tensor):
        """Residual blocks, optional fusion, and feedback for one level.

        Feedback is added below the final level; at level L the residual
        outputs pass through unchanged (the fused state still updates h_rec
        for reconstruction).
        """
        cfg = self.config
        fp_cl = self.residual2d(fp, level)
        fm_cl = self.residual3d(fm, level)
        fused_p = fused_m = None
        if level in cfg.fusion_levels:
            if cfg.fusion_op == "s2clstm":
                fused_p, fused_m, state = self.s2clstm_step(fp_cl, fm_cl, state)
            else:
                fused_m = self.alt_fusion(fp_cl, fm_cl)
                fused_p = flatten_bands(fused_m, cfg.bands, cfg.spectral_channels)
            h_rec = fused_m
        if level < cfg.levels and fused_p is not None:
            fp_next = fp_cl + fused_p
            fm_next = fm_cl + fused_m
        else:
            fp_next, fm_next = fp_cl, fm_cl
        return fp_next, fm_next, state, h_rec

    def reconstruct(self, fp: Tensor, fm: Tensor, h_rec: Tensor) -> Tensor:
        """Project, concatenate the three volumes, bottleneck, refine, emit."""
        p = self.params
        projected = self._project_2d_to_3d(fp, p["recon.proj.w"], p["recon.proj.b"])
        stacked = concat([projected, fm, h_rec], axis=1)
        y = conv3d(stacked, p["recon.bottleneck.w"], p["recon.bottleneck.b"])
        y = prelu(y, p["recon.bottleneck.a"])
        y = self._residual(y, "recon.res", conv3d)
        y = conv3d(y, p["recon.out.w"], p["recon.out.b"], padding=self._pad())
        bsz = y.shape[0]
        return reshape(y, (bsz,) + tuple(y.shape[2:]))

    # -- whole network -----------------------------------------------------

    def upsample_ms(self, ms: np.ndarray) -> np.ndarray:
        """Bicubic x ratio per sample, outside the autodiff graph."""
        return np.stack([bicubic_resample(sample, self.config.ratio)
                         for sample in ms])

    def _coerce_inputs(self, pan, ms):
        cfg = self.config
        pan_arr = pan.data if isinstance(pan, Tensor) else np.asarray(pan)
        ms_arr = ms.data if isinstance(ms, Tensor) else np.asarray(ms)
        if pan_arr.ndim == 3:
            pan_arr = pan_arr[:, None]
        if pan_arr.ndim != 4 or pan_arr.shape[1] != 1:
            raise DimensionError(f"pan must be [batch, 1, H, W], got {pan_arr.shape}")
        if ms_arr.ndim != 4:
            raise DimensionError(f"ms must be [batch, B, h, w], got {ms_arr.shape}")
        if ms_arr.shape[1] != cfg.bands:
            raise DimensionError(f"ms has {ms_arr.shape[1]} bands, config expects "
                                 f"{cfg.bands}")
        if pan_arr.shape[0] != ms_arr.shape[0]:
            raise DimensionError(f"batch mismatch: pan {pan_arr.shape[0]} vs "
                                 f"ms {ms_arr.shape[0]}")
        h, w = pan_arr.shape[2:]
        if (h, w) != (cfg.ratio * ms_arr.shape[2], cfg.ratio * ms_arr.shape[3]):
            raise DimensionError(
                f"pan spatial {h, w} must be {cfg.ratio}x the ms grid "
                f"{ms_arr.shape[2:]}")
        return (pan_arr.astype(self.dtype, copy=False),
                ms_arr.astype(self.dtype, copy=False))

    def forward(self, pan, ms, trace: dict | None = None) -> Tensor:
        """pan [b, 1, H, W] + ms [b, B, H/ratio, W/ratio] -> [b, B, H, W].

        Inputs may be Tensors or arrays; the cube is upsampled internally.
        ``trace``, if given, collects intermediate feature shapes by name.
        """
        cfg = self.config
        pan_arr, ms_arr = self._coerce_inputs(pan, ms)
        ms_up = Tensor(self.upsample_ms(ms_arr), dtype=self.dtype)
        pan_t = Tensor(pan_arr, dtype=self.dtype)
        batch, _, h, w = pan_arr.shape

        fp = self.spatial_stem(pan_t)
        fm = self.spectral_stem(ms_up)
        state = ClstmState.zeros(batch, cfg.spectral_channels, cfg.bands, h, w,
                                 dtype=self.dtype)
        h_rec = state.h
        if trace is not None:
            trace["spatial_stem"] = fp.shape
            trace["spectral_stem"] = fm.shape
        for level in range(1, cfg.levels + 1):
            fp, fm, state, h_rec = self.channel_level(level, fp, fm, state, h_rec)
            if trace is not None:
                trace[f"level{level}.spatial"] = fp.shape
                trace[f"level{level}.spectral"] = fm.shape
                if level in cfg.fusion_levels:
                    trace[f"level{level}.hidden"] = h_rec.shape
        out = self.reconstruct(fp, fm, h_rec)
        if trace is not None:
            trace["output"] = out.shape
        return out

    def loss(self, y_hat: Tensor, y_true) -> tuple:
        """(total, l1): mean absolute error plus l2_weight * sum of squared
        conv weights (biases and slopes excluded)."""
        target = y_true if isinstance(y_true, Tensor) else Tensor(
            np.asarray(y_true, dtype=self.dtype), dtype=self.dtype)
        if target.shape != y_hat.shape:
            raise DimensionError(f"loss: prediction {y_hat.shape} vs target "
                                 f"{target.shape}")
        l1 = mean_all(absolute(y_hat - target))
        if self.config.l2_weight == 0.0:
            return l1, l1
        reg = None
        for name in self.params.weight_names():
            w = self.params[name]
            term = sum_all(w * w)
            reg = term if reg is None else reg + term
        total = l1 + self.config.l2_weight * reg
        return total, l1

    def predict(self, pan, ms) -> np.ndarray:
        """Forward outside any tape; returns a plain array."""
        return self.forward(pan, ms).data

    def with_config(self, **overrides) -> "ModelConfig":
        return replace(self.config, **overrides)
