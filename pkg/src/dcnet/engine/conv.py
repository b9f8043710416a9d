"""Convolutions for the autodiff engine.

All ops share one N-dimensional core (N = 2 or 3 spatial axes). The forward
pass builds strided sliding windows and contracts them with the kernel in a
single tensordot (a GEMM); the input gradient scatters per kernel offset into
a padded buffer; the weight gradient contracts the windows with the output
gradient. Convolution here is cross-correlation: no kernel flip.

Weight layouts:
  conv:           [c_out, c_in, *k]
  conv_transpose: [c_from, c_to, *k]   (the adjoint of a conv with the same array)
  grouped conv:   [c_out, c_in // groups, *k]
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError
from .tensor import Tensor, accumulate, record


def _check_geometry(spatial, kshape, stride, padding, what):
    if stride < 1:
        raise ConfigError(f"{what}: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ConfigError(f"{what}: padding must be >= 0, got {padding}")
    out = []
    for ax, (s, k) in enumerate(zip(spatial, kshape)):
        span = s + 2 * padding
        if span < k:
            raise DimensionError(
                f"{what}: spatial axis {ax} extent {s} (+2*{padding} pad) is smaller "
                f"than kernel {k}")
        o = (span - k) // stride + 1
        out.append(o)
    return tuple(out)


def _windows(xp: np.ndarray, kshape, stride: int, nd: int) -> np.ndarray:
    """[b, c, *S_padded] -> strided view [b, c, *S_out, *kshape]."""
    win = sliding_window_view(xp, kshape, axis=tuple(range(2, 2 + nd)))
    if stride > 1:
        sl = (slice(None), slice(None)) + (slice(None, None, stride),) * nd
        win = win[sl]
    return win


def _pad(x: np.ndarray, padding: int, nd: int) -> np.ndarray:
    if padding == 0:
        return x
    width = [(0, 0), (0, 0)] + [(padding, padding)] * nd
    return np.pad(x, width)


def _conv_fwd(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    nd = x.ndim - 2
    kshape = w.shape[2:]
    _check_geometry(x.shape[2:], kshape, stride, padding, "conv")
    win = _windows(_pad(x, padding, nd), kshape, stride, nd)
    axes_x = (1,) + tuple(range(2 + nd, 2 + 2 * nd))
    axes_w = (1,) + tuple(range(2, 2 + nd))
    out = np.tensordot(win, w, axes=(axes_x, axes_w))
    return np.ascontiguousarray(np.moveaxis(out, -1, 1))


def _conv_input_grad(g: np.ndarray, w: np.ndarray, stride: int, padding: int,
                     in_spatial) -> np.ndarray:
    """Scatter ``g`` [b, c_out, *S_out] back to [b, c_in, *in_spatial]."""
    nd = g.ndim - 2
    kshape = w.shape[2:]
    b = g.shape[0]
    ci = w.shape[1]
    padded = tuple(s + 2 * padding for s in in_spatial)
    gi = np.zeros((b, ci) + padded, dtype=np.result_type(g, w))
    out_spatial = g.shape[2:]
    for offset in np.ndindex(*kshape):
        wk = w[(slice(None), slice(None)) + offset]
        t = np.tensordot(g, wk, axes=([1], [0]))
        t = np.moveaxis(t, -1, 1)
        sl = tuple(slice(offset[d], offset[d] + stride * out_spatial[d], stride)
                   for d in range(nd))
        gi[(slice(None), slice(None)) + sl] += t
    if padding:
        trim = (slice(None), slice(None)) + tuple(
            slice(padding, padding + s) for s in in_spatial)
        gi = gi[trim]
    return gi


def _conv_weight_grad(g: np.ndarray, x: np.ndarray, stride: int, padding: int,
                      kshape) -> np.ndarray:
    nd = x.ndim - 2
    win = _windows(_pad(x, padding, nd), kshape, stride, nd)
    axes = (0,) + tuple(range(2, 2 + nd))
    return np.tensordot(g, win, axes=(axes, axes))


def _check_conv_args(x: Tensor, w: Tensor, b, nd: int, what: str):
    if x.ndim != nd + 2:
        raise DimensionError(f"{what}: input must be rank {nd + 2} [batch, channels, ...], "
                             f"got rank {x.ndim}")
    if w.ndim != nd + 2:
        raise DimensionError(f"{what}: weight must be rank {nd + 2}, got rank {w.ndim}")
    if b is not None and (b.ndim != 1 or b.shape[0] != w.shape[0]):
        raise DimensionError(f"{what}: bias must have shape ({w.shape[0]},), got {b.shape}")


def _bias_view(b: np.ndarray, nd: int) -> np.ndarray:
    return b.reshape((1, -1) + (1,) * nd)


def _conv_nd(x: Tensor, w: Tensor, b, stride: int, padding: int, nd: int,
             what: str) -> Tensor:
    _check_conv_args(x, w, b, nd, what)
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"{what}: axis 1 (channels) extent {x.shape[1]} does not "
                             f"match weight in-channels {w.shape[1]}")
    y = _conv_fwd(x.data, w.data, stride, padding)
    if b is not None:
        y = y + _bias_view(b.data, nd)
    out = Tensor(y, dtype=y.dtype)
    in_spatial = x.shape[2:]
    kshape = w.shape[2:]

    def bw():
        g = out.grad
        if g is None:
            return
        accumulate(x, _conv_input_grad(g, w.data, stride, padding, in_spatial))
        accumulate(w, _conv_weight_grad(g, x.data, stride, padding, kshape))
        if b is not None:
            accumulate(b, np.sum(g, axis=(0,) + tuple(range(2, 2 + nd))))

    inputs = (x, w) if b is None else (x, w, b)
    return record(out, inputs, bw)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """2D cross-correlation. x [b, ci, H, W], w [co, ci, kh, kw] -> [b, co, H', W']."""
    return _conv_nd(x, w, b, stride, padding, 2, "conv2d")


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """3D cross-correlation. x [b, ci, D, H, W], w [co, ci, kd, kh, kw]."""
    return _conv_nd(x, w, b, stride, padding, 3, "conv3d")


def _resolve_transpose_shape(in_spatial, kshape, stride, padding, output_shape, what):
    base = tuple((s - 1) * stride + k - 2 * padding for s, k in zip(in_spatial, kshape))
    for ax, extent in enumerate(base):
        if extent < 1:
            raise DimensionError(
                f"{what}: spatial axis {ax} would have non-positive output extent "
                f"{extent} (input {in_spatial[ax]}, kernel {kshape[ax]}, "
                f"stride {stride}, padding {padding})")
    if output_shape is None:
        out = base
    else:
        out = tuple(int(v) for v in output_shape)
        if len(out) != len(in_spatial):
            raise DimensionError(f"{what}: output_shape rank {len(out)} != {len(in_spatial)}")
    for ax, (o, s, k) in enumerate(zip(out, in_spatial, kshape)):
        if o < base[ax] or o - base[ax] >= stride:
            raise DimensionError(
                f"{what}: output_shape axis {ax} extent {o} is not reachable from input "
                f"extent {s} (valid range [{base[ax]}, {base[ax] + stride - 1}])")
        if (o + 2 * padding - k) // stride + 1 != s:
            raise DimensionError(
                f"{what}: output_shape axis {ax} extent {o} is inconsistent with input "
                f"extent {s} for stride {stride}")
    return out


def _conv_transpose_nd(x: Tensor, w: Tensor, b, stride: int, padding: int,
                       output_shape, nd: int, what: str) -> Tensor:
    _check_conv_args(x, w, None, nd, what)
    if b is not None and (b.ndim != 1 or b.shape[0] != w.shape[1]):
        raise DimensionError(f"{what}: bias must have shape ({w.shape[1]},), got {b.shape}")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"{what}: axis 1 (channels) extent {x.shape[1]} does not "
                             f"match weight from-channels {w.shape[0]}")
    kshape = w.shape[2:]
    out_spatial = _resolve_transpose_shape(x.shape[2:], kshape, stride, padding,
                                           output_shape, what)
    y = _conv_input_grad(x.data, w.data, stride, padding, out_spatial)
    if b is not None:
        y = y + _bias_view(b.data, nd)
    out = Tensor(y, dtype=y.dtype)

    def bw():
        g = out.grad
        if g is None:
            return
        accumulate(x, _conv_fwd(g, w.data, stride, padding))
        accumulate(w, _conv_weight_grad(x.data, g, stride, padding, kshape))
        if b is not None:
            accumulate(b, np.sum(g, axis=(0,) + tuple(range(2, 2 + nd))))

    inputs = (x, w) if b is None else (x, w, b)
    return record(out, inputs, bw)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
                     padding: int = 0, output_shape=None) -> Tensor:
    """Adjoint of conv2d for the same weight array.

    x [b, cf, H', W'], w [cf, ct, kh, kw] -> [b, ct, H, W]. ``output_shape``
    disambiguates the output extent when stride > 1.
    """
    return _conv_transpose_nd(x, w, b, stride, padding, output_shape, 2, "conv_transpose2d")


def conv_transpose3d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
                     padding: int = 0, output_shape=None) -> Tensor:
    """Adjoint of conv3d for the same weight array."""
    return _conv_transpose_nd(x, w, b, stride, padding, output_shape, 3, "conv_transpose3d")


def grouped_conv(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
                 padding: int = 0, groups: int = 1) -> Tensor:
    """Grouped cross-correlation over 2 or 3 spatial axes.

    x [b, ci, ...], w [co, ci // groups, *k]; groups must divide both channel
    counts. groups == ci == co gives a depthwise conv.
    """
    nd = x.ndim - 2
    if nd not in (2, 3):
        raise DimensionError(f"grouped_conv: input must be rank 4 or 5, got rank {x.ndim}")
    _check_conv_args(x, w, b, nd, "grouped_conv")
    ci = x.shape[1]
    co = w.shape[0]
    if groups < 1 or ci % groups or co % groups:
        raise ConfigError(f"grouped_conv: groups={groups} does not divide channels "
                          f"(in {ci}, out {co})")
    if w.shape[1] != ci // groups:
        raise DimensionError(f"grouped_conv: weight in-channels {w.shape[1]} != "
                             f"{ci} / {groups} groups")
    cig = ci // groups
    cog = co // groups
    kshape = w.shape[2:]
    pieces = []
    for gidx in range(groups):
        xs = x.data[:, gidx * cig:(gidx + 1) * cig]
        ws = w.data[gidx * cog:(gidx + 1) * cog]
        pieces.append(_conv_fwd(xs, ws, stride, padding))
    y = np.concatenate(pieces, axis=1)
    if b is not None:
        y = y + _bias_view(b.data, nd)
    out = Tensor(y, dtype=y.dtype)
    in_spatial = x.shape[2:]

    def bw():
        g = out.grad
        if g is None:
            return
        gx = np.zeros_like(x.data, dtype=np.result_type(g, w.data))
        gw = np.zeros_like(w.data, dtype=np.result_type(g, x.data))
        for gi in range(groups):
            gs = g[:, gi * cog:(gi + 1) * cog]
            xs = x.data[:, gi * cig:(gi + 1) * cig]
            ws = w.data[gi * cog:(gi + 1) * cog]
            gx[:, gi * cig:(gi + 1) * cig] = _conv_input_grad(gs, ws, stride, padding,
                                                              in_spatial)
            gw[gi * cog:(gi + 1) * cog] = _conv_weight_grad(gs, xs, stride, padding, kshape)
        accumulate(x, gx)
        accumulate(w, gw)
        if b is not None:
            accumulate(b, np.sum(g, axis=(0,) + tuple(range(2, 2 + nd))))

    inputs = (x, w) if b is None else (x, w, b)
    return record(out, inputs, bw)
