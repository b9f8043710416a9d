"""Naive loop convolutions kept as a permanent oracle for the fast paths.

Everything here is written as the definition reads: explicit Python loops over
batch, channels, output positions, and kernel offsets, accumulating in float64.
Deliberately slow; only tests import this module.
"""

from __future__ import annotations

import numpy as np


def naive_conv(x: np.ndarray, w: np.ndarray, b=None, stride: int = 1,
               padding: int = 0) -> np.ndarray:
    """Cross-correlation over 2 or 3 spatial axes by direct summation."""
    nd = x.ndim - 2
    kshape = w.shape[2:]
    batch, ci = x.shape[:2]
    co = w.shape[0]
    out_spatial = tuple((s + 2 * padding - k) // stride + 1
                        for s, k in zip(x.shape[2:], kshape))
    out = np.zeros((batch, co) + out_spatial, dtype=np.float64)
    for n in range(batch):
        for o in range(co):
            for pos in np.ndindex(*out_spatial):
                acc = 0.0
                for c in range(ci):
                    for koff in np.ndindex(*kshape):
                        idx = tuple(pos[d] * stride + koff[d] - padding for d in range(nd))
                        if any(i < 0 or i >= x.shape[2 + d] for d, i in enumerate(idx)):
                            continue
                        acc += float(x[(n, c) + idx]) * float(w[(o, c) + koff])
                if b is not None:
                    acc += float(b[o])
                out[(n, o) + pos] = acc
    return out


def naive_conv_transpose(x: np.ndarray, w: np.ndarray, b=None, stride: int = 1,
                         padding: int = 0, output_shape=None) -> np.ndarray:
    """Transposed conv by scattering every input element through the kernel."""
    nd = x.ndim - 2
    kshape = w.shape[2:]
    batch, cf = x.shape[:2]
    ct = w.shape[1]
    if output_shape is None:
        output_shape = tuple((s - 1) * stride + k - 2 * padding
                             for s, k in zip(x.shape[2:], kshape))
    out = np.zeros((batch, ct) + tuple(output_shape), dtype=np.float64)
    for n in range(batch):
        for f in range(cf):
            for pos in np.ndindex(*x.shape[2:]):
                v = float(x[(n, f) + pos])
                for t in range(ct):
                    for koff in np.ndindex(*kshape):
                        idx = tuple(pos[d] * stride + koff[d] - padding for d in range(nd))
                        if any(i < 0 or i >= out.shape[2 + d] for d, i in enumerate(idx)):
                            continue
                        out[(n, t) + idx] += v * float(w[(f, t) + koff])
    if b is not None:
        out += np.asarray(b, dtype=np.float64).reshape((1, -1) + (1,) * nd)
    return out


def naive_grouped_conv(x: np.ndarray, w: np.ndarray, b=None, stride: int = 1,
                       padding: int = 0, groups: int = 1) -> np.ndarray:
    """Grouped conv as independent naive convs over channel slices."""
    ci = x.shape[1]
    co = w.shape[0]
    cig = ci // groups
    cog = co // groups
    pieces = []
    for g in range(groups):
        xs = x[:, g * cig:(g + 1) * cig]
        ws = w[g * cog:(g + 1) * cog]
        pieces.append(naive_conv(xs, ws, None, stride, padding))
    out = np.concatenate(pieces, axis=1)
    if b is not None:
        out += np.asarray(b, dtype=np.float64).reshape((1, -1) + (1,) * (x.ndim - 2))
    return out


def naive_bicubic_weight(t: float, a: float = -0.5) -> float:
    """Catmull-Rom style cubic kernel value at offset magnitude |t|."""
    t = abs(float(t))
    if t <= 1.0:
        return (a + 2.0) * t ** 3 - (a + 3.0) * t ** 2 + 1.0
    if t < 2.0:
        return a * t ** 3 - 5.0 * a * t ** 2 + 8.0 * a * t - 4.0 * a
    return 0.0


def naive_bicubic_1d(row: np.ndarray, out_n: int, scale: float) -> np.ndarray:
    """Per-sample loop resample of one axis with clamp-to-edge taps."""
    n = row.shape[0]
    out = np.zeros(out_n, dtype=np.float64)
    for o in range(out_n):
        src = (o + 0.5) / scale - 0.5
        i0 = int(np.floor(src))
        t = src - i0
        acc = 0.0
        for k in range(-1, 3):
            idx = min(max(i0 + k, 0), n - 1)
            acc += float(row[idx]) * naive_bicubic_weight(t - k)
        out[o] = acc
    return out
