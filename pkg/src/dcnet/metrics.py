"""Reference and reference-free pan-sharpening quality metrics.

Full-reference: SAM (degrees), ERGAS, UIQI (Wang-Bovik index averaged over
non-overlapping blocks), Q2^n (the UIQI generalization where each pixel's band
vector is one hypercomplex number), and SCC (Pearson correlation of Laplacian
high-pass responses). Reference-free: D_lambda, D_s, and QNR.

All statistics are computed in float64 with sample (ddof=1) variance.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .engine.errors import DimensionError, MetricError


# ---------------------------------------------------------------------------
# hypercomplex numbers (Cayley-Dickson construction)

class Hypercomplex:
    """A 2^n-dimensional hypercomplex number as a coefficient vector.

    Multiplication follows the Cayley-Dickson doubling rule
    (a, b)(c, d) = (ac - d*b, da + bc*), which reproduces the complex numbers,
    quaternions, and octonions for n = 1, 2, 3. The modulus is multiplicative
    up to octonions (composition algebras).
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        arr = np.asarray(coeffs, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1 or arr.size & (arr.size - 1):
            raise DimensionError(
                f"hypercomplex coefficient count must be a power of two, got {arr.shape}")
        self.coeffs = arr

    def __mul__(self, other: "Hypercomplex") -> "Hypercomplex":
        if self.coeffs.size != other.coeffs.size:
            raise DimensionError("hypercomplex operands must have equal dimension")
        return Hypercomplex(_cd_mult(self.coeffs, other.coeffs))

    def __add__(self, other: "Hypercomplex") -> "Hypercomplex":
        return Hypercomplex(self.coeffs + other.coeffs)

    def conj(self) -> "Hypercomplex":
        return Hypercomplex(_cd_conj(self.coeffs))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs ** 2)))

    def __repr__(self):
        return f"Hypercomplex({self.coeffs.tolist()})"


def _cd_conj(a: np.ndarray) -> np.ndarray:
    """Conjugate: negate every coefficient except the real part (last axis)."""
    out = -a.copy()
    out[..., 0] = a[..., 0]
    return out


def _cd_mult(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cayley-Dickson product on the last axis; broadcasts leading axes."""
    n = a.shape[-1]
    if n == 1:
        return a * b
    half = n // 2
    a1, a2 = a[..., :half], a[..., half:]
    b1, b2 = b[..., :half], b[..., half:]
    left = _cd_mult(a1, b1) - _cd_mult(_cd_conj(b2), a2)
    right = _cd_mult(b2, a1) + _cd_mult(a2, _cd_conj(b1))
    return np.concatenate([left, right], axis=-1)


# ---------------------------------------------------------------------------
# helpers

def _as_cube(arr, name) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"{name} must be [B, H, W], got shape {arr.shape}")
    return arr


def _check_pair(fused, ref):
    fused = _as_cube(fused, "fused")
    ref = _as_cube(ref, "reference")
    if fused.shape != ref.shape:
        raise DimensionError(f"fused shape {fused.shape} != reference shape {ref.shape}")
    return fused, ref


def _blocks(img: np.ndarray, window: int):
    """Full non-overlapping window x window blocks of [..., H, W], flattened."""
    h, w = img.shape[-2:]
    ny, nx = h // window, w // window
    if ny < 1 or nx < 1:
        raise MetricError(f"window {window} exceeds image extent {(h, w)}")
    trimmed = img[..., :ny * window, :nx * window]
    parts = trimmed.reshape(img.shape[:-2] + (ny, window, nx, window))
    parts = np.moveaxis(parts, -2, -3)  # [..., ny, nx, window, window]
    return parts.reshape(img.shape[:-2] + (ny * nx, window * window))


# ---------------------------------------------------------------------------
# full-reference metrics

def sam(fused, ref) -> float:
    """Mean spectral angle in degrees; pixels with a zero vector on either
    side are skipped."""
    fused, ref = _check_pair(fused, ref)
    if fused.shape[0] < 2:
        raise MetricError("sam needs at least two bands")
    f = fused.reshape(fused.shape[0], -1)
    r = ref.reshape(ref.shape[0], -1)
    nf = np.sqrt(np.sum(f * f, axis=0))
    nr = np.sqrt(np.sum(r * r, axis=0))
    keep = (nf > 0) & (nr > 0)
    if not np.any(keep):
        raise MetricError("sam undefined: every pixel has a zero spectral vector")
    # angle via the chord of the unit vectors, 2 asin(|u - v| / 2): equivalent
    # to acos(u . v) but exact for identical pixels and stable at small angles
    u = f[:, keep] / nf[keep]
    v = r[:, keep] / nr[keep]
    chord = np.sqrt(np.sum((u - v) ** 2, axis=0))
    angles = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    return float(np.degrees(np.mean(angles)))


def ergas(fused, ref, ratio: int = 4) -> float:
    """100/ratio * sqrt(mean over bands of (RMSE_b / mean_b)^2)."""
    fused, ref = _check_pair(fused, ref)
    terms = []
    for b in range(ref.shape[0]):
        mu = float(np.mean(ref[b]))
        if mu == 0.0:
            raise MetricError(f"ergas undefined: reference band {b} has zero mean")
        rmse = math.sqrt(float(np.mean((fused[b] - ref[b]) ** 2)))
        terms.append((rmse / mu) ** 2)
    return 100.0 / ratio * math.sqrt(sum(terms) / len(terms))


def _q_index_blocks(a_blocks: np.ndarray, b_blocks: np.ndarray) -> float:
    """Wang-Bovik Q over prepared [n_blocks, n_px] samples; returns the mean."""
    n = a_blocks.shape[-1]
    if n < 2:
        raise MetricError("uiqi window must contain at least two samples")
    mu_a = np.mean(a_blocks, axis=-1)
    mu_b = np.mean(b_blocks, axis=-1)
    var_a = np.var(a_blocks, axis=-1, ddof=1)
    var_b = np.var(b_blocks, axis=-1, ddof=1)
    cov = np.sum((a_blocks - mu_a[..., None]) * (b_blocks - mu_b[..., None]),
                 axis=-1) / (n - 1)
    values = []
    for ma, mb, va, vb, c in zip(mu_a.ravel(), mu_b.ravel(), var_a.ravel(),
                                 var_b.ravel(), cov.ravel()):
        denom_v = va + vb
        denom_m = ma * ma + mb * mb
        if denom_v == 0.0 and denom_m == 0.0:
            continue  # both windows constant zero: no information
        if denom_v == 0.0:
            values.append((2.0 * ma * mb) / denom_m)
        elif denom_m == 0.0:
            values.append((2.0 * c) / denom_v)
        else:
            values.append((4.0 * c * ma * mb) / (denom_v * denom_m))
    if not values:
        raise MetricError("uiqi undefined: every window was degenerate")
    return float(np.mean(values))


def uiqi(fused, ref, window: int = 32) -> float:
    """Universal image quality index, averaged over bands and blocks."""
    fused, ref = _check_pair(fused, ref)
    scores = [_q_index_blocks(_blocks(fused[b], window), _blocks(ref[b], window))
              for b in range(ref.shape[0])]
    return float(np.mean(scores))


def _q_index_single(a: np.ndarray, b: np.ndarray) -> float:
    """Q for one pair of single-band windows (used by D_lambda / D_s)."""
    return _q_index_blocks(a.reshape(1, -1), b.reshape(1, -1))


def q2n(fused, ref, window: int = 32) -> float:
    """Hypercomplex Q (Q4 for 4 bands, Q8 for 8): one number per pixel.

    Per block: 4 |sigma_12| |mu_1| |mu_2| / ((s1^2 + s2^2)(|mu_1|^2 + |mu_2|^2))
    with the cross moment sigma_12 = E[z1 conj(z2)] - mu_1 conj(mu_2).
    """
    fused, ref = _check_pair(fused, ref)
    bands = ref.shape[0]
    dim = 1
    while dim < bands:
        dim *= 2
    if dim != bands:
        pad = np.zeros((dim - bands,) + ref.shape[1:])
        fused = np.concatenate([fused, pad], axis=0)
        ref = np.concatenate([ref, pad], axis=0)
    fb = np.moveaxis(_blocks(fused, window), 0, -1)  # [n_blocks, n_px, dim]
    rb = np.moveaxis(_blocks(ref, window), 0, -1)
    n = fb.shape[1]
    if n < 2:
        raise MetricError("q2n window must contain at least two samples")
    mu_f = np.mean(fb, axis=1)
    mu_r = np.mean(rb, axis=1)
    # var of a hypercomplex sample: E|z|^2 - |mu|^2 (a real scalar)
    var_f = np.mean(np.sum(fb * fb, axis=-1), axis=-1) - np.sum(mu_f * mu_f, axis=-1)
    var_r = np.mean(np.sum(rb * rb, axis=-1), axis=-1) - np.sum(mu_r * mu_r, axis=-1)
    # sample (ddof=1) correction
    var_f = var_f * n / (n - 1)
    var_r = var_r * n / (n - 1)
    cross = np.mean(_cd_mult(fb, _cd_conj(rb)), axis=1) \
        - _cd_mult(mu_f, _cd_conj(mu_r))
    cross = cross * n / (n - 1)
    values = []
    for i in range(fb.shape[0]):
        s12 = float(np.sqrt(np.sum(cross[i] ** 2)))
        m1 = float(np.sqrt(np.sum(mu_f[i] ** 2)))
        m2 = float(np.sqrt(np.sum(mu_r[i] ** 2)))
        denom_v = float(var_f[i] + var_r[i])
        denom_m = m1 * m1 + m2 * m2
        if denom_v == 0.0 and denom_m == 0.0:
            continue
        if denom_v == 0.0:
            values.append(2.0 * float(np.sum(mu_f[i] * mu_r[i])) / denom_m)
        elif denom_m == 0.0:
            values.append(2.0 * s12 / denom_v)
        else:
            values.append(4.0 * s12 * m1 * m2 / (denom_v * denom_m))
    if not values:
        raise MetricError("q2n undefined: every window was degenerate")
    return float(np.mean(values))


_LAPLACIAN = np.array([[-1.0, -1.0, -1.0],
                       [-1.0, 8.0, -1.0],
                       [-1.0, -1.0, -1.0]])


def _highpass(band: np.ndarray) -> np.ndarray:
    """3x3 Laplacian response on the valid interior (no padding)."""
    h, w = band.shape
    if h < 3 or w < 3:
        raise MetricError(f"scc needs at least 3x3 images, got {(h, w)}")
    out = np.zeros((h - 2, w - 2))
    for dy in range(3):
        for dx in range(3):
            out += _LAPLACIAN[dy, dx] * band[dy:dy + h - 2, dx:dx + w - 2]
    return out


def scc(fused, ref) -> float:
    """Mean Pearson correlation of Laplacian high-pass responses per band."""
    fused, ref = _check_pair(fused, ref)
    cors = []
    for b in range(ref.shape[0]):
        hf = _highpass(fused[b]).ravel()
        hr = _highpass(ref[b]).ravel()
        hf = hf - hf.mean()
        hr = hr - hr.mean()
        denom = np.sqrt(np.sum(hf * hf)) * np.sqrt(np.sum(hr * hr))
        if denom == 0.0:
            raise MetricError(f"scc undefined: band {b} has no high-frequency energy")
        cors.append(float(np.sum(hf * hr) / denom))
    return float(np.mean(cors))


# ---------------------------------------------------------------------------
# reference-free metrics

def d_lambda(fused, ms, window: int = 32, p: float = 1.0) -> float:
    """Spectral distortion: shift of inter-band Q between fused and ms scales."""
    fused = _as_cube(fused, "fused")
    ms = _as_cube(ms, "ms")
    if fused.shape[0] != ms.shape[0]:
        raise DimensionError(f"band mismatch: fused {fused.shape[0]} vs ms {ms.shape[0]}")
    bands = fused.shape[0]
    if bands < 2:
        raise MetricError("d_lambda needs at least two bands")
    fb = [_blocks(fused[b], window) for b in range(bands)]
    mb = [_blocks(ms[b], window) for b in range(bands)]
    total = 0.0
    count = 0
    for i in range(bands):
        for j in range(bands):
            if i == j:
                continue
            qf = _q_index_blocks(fb[i], fb[j])
            qm = _q_index_blocks(mb[i], mb[j])
            total += abs(qf - qm) ** p
            count += 1
    return float((total / count) ** (1.0 / p))


def d_s(fused, ms, pan, window: int = 32, q: float = 1.0) -> float:
    """Spatial distortion: per-band Q against pan at both scales.

    The pan image is degraded to the ms grid with the same bicubic kernel used
    by the reduced-resolution protocol.
    """
    from .data import bicubic_resample
    fused = _as_cube(fused, "fused")
    ms = _as_cube(ms, "ms")
    pan = np.asarray(pan, dtype=np.float64)
    if pan.ndim != 2:
        raise DimensionError(f"pan must be [H, W], got shape {pan.shape}")
    if fused.shape[1:] != pan.shape:
        raise DimensionError(f"fused spatial {fused.shape[1:]} != pan {pan.shape}")
    if pan.shape[0] % ms.shape[1] or pan.shape[1] % ms.shape[2]:
        raise DimensionError(f"pan {pan.shape} is not an integer multiple of the "
                             f"ms grid {ms.shape[1:]}")
    ratio = pan.shape[0] // ms.shape[1]
    pan_low = bicubic_resample(pan, 1.0 / ratio).astype(np.float64)
    bands = fused.shape[0]
    total = 0.0
    for b in range(bands):
        qf = _q_index_blocks(_blocks(fused[b], window), _blocks(pan, window))
        qm = _q_index_blocks(_blocks(ms[b], window), _blocks(pan_low, window))
        total += abs(qf - qm) ** q
    return float((total / bands) ** (1.0 / q))


def qnr(fused, ms, pan, window: int = 32, alpha: float = 1.0,
        beta: float = 1.0) -> float:
    """(1 - D_lambda)^alpha * (1 - D_s)^beta."""
    dl = d_lambda(fused, ms, window=window)
    ds = d_s(fused, ms, pan, window=window)
    return float((1.0 - dl) ** alpha * (1.0 - ds) ** beta)


def qnr_parts(fused, ms, pan, window: int = 32, alpha: float = 1.0,
              beta: float = 1.0):
    dl = d_lambda(fused, ms, window=window)
    ds = d_s(fused, ms, pan, window=window)
    return dl, ds, float((1.0 - dl) ** alpha * (1.0 - ds) ** beta)


# ---------------------------------------------------------------------------
# reporting

@dataclass
class MetricReport:
    """One row of metric values; None marks a metric that was not computed."""

    scene: str = ""
    q2n: float | None = None
    uiqi: float | None = None
    sam_deg: float | None = None
    ergas: float | None = None
    scc: float | None = None
    d_lambda: float | None = None
    d_s: float | None = None
    qnr: float | None = None

    COLUMNS = ("scene", "q2n", "uiqi", "sam_deg", "ergas", "scc",
               "d_lambda", "d_s", "qnr")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def values_finite(self) -> bool:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                return False
        return True


def full_reference_report(fused, ref, ratio: int = 4, window: int = 32,
                          scene: str = "") -> MetricReport:
    return MetricReport(
        scene=scene,
        q2n=q2n(fused, ref, window=window),
        uiqi=uiqi(fused, ref, window=window),
        sam_deg=sam(fused, ref),
        ergas=ergas(fused, ref, ratio=ratio),
        scc=scc(fused, ref),
    )


def reference_free_report(fused, ms, pan, window: int = 32,
                          scene: str = "") -> MetricReport:
    dl, ds, q = qnr_parts(fused, ms, pan, window=window)
    return MetricReport(scene=scene, d_lambda=dl, d_s=ds, qnr=q)


def write_report_json(path, reports: list):
    rows = [r.to_dict() for r in reports]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(path, reports: list):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MetricReport.COLUMNS)
        for r in reports:
            row = []
            for col in MetricReport.COLUMNS:
                v = getattr(r, col)
                if v is None:
                    row.append("")
                elif isinstance(v, float):
                    row.append(repr(v))
                else:
                    row.append(v)
            writer.writerow(row)
