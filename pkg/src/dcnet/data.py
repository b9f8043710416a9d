"""Scene simulation and the reduced-resolution degradation protocol.

Real sensor pairs have no reference at the panchromatic scale, so training
data is produced by degrading originals: both inputs are downsampled by the
resolution ratio and the original multispectral cube becomes ground truth.
Resampling is separable bicubic with the Catmull-Rom kernel (a = -0.5) and
clamp-to-edge borders.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .engine.errors import DimensionError

RATIO = 4
DN_RANGE = (0.0, 2047.0)  # 11-bit digital numbers

_BICUBIC_A = -0.5


@dataclass
class SceneTriple:
    """One scene: pan [H, W], ms [B, H/ratio, W/ratio], optional truth [B, H, W]."""

    pan: np.ndarray
    ms: np.ndarray
    truth: np.ndarray | None = None
    ratio: int = RATIO
    value_range: tuple = DN_RANGE

    def __post_init__(self):
        self.pan = np.asarray(self.pan)
        self.ms = np.asarray(self.ms)
        if self.pan.ndim != 2:
            raise DimensionError(f"pan must be [H, W], got shape {self.pan.shape}")
        if self.ms.ndim != 3:
            raise DimensionError(f"ms must be [B, h, w], got shape {self.ms.shape}")
        h, w = self.pan.shape
        bh, bw = self.ms.shape[1:]
        if h != self.ratio * bh or w != self.ratio * bw:
            raise DimensionError(
                f"pan {self.pan.shape} must be exactly {self.ratio}x the ms grid "
                f"{self.ms.shape[1:]} on both axes")
        if self.truth is not None:
            self.truth = np.asarray(self.truth)
            if self.truth.shape != (self.ms.shape[0], h, w):
                raise DimensionError(
                    f"truth shape {self.truth.shape} must be "
                    f"[{self.ms.shape[0]}, {h}, {w}]")
        lo, hi = self.value_range
        if not hi > lo:
            raise DimensionError(f"value_range {self.value_range} is empty")

    @property
    def bands(self) -> int:
        return self.ms.shape[0]


@dataclass
class PatchSet:
    """Patches cut from one scene, with their top-left origins in pan pixels."""

    patches: list = field(default_factory=list)
    origins: list = field(default_factory=list)
    split: str = ""
    patch_size: int = 0

    def __len__(self):
        return len(self.patches)


def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom tap weights for fractional offsets t in [0, 1); shape [4, n]."""
    a = _BICUBIC_A

    def k(x):
        x = np.abs(x)
        near = (a + 2.0) * x ** 3 - (a + 3.0) * x ** 2 + 1.0
        far = a * x ** 3 - 5.0 * a * x ** 2 + 8.0 * a * x - 4.0 * a
        return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))

    return np.stack([k(t + 1.0), k(t), k(1.0 - t), k(2.0 - t)])


def _resample_axis(arr: np.ndarray, axis: int, out_n: int, scale: float) -> np.ndarray:
    n = arr.shape[axis]
    if out_n == n and scale == 1.0:
        return arr
    src = (np.arange(out_n, dtype=np.float64) + 0.5) / scale - 0.5
    i0 = np.floor(src).astype(np.int64)
    t = src - i0
    weights = _cubic_weights(t)  # [4, out_n]
    out = None
    for tap in range(4):
        idx = np.clip(i0 + tap - 1, 0, n - 1)
        gathered = np.take(arr, idx, axis=axis)
        shape = [1] * arr.ndim
        shape[axis] = out_n
        term = gathered * weights[tap].reshape(shape)
        out = term if out is None else out + term
    return out


def bicubic_resample(img: np.ndarray, scale) -> np.ndarray:
    """Resample the last two axes of [H, W] or [B, H, W] by a rational factor.

    Output extent per axis is round(extent * scale); scale 1 is an exact
    identity. Sample positions map through x_src = (x_out + 0.5) / scale - 0.5.
    """
    img = np.asarray(img)
    if img.ndim not in (2, 3):
        raise DimensionError(f"expected [H, W] or [B, H, W], got shape {img.shape}")
    scale = float(Fraction(scale)) if not isinstance(scale, float) else scale
    if not scale > 0:
        raise DimensionError(f"scale must be positive, got {scale}")
    out_dtype = img.dtype if img.dtype == np.float64 else np.float32
    work = img.astype(np.float64)
    for axis in (img.ndim - 2, img.ndim - 1):
        out_n = int(round(img.shape[axis] * scale))
        if out_n < 1:
            raise DimensionError(
                f"scale {scale} gives non-positive target size on axis {axis} "
                f"(extent {img.shape[axis]})")
        work = _resample_axis(work, axis, out_n, scale)
    return work.astype(out_dtype)


def degrade_wald(truth: np.ndarray, pan_full: np.ndarray,
                 value_range: tuple = DN_RANGE, ratio: int = RATIO) -> SceneTriple:
    """Reduced-resolution protocol: shift both acquisitions down one ratio step.

    ``truth`` [B, H, W] plays the original multispectral cube and is kept as
    the reference; ``pan_full`` [ratio*H, ratio*W] plays the original pan.
    The training pair is pan_full and truth each downsampled by 1/ratio.
    """
    truth = np.asarray(truth)
    pan_full = np.asarray(pan_full)
    if truth.ndim != 3:
        raise DimensionError(f"truth must be [B, H, W], got shape {truth.shape}")
    if pan_full.ndim != 2:
        raise DimensionError(f"pan_full must be [H, W], got shape {pan_full.shape}")
    b, h, w = truth.shape
    if pan_full.shape != (ratio * h, ratio * w):
        raise DimensionError(
            f"pan_full shape {pan_full.shape} must be {ratio}x the truth grid "
            f"({ratio * h}, {ratio * w})")
    if h % ratio or w % ratio:
        raise DimensionError(
            f"truth spatial extents {(h, w)} must be divisible by ratio {ratio}")
    pan = bicubic_resample(pan_full, Fraction(1, ratio))
    ms = bicubic_resample(truth, Fraction(1, ratio))
    lo, hi = value_range
    pan = np.clip(pan, lo, hi)
    ms = np.clip(ms, lo, hi)
    return SceneTriple(pan=pan, ms=ms, truth=truth.astype(pan.dtype),
                       ratio=ratio, value_range=value_range)


def _render_scene(rng: np.random.Generator, bands: int, h: int, w: int):
    """Band cube [bands, h, w] plus a pan surface at 4x, both from one layout.

    The layout is a set of Gaussian blobs, rectangles, an illumination ramp,
    and a fine plaid texture, all defined in unit coordinates so the two
    grids sample the same continuous scene. The pan surface is the spectral
    average of the band mixture sampled on the fine grid, so every detail in
    the pan genuinely exists in the scene; the texture frequencies sit above
    the reduced band grid's reach but below the full grid's, mimicking the
    detail gap between the two sensors.
    """
    hp, wp = RATIO * h, RATIO * w
    lo, hi = DN_RANGE
    span = hi - lo

    def grids(ny, nx):
        v = (np.arange(ny, dtype=np.float64) + 0.5) / ny
        u = (np.arange(nx, dtype=np.float64) + 0.5) / nx
        return np.meshgrid(v, u, indexing="ij")

    yy, xx = grids(h, w)
    yyp, xxp = grids(hp, wp)

    # smooth per-band spectral profiles so neighbouring bands correlate
    phase = rng.uniform(0.0, 2.0 * np.pi, size=4)
    bidx = np.linspace(0.0, 1.0, bands)
    profiles = (0.55
                + 0.25 * np.sin(2.0 * np.pi * bidx[:, None] + phase[None, :])
                + 0.10 * np.cos(4.0 * np.pi * bidx[:, None] + phase[None, :]))

    fbase = float(min(h, w))

    def paint(vv, uu):
        layers = np.zeros((4,) + vv.shape)
        # illumination ramp
        gdir = rng.uniform(0.0, 2.0 * np.pi)
        layers[0] = 0.5 + 0.35 * ((uu - 0.5) * np.cos(gdir) + (vv - 0.5) * np.sin(gdir))
        # Gaussian blobs
        blob = np.zeros_like(vv)
        for _ in range(6):
            cy, cx = rng.uniform(0.1, 0.9, size=2)
            r = rng.uniform(0.05, 0.25)
            amp = rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0])
            blob += amp * np.exp(-(((vv - cy) ** 2 + (uu - cx) ** 2) / (2.0 * r * r)))
        layers[1] = blob
        # rectangles with crisp edges
        rect = np.zeros_like(vv)
        for _ in range(4):
            y0, x0 = rng.uniform(0.0, 0.7, size=2)
            dy, dx = rng.uniform(0.1, 0.3, size=2)
            amp = rng.uniform(0.2, 0.7) * rng.choice([-1.0, 1.0])
            rect += amp * ((vv >= y0) & (vv < y0 + dy) & (uu >= x0) & (uu < x0 + dx))
        layers[2] = rect
        # plaid texture between the reduced grid's Nyquist and the band grid's
        tex = np.zeros_like(vv)
        for _ in range(2):
            fy, fx = rng.uniform(fbase / 6.0, fbase / 3.0, size=2)
            py, px = rng.uniform(0.0, 2.0 * np.pi, size=2)
            tex += 0.5 * np.sin(2.0 * np.pi * fx * uu + px) \
                       * np.sin(2.0 * np.pi * fy * vv + py)
        layers[3] = tex
        return layers

    # draw the random layout once, on the coarse grid parameters, then
    # replay the identical draws for the fine grid
    state = rng.bit_generator.state
    coarse = paint(yy, xx)
    rng.bit_generator.state = state
    fine = paint(yyp, xxp)

    mix = rng.uniform(0.5, 1.0, size=(bands, 4)) * profiles
    cube = np.tensordot(mix, coarse, axes=([1], [0]))
    pan_weights = np.full(bands, 1.0 / bands)
    pan = np.tensordot(pan_weights @ mix, fine, axes=([0], [0]))

    def to_dn(a):
        a = 0.2 + 0.6 * (a - a.min()) / max(a.max() - a.min(), 1e-9)
        return np.clip(lo + span * a, lo, hi)

    return to_dn(cube), to_dn(pan)


def synth_scene(seed: int, bands: int = 4, height: int = 64, width: int = 64):
    """Deterministic synthetic scene.

    Returns (truth [bands, height, width], pan_full [4*height, 4*width]) in
    DN units; distinct seeds give pixelwise different scenes.
    """
    if bands < 1 or height < 1 or width < 1:
        raise DimensionError(f"bands/height/width must be >= 1, got "
                             f"({bands}, {height}, {width})")
    rng = np.random.default_rng(seed)
    cube, pan = _render_scene(rng, bands, height, width)
    return cube.astype(np.float32), pan.astype(np.float32)


def normalize(arr: np.ndarray, value_range: tuple = DN_RANGE) -> np.ndarray:
    """Affine map of value_range onto [0, 1]."""
    lo, hi = value_range
    if not hi > lo:
        raise DimensionError(f"value_range {value_range} is empty")
    return ((np.asarray(arr) - lo) / (hi - lo)).astype(np.float32)


def denormalize(arr: np.ndarray, value_range: tuple = DN_RANGE) -> np.ndarray:
    """Inverse of normalize."""
    lo, hi = value_range
    if not hi > lo:
        raise DimensionError(f"value_range {value_range} is empty")
    return np.asarray(arr, dtype=np.float64) * (hi - lo) + lo


def _split_counts(n: int, fractions) -> list:
    """Largest-remainder allocation of n items to the given fractions."""
    total = float(sum(fractions))
    if total <= 0:
        raise DimensionError(f"split fractions {fractions} must sum to > 0")
    shares = [f / total * n for f in fractions]
    counts = [int(np.floor(s)) for s in shares]
    leftovers = sorted(range(len(shares)), key=lambda i: shares[i] - counts[i],
                       reverse=True)
    for i in range(n - sum(counts)):
        counts[leftovers[i % len(leftovers)]] += 1
    return counts


def patchify(scene: SceneTriple, size: int, stride: int, split_fractions,
             seed: int) -> dict:
    """Cut aligned patches and split them into train/val/test sets.

    ``size`` and ``stride`` are in pan pixels and must be multiples of the
    ratio so the ms grid stays aligned. Patches never cross image bounds.
    The shuffle is seeded; the three splits are disjoint and their sizes
    follow ``split_fractions`` by largest-remainder rounding.
    """
    if size % scene.ratio or stride % scene.ratio:
        raise DimensionError(
            f"patch size {size} and stride {stride} must be multiples of the "
            f"ratio {scene.ratio}")
    if stride < 1 or size < scene.ratio:
        raise DimensionError(f"degenerate patch geometry size={size} stride={stride}")
    if len(tuple(split_fractions)) != 3:
        raise DimensionError("split_fractions must have exactly three entries")
    h, w = scene.pan.shape
    if size > h or size > w:
        raise DimensionError(f"patch size {size} exceeds scene extent {(h, w)}")
    r = scene.ratio
    entries = []
    for y in range(0, h - size + 1, stride):
        for x in range(0, w - size + 1, stride):
            pan = scene.pan[y:y + size, x:x + size]
            ms = scene.ms[:, y // r:(y + size) // r, x // r:(x + size) // r]
            truth = None
            if scene.truth is not None:
                truth = scene.truth[:, y:y + size, x:x + size]
            entries.append((SceneTriple(pan=pan, ms=ms, truth=truth, ratio=r,
                                        value_range=scene.value_range), (y, x)))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(entries))
    counts = _split_counts(len(entries), tuple(split_fractions))
    out = {}
    start = 0
    for name, count in zip(("train", "val", "test"), counts):
        chunk = [entries[i] for i in order[start:start + count]]
        start += count
        out[name] = PatchSet(patches=[e[0] for e in chunk],
                             origins=[e[1] for e in chunk],
                             split=name, patch_size=size)
    return out
