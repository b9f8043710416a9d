"""Binary containers: the PTEN tensor format and 16-bit PGM/PPM previews.

PTEN layout (all integers little-endian):
    magic "PTEN" | version u16 | dtype u8 (0 = float32) | ndim u8 |
    ndim extents as u64 | row-major float32 payload.
An archive is a count u32 followed by (name_len u16, UTF-8 name, tensor record)
entries; entry order is preserved on read.

PGM (P5) and PPM (P6) are written with binary rasters; samples are one byte up
to maxval 255 and big-endian two-byte words above that, per the netpbm formats.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .engine.errors import FormatError

PTEN_MAGIC = b"PTEN"
PTEN_VERSION = 1
DTYPE_F32 = 0

_MAX_EXTENT = 2 ** 32  # sanity bound against corrupted headers


def _atomic_write(path, payload: bytes):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim:  # ascontiguousarray would silently promote 0-d to 1-d
        arr = np.ascontiguousarray(arr)
    if arr.size == 0:
        raise FormatError(f"refusing to store a zero-size tensor of shape {arr.shape}")
    head = PTEN_MAGIC + struct.pack("<HBB", PTEN_VERSION, DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return head + dims + arr.tobytes(order="C")


class _Reader:
    def __init__(self, buf: bytes, name: str):
        self.buf = buf
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.name}: truncated payload "
                              f"(needed {n} bytes at offset {self.pos})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def done(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{self.name}: {len(self.buf) - self.pos} trailing bytes")


def _decode_tensor(r: _Reader) -> np.ndarray:
    if r.take(4) != PTEN_MAGIC:
        raise FormatError(f"{r.name}: bad magic, not a PTEN tensor")
    version, dtype_code, ndim = struct.unpack("<HBB", r.take(4))
    if version != PTEN_VERSION:
        raise FormatError(f"{r.name}: unsupported version {version}")
    if dtype_code != DTYPE_F32:
        raise FormatError(f"{r.name}: unknown dtype code {dtype_code}")
    dims = struct.unpack(f"<{ndim}Q", r.take(8 * ndim)) if ndim else ()
    count = 1
    for d in dims:
        if d < 1 or d > _MAX_EXTENT:
            raise FormatError(f"{r.name}: dimension extent {d} out of range")
        count *= d
        if count > _MAX_EXTENT:
            raise FormatError(f"{r.name}: dimension overflow, {dims} is implausibly large")
    raw = r.take(4 * count)
    return np.frombuffer(raw, dtype="<f4").reshape(dims).copy()


def write_tensor(path, arr: np.ndarray):
    """Store one array as float32 PTEN (atomic whole-file replace)."""
    _atomic_write(path, _encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), os.fspath(path))
    arr = _decode_tensor(r)
    r.done()
    return arr


def write_tensor_archive(path, tensors: dict):
    """Store named arrays, preserving insertion order."""
    if len(tensors) > 0xFFFFFFFF:
        raise FormatError("archive entry count exceeds u32")
    parts = [struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        blob = name.encode("utf-8")
        if len(blob) > 0xFFFF:
            raise FormatError(f"archive entry name too long: {name!r}")
        parts.append(struct.pack("<H", len(blob)))
        parts.append(blob)
        parts.append(_encode_tensor(arr))
    _atomic_write(path, b"".join(parts))


def read_tensor_archive(path) -> dict:
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), os.fspath(path))
    (count,) = struct.unpack("<I", r.take(4))
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", r.take(2))
        name = r.take(nlen).decode("utf-8")
        if name in out:
            raise FormatError(f"{r.name}: duplicate archive entry {name!r}")
        out[name] = _decode_tensor(r)
    r.done()
    return out


def _check_raster(arr: np.ndarray, maxval: int, what: str) -> np.ndarray:
    if maxval < 1 or maxval > 65535:
        raise FormatError(f"{what}: maxval {maxval} outside [1, 65535]")
    arr = np.asarray(arr)
    if not np.issubdtype(arr.dtype, np.integer):
        raise FormatError(f"{what}: raster samples must be integers, got {arr.dtype}")
    if arr.min() < 0 or arr.max() > maxval:
        raise FormatError(f"{what}: sample values outside [0, {maxval}]")
    return arr


def _raster_bytes(arr: np.ndarray, maxval: int) -> bytes:
    if maxval > 255:
        return arr.astype(">u2").tobytes(order="C")
    return arr.astype(np.uint8).tobytes(order="C")


def write_pgm(path, arr: np.ndarray, maxval: int = 65535):
    """Single-band [H, W] greyscale, P5."""
    arr = _check_raster(arr, maxval, "pgm")
    if arr.ndim != 2:
        raise FormatError(f"pgm: expected [H, W], got shape {arr.shape}")
    h, w = arr.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    _atomic_write(path, header + _raster_bytes(arr, maxval))


def write_ppm(path, arr: np.ndarray, maxval: int = 65535):
    """Three-band [3, H, W] colour, P6 (samples interleaved per pixel)."""
    arr = _check_raster(arr, maxval, "ppm")
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise FormatError(f"ppm: expected [3, H, W], got shape {arr.shape}")
    h, w = arr.shape[1:]
    header = f"P6\n{w} {h}\n{maxval}\n".encode("ascii")
    interleaved = np.moveaxis(arr, 0, -1)
    _atomic_write(path, header + _raster_bytes(interleaved, maxval))


def _read_pnm_header(buf: bytes, path: str):
    # magic, then whitespace/comment-separated width, height, maxval
    if buf[:2] not in (b"P5", b"P6"):
        raise FormatError(f"{path}: bad magic, not a binary PGM/PPM")
    magic = buf[:2].decode("ascii")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        token = buf[start:pos]
        if not token.isdigit():
            raise FormatError(f"{path}: malformed header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if w < 1 or h < 1 or w > _MAX_EXTENT or h > _MAX_EXTENT:
        raise FormatError(f"{path}: dimension overflow {w}x{h}")
    if maxval < 1 or maxval > 65535:
        raise FormatError(f"{path}: maxval {maxval} outside [1, 65535]")
    return magic, w, h, maxval, pos


def _read_pnm(path, want_magic: str):
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, w, h, maxval, pos = _read_pnm_header(buf, os.fspath(path))
    if magic != want_magic:
        raise FormatError(f"{path}: expected {want_magic}, found {magic}")
    channels = 3 if want_magic == "P6" else 1
    dtype = ">u2" if maxval > 255 else np.uint8
    itemsize = 2 if maxval > 255 else 1
    need = w * h * channels * itemsize
    raw = buf[pos:pos + need]
    if len(raw) != need:
        raise FormatError(f"{path}: truncated raster, expected {need} bytes, "
                          f"got {len(raw)}")
    data = np.frombuffer(raw, dtype=dtype).astype(np.uint16 if itemsize == 2 else np.uint8)
    if channels == 1:
        return data.reshape(h, w), maxval
    return np.moveaxis(data.reshape(h, w, 3), -1, 0), maxval


def read_pgm(path):
    """Returns ([H, W] array, maxval)."""
    return _read_pnm(path, "P5")


def read_ppm(path):
    """Returns ([3, H, W] array, maxval)."""
    return _read_pnm(path, "P6")
