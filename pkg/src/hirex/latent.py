"""Latent tensors and their binary container.

A latent is a float32 ndarray of shape (h, w, c), row-major with channels
innermost, all values finite. The on-disk/on-wire container ("LTNS") is:
magic b"LTNS", three u32 little-endian dims (h, w, c), then h*w*c f32
little-endian values in array order.
"""
from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from . import _kernels
from .errors import GeometryError, ShapeError, ValidationError

LTNS_MAGIC = b"LTNS"


def as_latent(data, h: int | None = None, w: int | None = None, c: int | None = None) -> np.ndarray:
    """Validate and return a float32 (h, w, c) latent."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"latent must be (h, w, c), got shape {arr.shape}")
    if h is not None and arr.shape != (h, w, c):
        raise ShapeError(f"latent shape {arr.shape} != expected {(h, w, c)}")
    if not np.isfinite(arr).all():
        raise ValidationError("latent contains non-finite values")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "tensors") -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what} shapes differ: {a.shape} vs {b.shape}")


def pack_ltns(z: np.ndarray) -> bytes:
    z = as_latent(z)
    h, w, c = z.shape
    header = LTNS_MAGIC + struct.pack("<III", h, w, c)
    return header + z.astype("<f4").tobytes(order="C")


def unpack_ltns(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one LTNS record starting at offset; returns (latent, next_offset)."""
    if buf[offset : offset + 4] != LTNS_MAGIC:
        raise ValidationError("bad LTNS magic")
    h, w, c = struct.unpack_from("<III", buf, offset + 4)
    n = h * w * c
    end = offset + 16 + 4 * n
    if len(buf) < end:
        raise ValidationError("truncated LTNS record")
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=offset + 16)
    return as_latent(data.reshape(h, w, c)), end


def write_ltns(path, z: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(pack_ltns(z))


def read_ltns(path) -> np.ndarray:
    with open(path, "rb") as f:
        z, _ = unpack_ltns(f.read())
    return z


def read_ltns_stream(f: BinaryIO) -> np.ndarray:
    head = f.read(16)
    if len(head) != 16 or head[:4] != LTNS_MAGIC:
        raise ValidationError("bad LTNS header")
    h, w, c = struct.unpack("<III", head[4:])
    body = f.read(4 * h * w * c)
    return unpack_ltns(head + body)[0]


def interpolate_latent(z: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bicubic per-channel upscale to (new_h, new_w). Identity copy at equal size."""
    z = as_latent(z)
    h, w, c = z.shape
    if new_h < h or new_w < w:
        raise GeometryError(f"cannot downscale latent {h}x{w} -> {new_h}x{new_w}")
    if (new_h, new_w) == (h, w):
        return z.copy()
    out = np.empty((new_h, new_w, c), dtype=np.float32)
    for ch in range(c):
        out[:, :, ch] = _kernels.bicubic(z[:, :, ch].astype(np.float64), new_h, new_w)
    return out
