"""8-bit image buffers and dependency-free PGM/PPM (binary P5/P6) I/O.

Images are uint8 ndarrays shaped (H, W, C) with C in {1, 3}.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import GeometryError, ShapeError, ValidationError


def as_image(data) -> np.ndarray:
    img = np.asarray(data, dtype=np.uint8)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ShapeError(f"image must be (H, W, 1|3), got {img.shape}")
    return img


def grayscale(img: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma as float64 (H, W)."""
    img = as_image(img)
    if img.shape[2] == 1:
        return img[:, :, 0].astype(np.float64)
    r, g, b = (img[:, :, i].astype(np.float64) for i in range(3))
    return 0.299 * r + 0.587 * g + 0.114 * b


def upscale_image(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bicubic upscale, clamped to [0, 255]; identity copy at equal size."""
    img = as_image(img)
    h, w, c = img.shape
    if new_h < h or new_w < w:
        raise GeometryError(f"cannot downscale image {h}x{w} -> {new_h}x{new_w}")
    if (new_h, new_w) == (h, w):
        return img.copy()
    out = np.empty((new_h, new_w, c), dtype=np.uint8)
    for ch in range(c):
        resized = _kernels.bicubic(img[:, :, ch].astype(np.float64), new_h, new_w)
        out[:, :, ch] = np.clip(np.rint(resized), 0, 255).astype(np.uint8)
    return out


def write_pnm(path, img: np.ndarray) -> None:
    img = as_image(img)
    h, w, c = img.shape
    magic = b"P5" if c == 1 else b"P6"
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes(order="C"))


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] not in (b"P5", b"P6"):
        raise ValidationError(f"unsupported PNM magic in {path}")
    channels = 1 if data[:2] == b"P5" else 3
    # header: magic, width, height, maxval as whitespace/comment-separated tokens
    tokens: list[int] = []
    i = 2
    while len(tokens) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        tokens.append(int(data[start:i]))
    i += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if maxval != 255:
        raise ValidationError("only maxval 255 PNM supported")
    n = h * w * channels
    body = np.frombuffer(data, dtype=np.uint8, count=n, offset=i)
    return body.reshape(h, w, channels).copy()


def mask_to_image(grid: np.ndarray) -> np.ndarray:
    """Binary {0,1} grid to a {0,255} single-channel image for PGM dumps."""
    return (np.asarray(grid, dtype=np.uint8) * 255)[:, :, None]
