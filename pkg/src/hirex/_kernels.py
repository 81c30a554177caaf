"""Hot numeric kernels: bicubic resampling, binary morphology, and the Canny
stages (convolution, non-maximum suppression, hysteresis).

Every kernel exists twice: a numba @njit scalar-loop version and a pure-numpy
vectorized version. Set ADP2_NO_NUMBA=1 to force the numpy path (also used
automatically when numba is unavailable). Both paths accumulate floating-point
taps in the same order, so they produce bit-identical results; the equivalence
is pinned by tests and timed by benchmarks/bench_kernels.py.
"""
from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("ADP2_NO_NUMBA", "") not in ("", "0")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only where numba is absent
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


USE_NUMBA = HAS_NUMBA and not _FORCE_NUMPY

# Keys cubic convolution kernel, a = -0.5. Weights for taps at
# [base-1, base, base+1, base+2] as polynomials in the fractional offset t.


def _cubic_weights(t):
    w0 = -0.5 * t * t * t + t * t - 0.5 * t
    w1 = 1.5 * t * t * t - 2.5 * t * t + 1.0
    w2 = -1.5 * t * t * t + 2.0 * t * t + 0.5 * t
    w3 = 0.5 * t * t * t - 0.5 * t * t
    return w0, w1, w2, w3


def _np_bicubic(src: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    h, w = src.shape
    sy = h / new_h
    sx = w / new_w
    ys = (np.arange(new_h) + 0.5) * sy - 0.5
    xs = (np.arange(new_w) + 0.5) * sx - 0.5
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    ty = ys - y0
    tx = xs - x0
    wy = np.stack(_cubic_weights(ty))  # (4, new_h)
    wx = np.stack(_cubic_weights(tx))  # (4, new_w)
    iy = np.clip(y0[None, :].astype(np.int64) + np.arange(-1, 3)[:, None], 0, h - 1)
    ix = np.clip(x0[None, :].astype(np.int64) + np.arange(-1, 3)[:, None], 0, w - 1)
    out = np.zeros((new_h, new_w), dtype=np.float64)
    # tap order (dy, dx) matches the njit kernel so sums round identically
    for dy in range(4):
        row = src[iy[dy]]  # (new_h, w)
        for dx in range(4):
            out += (wy[dy][:, None] * wx[dx][None, :]) * row[:, ix[dx]]
    return out


@njit(cache=True)
def _nb_bicubic(src, new_h, new_w):  # pragma: no cover - measured via dispatch
    h, w = src.shape
    sy = h / new_h
    sx = w / new_w
    out = np.zeros((new_h, new_w), dtype=np.float64)
    for oy in range(new_h):
        y = (oy + 0.5) * sy - 0.5
        y0 = int(np.floor(y))
        ty = y - y0
        wy0 = -0.5 * ty * ty * ty + ty * ty - 0.5 * ty
        wy1 = 1.5 * ty * ty * ty - 2.5 * ty * ty + 1.0
        wy2 = -1.5 * ty * ty * ty + 2.0 * ty * ty + 0.5 * ty
        wy3 = 0.5 * ty * ty * ty - 0.5 * ty * ty
        for ox in range(new_w):
            x = (ox + 0.5) * sx - 0.5
            x0 = int(np.floor(x))
            tx = x - x0
            wx0 = -0.5 * tx * tx * tx + tx * tx - 0.5 * tx
            wx1 = 1.5 * tx * tx * tx - 2.5 * tx * tx + 1.0
            wx2 = -1.5 * tx * tx * tx + 2.0 * tx * tx + 0.5 * tx
            wx3 = 0.5 * tx * tx * tx - 0.5 * tx * tx
            acc = 0.0
            for dy in range(4):
                yy = y0 - 1 + dy
                if yy < 0:
                    yy = 0
                elif yy > h - 1:
                    yy = h - 1
                if dy == 0:
                    wyv = wy0
                elif dy == 1:
                    wyv = wy1
                elif dy == 2:
                    wyv = wy2
                else:
                    wyv = wy3
                for dx in range(4):
                    xx = x0 - 1 + dx
                    if xx < 0:
                        xx = 0
                    elif xx > w - 1:
                        xx = w - 1
                    if dx == 0:
                        wxv = wx0
                    elif dx == 1:
                        wxv = wx1
                    elif dx == 2:
                        wxv = wx2
                    else:
                        wxv = wx3
                    acc += (wyv * wxv) * src[yy, xx]
            out[oy, ox] = acc
    return out


def _np_erode(grid: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return grid.copy()
    h, w = grid.shape
    padded = np.zeros((h + 2 * radius, w + 2 * radius), dtype=grid.dtype)
    padded[radius : radius + h, radius : radius + w] = grid
    out = np.ones((h, w), dtype=grid.dtype)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            np.minimum(out, padded[dy : dy + h, dx : dx + w], out=out)
    return out


@njit(cache=True)
def _nb_erode(grid, radius):  # pragma: no cover
    h, w = grid.shape
    out = np.empty((h, w), dtype=grid.dtype)
    for y in range(h):
        for x in range(w):
            v = grid[y, x]
            for dy in range(-radius, radius + 1):
                if v == 0:
                    break
                yy = y + dy
                for dx in range(-radius, radius + 1):
                    xx = x + dx
                    if yy < 0 or yy >= h or xx < 0 or xx >= w or grid[yy, xx] == 0:
                        v = 0
                        break
            out[y, x] = v
    return out


def _np_dilate(grid: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return grid.copy()
    h, w = grid.shape
    padded = np.zeros((h + 2 * radius, w + 2 * radius), dtype=grid.dtype)
    padded[radius : radius + h, radius : radius + w] = grid
    out = np.zeros((h, w), dtype=grid.dtype)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            np.maximum(out, padded[dy : dy + h, dx : dx + w], out=out)
    return out


@njit(cache=True)
def _nb_dilate(grid, radius):  # pragma: no cover
    h, w = grid.shape
    out = np.empty((h, w), dtype=grid.dtype)
    for y in range(h):
        for x in range(w):
            v = grid[y, x]
            for dy in range(-radius, radius + 1):
                if v != 0:
                    break
                yy = y + dy
                if yy < 0 or yy >= h:
                    continue
                for dx in range(-radius, radius + 1):
                    xx = x + dx
                    if 0 <= xx < w and grid[yy, xx] != 0:
                        v = grid[yy, xx]
                        break
            out[y, x] = v
    return out


def _np_conv2_replicate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    padded = np.pad(img, ((ry, ry), (rx, rx)), mode="edge")
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.float64)
    for ky in range(kh):
        for kx in range(kw):
            out += kernel[ky, kx] * padded[ky : ky + h, kx : kx + w]
    return out


@njit(cache=True)
def _nb_conv2_replicate(img, kernel):  # pragma: no cover
    h, w = img.shape
    kh, kw = kernel.shape
    ry = kh // 2
    rx = kw // 2
    out = np.zeros((h, w), dtype=np.float64)
    for ky in range(kh):
        for kx in range(kw):
            kv = kernel[ky, kx]
            for y in range(h):
                yy = y + ky - ry
                if yy < 0:
                    yy = 0
                elif yy > h - 1:
                    yy = h - 1
                for x in range(w):
                    xx = x + kx - rx
                    if xx < 0:
                        xx = 0
                    elif xx > w - 1:
                        xx = w - 1
                    out[y, x] += kv * img[yy, xx]
    return out


# Non-maximum suppression. Direction bins (y grows downward): 0 = 0deg axis
# (0,1), 1 = 45deg axis (1,1), 2 = 90deg axis (1,0), 3 = 135deg axis (1,-1).
# Out-of-image neighbors count as magnitude 0. A pixel survives when it is
# strictly greater than its forward neighbor and >= its backward neighbor
# along the axis, so an exact two-pixel plateau keeps exactly one pixel and
# edges stay one pixel wide. Callers snap magnitudes to a coarse grid first
# so mathematically tied neighbors compare as exact ties on every path.

_NMS_OFFSETS = np.array([[0, 1], [1, 1], [1, 0], [1, -1]], dtype=np.int64)


def _np_nms(mag: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    h, w = mag.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.float64)
    padded[1 : 1 + h, 1 : 1 + w] = mag
    out = np.zeros_like(mag)
    yy, xx = np.mgrid[1 : h + 1, 1 : w + 1]
    off = _NMS_OFFSETS[dirs]
    fwd = padded[yy + off[..., 0], xx + off[..., 1]]
    bwd = padded[yy - off[..., 0], xx - off[..., 1]]
    keep = (mag > fwd) & (mag >= bwd)
    out[keep] = mag[keep]
    return out


@njit(cache=True)
def _nb_nms(mag, dirs):  # pragma: no cover
    h, w = mag.shape
    out = np.zeros_like(mag)
    for y in range(h):
        for x in range(w):
            d = dirs[y, x]
            if d == 0:
                oy, ox = 0, 1
            elif d == 1:
                oy, ox = 1, 1
            elif d == 2:
                oy, ox = 1, 0
            else:
                oy, ox = 1, -1
            v = mag[y, x]
            fy, fx = y + oy, x + ox
            by, bx = y - oy, x - ox
            fwd = mag[fy, fx] if 0 <= fy < h and 0 <= fx < w else 0.0
            bwd = mag[by, bx] if 0 <= by < h and 0 <= bx < w else 0.0
            if v > fwd and v >= bwd:
                out[y, x] = v
    return out


def _np_hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    # grow the strong set over weak pixels (8-connectivity) to a fixpoint
    reach = strong.astype(np.uint8)
    candidates = weak | strong.astype(bool)
    while True:
        grown = _np_dilate(reach, 1)
        grown = np.where(candidates, grown, 0).astype(np.uint8)
        if np.array_equal(grown, reach):
            return reach
        reach = grown


@njit(cache=True)
def _nb_hysteresis(strong, weak):  # pragma: no cover
    h, w = strong.shape
    out = np.zeros((h, w), dtype=np.uint8)
    stack_y = np.empty(h * w, dtype=np.int64)
    stack_x = np.empty(h * w, dtype=np.int64)
    n = 0
    for y in range(h):
        for x in range(w):
            if strong[y, x]:
                out[y, x] = 1
                stack_y[n] = y
                stack_x[n] = x
                n += 1
    while n > 0:
        n -= 1
        y = stack_y[n]
        x = stack_x[n]
        for dy in range(-1, 2):
            yy = y + dy
            if yy < 0 or yy >= h:
                continue
            for dx in range(-1, 2):
                xx = x + dx
                if xx < 0 or xx >= w:
                    continue
                if weak[yy, xx] and not out[yy, xx]:
                    out[yy, xx] = 1
                    stack_y[n] = yy
                    stack_x[n] = xx
                    n += 1
    return out


if USE_NUMBA:
    bicubic = _nb_bicubic
    erode = _nb_erode
    dilate = _nb_dilate
    conv2_replicate = _nb_conv2_replicate
    nms = _nb_nms

    def hysteresis(strong, weak):
        return _nb_hysteresis(
            np.ascontiguousarray(strong, dtype=np.uint8),
            np.ascontiguousarray(weak, dtype=np.uint8),
        )

else:
    bicubic = _np_bicubic
    erode = _np_erode
    dilate = _np_dilate
    conv2_replicate = _np_conv2_replicate
    nms = _np_nms

    def hysteresis(strong, weak):
        return _np_hysteresis(np.asarray(strong, dtype=np.uint8), np.asarray(weak, dtype=bool))


def warmup():
    """Trigger JIT compilation of every kernel so timed paths run steady-state."""
    img = np.arange(36, dtype=np.float64).reshape(6, 6)
    bicubic(img, 8, 8)
    g = (img > 17).astype(np.uint8)
    dilate(erode(g, 1), 1)
    conv2_replicate(img, np.ones((3, 3)) / 9.0)
    nms(img, np.zeros((6, 6), dtype=np.uint8))
    hysteresis(g, g.astype(bool))
