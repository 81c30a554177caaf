"""Independent scalar-loop Canny used as the oracle for the production
detector. Deliberately written from the textbook pipeline with no code shared
with hirex._kernels: plain Python loops, queue-based hysteresis.

Semantics (must match the documented production contract):
- grayscale: 0.299 R + 0.587 G + 0.114 B
- Gaussian blur: square kernel, radius ceil(3*sigma), normalized, replicate border
- Sobel 3x3 (+/-1, +/-2), replicate border
- direction bins on atan2(gy, gx) degrees mod 180:
  [22.5, 67.5) -> axis (1,1); [67.5, 112.5) -> (1,0); [112.5, 157.5) -> (1,-1);
  otherwise (0,1)
- magnitudes snapped to a 2^-20 grid; NMS keeps a pixel when its magnitude is
  strictly greater than its forward neighbor and >= its backward neighbor
  (out-of-image neighbors count as 0)
- strong: magnitude > high; candidate: magnitude > low; hysteresis grows the
  strong set over candidates with 8-connectivity
"""
import math
from collections import deque

import numpy as np


def _to_gray(img):
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 3:
        h, w = img.shape[:2]
        gray = [[0.0] * w for _ in range(h)]
        for y in range(h):
            for x in range(w):
                r, g, b = (float(img[y, x, i]) for i in range(3))
                gray[y][x] = 0.299 * r + 0.587 * g + 0.114 * b
        return gray
    if img.ndim == 3:
        img = img[:, :, 0]
    return [[float(v) for v in row] for row in img]


def _convolve(grid, kernel):
    h, w = len(grid), len(grid[0])
    kh, kw = len(kernel), len(kernel[0])
    ry, rx = kh // 2, kw // 2
    out = [[0.0] * w for _ in range(h)]
    for ky in range(kh):
        for kx in range(kw):
            kv = kernel[ky][kx]
            for y in range(h):
                sy = min(max(y + ky - ry, 0), h - 1)
                for x in range(w):
                    sx = min(max(x + kx - rx, 0), w - 1)
                    out[y][x] += kv * grid[sy][sx]
    return out


def _gaussian(sigma):
    radius = max(1, math.ceil(3.0 * sigma))
    row = [math.exp(-(i * i) / (2.0 * sigma * sigma)) for i in range(-radius, radius + 1)]
    kernel = [[a * b for b in row] for a in row]
    total = sum(sum(r) for r in kernel)
    return [[v / total for v in r] for r in kernel]


_SOBEL_X = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
_SOBEL_Y = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]


def _axis(gy, gx):
    deg = math.degrees(math.atan2(gy, gx)) % 180.0
    if 22.5 <= deg < 67.5:
        return (1, 1)
    if 67.5 <= deg < 112.5:
        return (1, 0)
    if 112.5 <= deg < 157.5:
        return (1, -1)
    return (0, 1)


def reference_canny(img, low, high, sigma=1.0):
    """Returns a uint8 (H, W) array with edges = 255."""
    gray = _to_gray(img)
    if sigma > 0:
        gray = _convolve(gray, _gaussian(sigma))
    gx = _convolve(gray, _SOBEL_X)
    gy = _convolve(gray, _SOBEL_Y)
    h, w = len(gray), len(gray[0])
    snap = float(2**20)
    mag = [
        [float(np.rint(math.hypot(gx[y][x], gy[y][x]) * snap)) / snap for x in range(w)]
        for y in range(h)
    ]

    thin = [[0.0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            dy, dx = _axis(gy[y][x], gx[y][x])
            fwd = mag[y + dy][x + dx] if 0 <= y + dy < h and 0 <= x + dx < w else 0.0
            bwd = mag[y - dy][x - dx] if 0 <= y - dy < h and 0 <= x - dx < w else 0.0
            if mag[y][x] > fwd and mag[y][x] >= bwd:
                thin[y][x] = mag[y][x]

    out = np.zeros((h, w), dtype=np.uint8)
    queue = deque()
    for y in range(h):
        for x in range(w):
            if thin[y][x] > high:
                out[y, x] = 255
                queue.append((y, x))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and out[ny, nx] == 0 and thin[ny][nx] > low:
                    out[ny, nx] = 255
                    queue.append((ny, nx))
    return out
