"""Independent scalar bicubic oracle: cubic convolution with a = -0.5,
evaluated from the piecewise kernel definition W(d) rather than the expanded
tap polynomials the production path uses. Half-pixel-center coordinate
mapping, edge clamp.
"""
import math


def _w(d, a=-0.5):
    d = abs(d)
    if d <= 1.0:
        return (a + 2.0) * d**3 - (a + 3.0) * d**2 + 1.0
    if d < 2.0:
        return a * d**3 - 5.0 * a * d**2 + 8.0 * a * d - 4.0 * a
    return 0.0


def reference_bicubic(src, new_h, new_w):
    """src: 2-D sequence of floats; returns nested lists (new_h x new_w)."""
    h, w = len(src), len(src[0])
    out = [[0.0] * new_w for _ in range(new_h)]
    for oy in range(new_h):
        y = (oy + 0.5) * (h / new_h) - 0.5
        y0 = math.floor(y)
        for ox in range(new_w):
            x = (ox + 0.5) * (w / new_w) - 0.5
            x0 = math.floor(x)
            acc = 0.0
            for ty in range(y0 - 1, y0 + 3):
                cy = min(max(ty, 0), h - 1)
                wy = _w(y - ty)
                for tx in range(x0 - 1, x0 + 3):
                    cx = min(max(tx, 0), w - 1)
                    acc += wy * _w(x - tx) * float(src[cy][cx])
            out[oy][ox] = acc
    return out


def reference_nearest_index(dst, new_size, old_size):
    """Nearest-neighbor source index for cell dst: floor of the half-pixel center."""
    return min(int((dst + 0.5) * old_size / new_size), old_size - 1)
