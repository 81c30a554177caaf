"""Structural conditions: Canny edge maps of the upscaled low-resolution image,
cropped per patch window.

The detector is the classic four-stage pipeline: Gaussian smoothing, Sobel
gradients, non-maximum suppression along the quantized gradient axis (4 bins),
and double-threshold hysteresis with 8-connectivity from strong pixels.
Thresholds apply to the raw Sobel magnitude of 0..255 input. Magnitudes are
snapped to a 2^-20 grid before suppression so that mathematically symmetric
inputs produce exact ties on every kernel path; suppression keeps the pixel
that is strictly above its forward neighbor and at least its backward one,
leaving one-pixel-wide edges even across tied plateaus.
"""
from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .errors import GeometryError, ValidationError
from .images import as_image, grayscale
from .patches import PatchPlan, PatchWindow


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Square truncated-at-3-sigma kernel, normalized to sum 1."""
    radius = max(1, int(math.ceil(3.0 * sigma)))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g1 = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    kernel = g1[:, None] * g1[None, :]
    return kernel / kernel.sum()


SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])

MAG_SNAP = float(2**20)


def snap_magnitude(mag: np.ndarray) -> np.ndarray:
    return np.rint(mag * MAG_SNAP) / MAG_SNAP


def quantize_directions(gy: np.ndarray, gx: np.ndarray) -> np.ndarray:
    """Fold gradient angles into 4 axis bins: 0, 45, 90, 135 degrees."""
    deg = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.zeros(deg.shape, dtype=np.uint8)
    bins[(deg >= 22.5) & (deg < 67.5)] = 1
    bins[(deg >= 67.5) & (deg < 112.5)] = 2
    bins[(deg >= 112.5) & (deg < 157.5)] = 3
    return bins


def canny_edges(img: np.ndarray, low: float, high: float, sigma: float = 1.0) -> np.ndarray:
    """Edge map as uint8 (H, W, 1) with values in {0, 255}."""
    if not 0 <= low <= high <= 255:
        raise ValidationError(f"need 0 <= low <= high <= 255, got {low}, {high}")
    gray = grayscale(img)
    if sigma > 0:
        gray = _kernels.conv2_replicate(gray, gaussian_kernel(sigma))
    gx = _kernels.conv2_replicate(gray, SOBEL_X)
    gy = _kernels.conv2_replicate(gray, SOBEL_Y)
    mag = snap_magnitude(np.hypot(gx, gy))
    thinned = _kernels.nms(mag, quantize_directions(gy, gx))
    strong = (thinned > high).astype(np.uint8)
    weak = thinned > low
    edges = _kernels.hysteresis(strong, weak)
    return (edges.astype(np.uint8) * 255)[:, :, None]


def sample_condition_patches(edges: np.ndarray, plan: PatchPlan) -> list[np.ndarray]:
    """Per-window crops of the edge map, aligned index-for-index with the
    latent plan (the plan must already be scaled to pixel space)."""
    edges = as_image(edges)
    if edges.shape[:2] != (plan.parent_h, plan.parent_w):
        raise GeometryError(
            f"edge map {edges.shape[:2]} does not match pixel plan "
            f"{(plan.parent_h, plan.parent_w)}"
        )
    crops = []
    for w in plan.windows:
        ys, xs = w.slices()
        crops.append(edges[ys, xs].copy())
    return crops


def window_in_pixels(w: PatchWindow, factor: int) -> PatchWindow:
    return PatchWindow(w.top * factor, w.left * factor, w.height * factor, w.width * factor)
