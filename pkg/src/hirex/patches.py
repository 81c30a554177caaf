"""Shifted-window patch planning, extraction, and overlap-averaged fusion.

Windows enumerate row-major on the stride grid. When (parent - patch) is not
divisible by the stride along a dimension, one extra window flush with the far
edge is appended for that dimension, so every plan covers the parent exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ShapeError


@dataclass(frozen=True)
class PatchWindow:
    top: int
    left: int
    height: int
    width: int

    def slices(self) -> tuple[slice, slice]:
        return slice(self.top, self.top + self.height), slice(self.left, self.left + self.width)


@dataclass(frozen=True)
class PatchPlan:
    parent_h: int
    parent_w: int
    patch_h: int
    patch_w: int
    stride_h: int
    stride_w: int
    windows: tuple[PatchWindow, ...]

    @property
    def count(self) -> int:
        return len(self.windows)


def _axis_offsets(parent: int, patch: int, stride: int) -> list[int]:
    offsets = list(range(0, parent - patch + 1, stride))
    if offsets[-1] != parent - patch:
        offsets.append(parent - patch)
    return offsets


def plan_patches(
    parent_h: int, parent_w: int, patch_h: int, patch_w: int, d_h: int, d_w: int
) -> PatchPlan:
    if patch_h > parent_h or patch_w > parent_w:
        raise GeometryError(
            f"patch {patch_h}x{patch_w} exceeds parent {parent_h}x{parent_w}"
        )
    if min(patch_h, patch_w) < 1 or min(d_h, d_w) < 1:
        raise GeometryError("patch dims and strides must be >= 1")
    if (parent_h > patch_h and d_h > patch_h) or (parent_w > patch_w and d_w > patch_w):
        raise GeometryError("stride larger than the patch would leave coverage gaps")
    tops = _axis_offsets(parent_h, patch_h, d_h)
    lefts = _axis_offsets(parent_w, patch_w, d_w)
    windows = tuple(
        PatchWindow(top=t, left=l, height=patch_h, width=patch_w) for t in tops for l in lefts
    )
    return PatchPlan(parent_h, parent_w, patch_h, patch_w, d_h, d_w, windows)


def extract_patch(z: np.ndarray, w: PatchWindow) -> np.ndarray:
    if w.top < 0 or w.left < 0 or w.top + w.height > z.shape[0] or w.left + w.width > z.shape[1]:
        raise GeometryError(f"window {w} outside tensor {z.shape[0]}x{z.shape[1]}")
    ys, xs = w.slices()
    return z[ys, xs].copy()


def fuse_patches(patches: list[np.ndarray], plan: PatchPlan) -> np.ndarray:
    """Overlap-averaged fusion; overlapped cells take the arithmetic mean.

    Accumulates in float64 so the result is independent of patch order at
    the documented tolerance.
    """
    if len(patches) != plan.count:
        raise ShapeError(f"expected {plan.count} patches, got {len(patches)}")
    channels = patches[0].shape[2]
    acc = np.zeros((plan.parent_h, plan.parent_w, channels), dtype=np.float64)
    cover = np.zeros((plan.parent_h, plan.parent_w, 1), dtype=np.float64)
    for patch, w in zip(patches, plan.windows):
        if patch.shape != (plan.patch_h, plan.patch_w, channels):
            raise ShapeError(
                f"patch shape {patch.shape} != plan patch {(plan.patch_h, plan.patch_w, channels)}"
            )
        ys, xs = w.slices()
        acc[ys, xs] += patch
        cover[ys, xs] += 1.0
    if np.any(cover == 0):
        raise GeometryError("plan does not cover the parent tensor")
    return (acc / cover).astype(np.float32)


def coverage_counts(plan: PatchPlan) -> np.ndarray:
    counts = np.zeros((plan.parent_h, plan.parent_w), dtype=np.int64)
    for w in plan.windows:
        ys, xs = w.slices()
        counts[ys, xs] += 1
    return counts


def scale_plan(plan: PatchPlan, factor: int) -> PatchPlan:
    """Same plan on a grid scaled by an integer factor (latent -> pixel space)."""
    if factor < 1:
        raise GeometryError("scale factor must be >= 1")
    return PatchPlan(
        parent_h=plan.parent_h * factor,
        parent_w=plan.parent_w * factor,
        patch_h=plan.patch_h * factor,
        patch_w=plan.patch_w * factor,
        stride_h=plan.stride_h * factor,
        stride_w=plan.stride_w * factor,
        windows=tuple(
            PatchWindow(w.top * factor, w.left * factor, w.height * factor, w.width * factor)
            for w in plan.windows
        ),
    )


def shrink_plan(plan: PatchPlan, divisor: int) -> PatchPlan:
    """Same plan on a grid divided by an integer factor (latent -> attention grid)."""
    fields = [plan.parent_h, plan.parent_w, plan.patch_h, plan.patch_w, plan.stride_h, plan.stride_w]
    coords = [c for w in plan.windows for c in (w.top, w.left)]
    if any(v % divisor for v in fields + coords):
        raise GeometryError(f"plan geometry not divisible by {divisor}")
    return PatchPlan(
        parent_h=plan.parent_h // divisor,
        parent_w=plan.parent_w // divisor,
        patch_h=plan.patch_h // divisor,
        patch_w=plan.patch_w // divisor,
        stride_h=plan.stride_h // divisor,
        stride_w=plan.stride_w // divisor,
        windows=tuple(
            PatchWindow(w.top // divisor, w.left // divisor, w.height // divisor, w.width // divisor)
            for w in plan.windows
        ),
    )


def format_plan(plan: PatchPlan) -> str:
    """Diagnostic dump: one line per window, "index top left h w"."""
    lines = [
        f"{i} {w.top} {w.left} {w.height} {w.width}" for i, w in enumerate(plan.windows)
    ]
    return "\n".join(lines) + "\n"
