"""Patch-content-aware prompts from cross-attention maps.

The chain: per-word columns of the attention map are binarized against their
column mean (strict >), reshaped to the attention grid, cleaned by a
morphological opening, upscaled nearest-neighbor to the high-resolution grid,
and cropped per patch window. A word joins a patch's prompt when its mask
density inside the window strictly exceeds the threshold c.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import GeometryError, ShapeError, ValidationError
from .latent import pack_ltns, unpack_ltns
from .patches import PatchPlan, extract_patch


@dataclass(frozen=True)
class CrossAttentionMap:
    """N x M nonnegative scores; N = map_h * map_w latent cells, M word tokens.

    `scale` is the downsample factor relating the map grid to the latent grid
    (map_h = latent_h / scale).
    """

    values: np.ndarray
    map_h: int
    map_w: int
    scale: int = 1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValidationError("attention map must be a nonempty N x M matrix")
        if v.shape[0] != self.map_h * self.map_w:
            raise ShapeError(
                f"N={v.shape[0]} != map_h*map_w = {self.map_h}*{self.map_w}"
            )
        if np.any(v < 0) or not np.isfinite(v).all():
            raise ValidationError("attention scores must be finite and >= 0")
        object.__setattr__(self, "values", v)

    @property
    def tokens(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WordMask:
    grid: np.ndarray  # (h, w) uint8 in {0, 1}
    word_index: int

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.uint8)
        if g.ndim != 2:
            raise ShapeError("mask grid must be 2-D")
        if np.any(g > 1):
            raise ValidationError("mask values must be 0 or 1")
        object.__setattr__(self, "grid", g)

    @property
    def density(self) -> float:
        return float(self.grid.sum()) / self.grid.size


@dataclass(frozen=True)
class PatchPromptSet:
    """Per-patch word-index subsets (raw strict-threshold result of the density
    rule; may be empty). prompt_for() applies the full-prompt fallback."""

    word_indices: tuple[tuple[int, ...], ...]
    prompt_tokens: tuple[int, ...]
    threshold: float
    fallbacks: tuple[int, ...] = field(default=())

    def prompt_for(self, i: int) -> tuple[int, ...]:
        subset = self.word_indices[i]
        return subset if subset else self.prompt_tokens

    def format_dump(self) -> str:
        """Diagnostic dump: "patch_index: word_index..." per line."""
        lines = []
        for i, words in enumerate(self.word_indices):
            lines.append(f"{i}: {' '.join(str(w) for w in words)}".rstrip())
        return "\n".join(lines) + "\n"


def binarize_attention(att: CrossAttentionMap) -> list[WordMask]:
    """Per word j: mask cell = 1 iff score strictly exceeds the column mean.

    A constant column has no strictly-above-mean cells, so it maps to the
    all-zero mask without relying on the float rounding of its mean.
    """
    means = att.values.mean(axis=0)
    masks = []
    for j in range(att.tokens):
        col = att.values[:, j]
        if col.max() == col.min():
            grid = np.zeros((att.map_h, att.map_w), dtype=np.uint8)
        else:
            grid = (col > means[j]).astype(np.uint8).reshape(att.map_h, att.map_w)
        masks.append(WordMask(grid=grid, word_index=j))
    return masks


def open_mask(m: WordMask, radius: int = 1) -> WordMask:
    """Morphological opening (erosion then dilation) with a (2r+1)^2 square element."""
    if radius < 0:
        raise ValidationError("radius must be >= 0")
    if radius == 0:
        return m
    opened = _kernels.dilate(_kernels.erode(m.grid, radius), radius)
    return WordMask(grid=opened, word_index=m.word_index)


def upscale_mask(m: WordMask, new_h: int, new_w: int) -> WordMask:
    """Nearest-neighbor upscale; output stays binary."""
    h, w = m.grid.shape
    if new_h < h or new_w < w:
        raise GeometryError(f"cannot downscale mask {h}x{w} -> {new_h}x{new_w}")
    rows = ((np.arange(new_h) + 0.5) * (h / new_h)).astype(np.int64)
    cols = ((np.arange(new_w) + 0.5) * (w / new_w)).astype(np.int64)
    return WordMask(grid=m.grid[rows][:, cols], word_index=m.word_index)


def derive_patch_prompts(
    masks: list[WordMask],
    plan: PatchPlan,
    c: float,
    prompt_tokens: list[int] | tuple[int, ...],
) -> PatchPromptSet:
    """Word j joins patch i iff its mask density inside window i is strictly > c.

    `plan` must be expressed on the mask grid and its windows sized to the
    attention-map footprint of one patch.
    """
    if not 0.0 < c < 1.0:
        raise ValidationError("c must be in (0, 1)")
    for m in masks:
        if m.grid.shape != (plan.parent_h, plan.parent_w):
            raise GeometryError(
                f"mask grid {m.grid.shape} != plan parent {(plan.parent_h, plan.parent_w)}"
            )
    area = plan.patch_h * plan.patch_w
    per_patch: list[tuple[int, ...]] = []
    fallbacks: list[int] = []
    for i, w in enumerate(plan.windows):
        words = []
        for m in masks:
            crop = extract_patch(m.grid[:, :, None], w)
            if float(crop.sum()) / area > c:
                words.append(m.word_index)
        if not words:
            fallbacks.append(i)
        per_patch.append(tuple(words))
    return PatchPromptSet(
        word_indices=tuple(per_patch),
        prompt_tokens=tuple(prompt_tokens),
        threshold=c,
        fallbacks=tuple(fallbacks),
    )


def mean_combine_attention(maps: list[CrossAttentionMap]) -> CrossAttentionMap:
    """Average several maps into one, nearest-resampled to the coarsest grid."""
    if not maps:
        raise ValidationError("no attention maps to combine")
    tokens = maps[0].tokens
    if any(m.tokens != tokens for m in maps):
        raise ShapeError("attention maps disagree on token count")
    target = min(maps, key=lambda m: m.map_h * m.map_w)
    th, tw = target.map_h, target.map_w
    acc = np.zeros((th * tw, tokens), dtype=np.float64)
    for m in maps:
        if (m.map_h, m.map_w) == (th, tw):
            acc += m.values
            continue
        rows = ((np.arange(th) + 0.5) * (m.map_h / th)).astype(np.int64)
        cols = ((np.arange(tw) + 0.5) * (m.map_w / tw)).astype(np.int64)
        grid = m.values.reshape(m.map_h, m.map_w, tokens)
        acc += grid[rows][:, cols].reshape(th * tw, tokens)
    return CrossAttentionMap(values=acc / len(maps), map_h=th, map_w=tw, scale=target.scale)


def attention_to_ltns(att: CrossAttentionMap) -> bytes:
    """Attention maps ride in the LTNS container: (map_h, map_w, M) with words as channels."""
    grid = att.values.reshape(att.map_h, att.map_w, att.tokens).astype(np.float32)
    return pack_ltns(grid)


def attention_from_ltns(buf: bytes, scale: int = 1, offset: int = 0) -> tuple[CrossAttentionMap, int]:
    grid, end = unpack_ltns(buf, offset)
    h, w, m = grid.shape
    att = CrossAttentionMap(
        values=grid.reshape(h * w, m).astype(np.float64), map_h=h, map_w=w, scale=scale
    )
    return att, end
