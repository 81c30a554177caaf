"""Global-semantics branch: dilated sampling, window interaction, and blending.

A high-resolution latent (h', w') with strides (h_s, w_s) = (h'/h, w'/w)
partitions into P2 = h_s * w_s strided sub-grids, each (h, w). Sample k for
offsets (i, j) is Z[i::h_s, j::w_s, :] with k = i * w_s + j (0-based here; the
index law is 1-based in prose). Window interaction permutes, independently at
every low-grid position, which sample holds each value; the inverse permutation
restores positions after denoising.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import GeometryError, ShapeError, ValidationError


@dataclass(frozen=True)
class DilationPlan:
    low_h: int
    low_w: int
    high_h: int
    high_w: int

    def __post_init__(self):
        if self.high_h % self.low_h or self.high_w % self.low_w:
            raise GeometryError(
                f"high dims {self.high_h}x{self.high_w} not divisible by low {self.low_h}x{self.low_w}"
            )

    @property
    def stride_h(self) -> int:
        return self.high_h // self.low_h

    @property
    def stride_w(self) -> int:
        return self.high_w // self.low_w

    @property
    def samples(self) -> int:
        return self.stride_h * self.stride_w


def dilate_extract(z: np.ndarray, plan: DilationPlan) -> list[np.ndarray]:
    if z.shape[:2] != (plan.high_h, plan.high_w):
        raise ShapeError(f"latent {z.shape[:2]} != plan high dims {(plan.high_h, plan.high_w)}")
    hs, ws = plan.stride_h, plan.stride_w
    return [z[i::hs, j::ws, :].copy() for i in range(hs) for j in range(ws)]


def dilate_recombine(samples: list[np.ndarray], plan: DilationPlan) -> np.ndarray:
    if len(samples) != plan.samples:
        raise ShapeError(f"expected {plan.samples} samples, got {len(samples)}")
    hs, ws = plan.stride_h, plan.stride_w
    channels = samples[0].shape[2]
    out = np.empty((plan.high_h, plan.high_w, channels), dtype=samples[0].dtype)
    for k, s in enumerate(samples):
        if s.shape != (plan.low_h, plan.low_w, channels):
            raise ShapeError(f"sample {k} shape {s.shape} != {(plan.low_h, plan.low_w, channels)}")
        i, j = divmod(k, ws)
        out[i::hs, j::ws, :] = s
    return out


class WindowBijection:
    """Seeded per-(position, timestep) permutations of the P2 samples.

    Tables are drawn lazily per timestep from an independent generator keyed by
    (seed, t), so any subset of timesteps reproduces identically. identity=True
    degrades every permutation to the identity (plain dilated sampling).
    """

    def __init__(self, low_h: int, low_w: int, samples: int, seed: int, identity: bool = False):
        if samples < 1:
            raise ValidationError("need at least one sample")
        self.low_h = low_h
        self.low_w = low_w
        self.samples = samples
        self.seed = seed
        self.identity = identity
        self._table = lru_cache(maxsize=64)(self._build)

    def _build(self, t: int) -> np.ndarray:
        if self.identity:
            perm = np.broadcast_to(
                np.arange(self.samples), (self.low_h, self.low_w, self.samples)
            )
            return perm.copy()
        rng = np.random.default_rng([self.seed, t])
        keys = rng.random((self.low_h, self.low_w, self.samples))
        return np.argsort(keys, axis=-1)

    def table(self, t: int) -> np.ndarray:
        return self._table(int(t))

    def inverse_table(self, t: int) -> np.ndarray:
        return np.argsort(self.table(t), axis=-1)

    def format_dump(self, t: int) -> str:
        """Diagnostic dump: per position, the permutation as an index list."""
        table = self.table(t)
        lines = []
        for r in range(self.low_h):
            for c in range(self.low_w):
                lines.append(" ".join(str(int(v)) for v in table[r, c]))
        return "\n".join(lines) + "\n"


def shuffle_windows(
    samples: list[np.ndarray], bij: WindowBijection, t: int, inverse: bool = False
) -> list[np.ndarray]:
    """Permute, per position, which sample holds each value.

    Output sample k holds at (r, c) the value of input sample f[r,c][k]
    (forward) or f[r,c]^-1[k] (inverse). Values never change, only ownership.
    """
    if len(samples) != bij.samples:
        raise ShapeError(f"expected {bij.samples} samples, got {len(samples)}")
    shape = samples[0].shape
    if shape[:2] != (bij.low_h, bij.low_w):
        raise GeometryError(f"sample grid {shape[:2]} != bijection grid {(bij.low_h, bij.low_w)}")
    table = bij.inverse_table(t) if inverse else bij.table(t)
    stack = np.stack(samples)  # (P2, h, w, c)
    perm = np.transpose(table, (2, 0, 1))[..., None]  # (P2, h, w, 1)
    shuffled = np.take_along_axis(stack, perm, axis=0)
    return [shuffled[k] for k in range(bij.samples)]


def eta_schedule(t: int, T: int) -> float:
    """Cosine blend weight: 1 at t = T decaying to 0 at t = 0."""
    if not 0 <= t <= T:
        raise ValidationError(f"t must be in 0..{T}")
    return float((1.0 + np.cos(np.pi * (T - t) / T)) / 2.0)


def blend_global(z_patch: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
    """Convex combination (1 - eta) * z_patch + eta * g."""
    if z_patch.shape != g.shape:
        raise ShapeError(f"blend shapes differ: {z_patch.shape} vs {g.shape}")
    if not 0.0 <= eta <= 1.0:
        raise ValidationError("eta must be in [0, 1]")
    return (1.0 - eta) * z_patch + eta * g
