"""Noise schedule, forward diffusion, and the deterministic denoising step.

Conventions: alpha_bar[t] is the cumulative product of (1 - beta_i) over the
training grid, alpha_bar[0] = 1. forward_diffuse mixes clean latent and noise
as sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps. The reverse update is
the standard deterministic (eta = 0) form

    z_prev = sqrt(ab_prev / ab_t) * z_t
             + (sqrt(1 - ab_prev) - sqrt(ab_prev / ab_t) * sqrt(1 - ab_t)) * eps

which inverts forward_diffuse exactly when eps is the true noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .latent import check_same_shape


@dataclass(frozen=True)
class NoiseSchedule:
    steps: int
    alpha_bar: np.ndarray  # length steps+1, alpha_bar[0] == 1, strictly decreasing

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.steps + 1,):
            raise ValidationError("alpha_bar must have length steps+1")
        if ab[0] != 1.0:
            raise ValidationError("alpha_bar[0] must be 1")
        if np.any(ab <= 0) or np.any(ab > 1):
            raise ValidationError("alpha_bar entries must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0):
            raise ValidationError("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "alpha_bar", ab)

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.steps:
            raise ValidationError(f"timestep {t} outside schedule range 1..{self.steps}")


def make_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta schedule: beta interpolated from beta_start to beta_end over T steps."""
    if T < 1:
        raise ValidationError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValidationError("need 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.empty(T + 1, dtype=np.float64)
    alpha_bar[0] = 1.0
    alpha_bar[1:] = np.cumprod(1.0 - betas)
    return NoiseSchedule(steps=T, alpha_bar=alpha_bar)


def forward_diffuse(z0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Forward diffusion to step t: sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps."""
    check_same_shape(z0, eps, "z0/eps")
    sched._check_step(t)
    ab = sched.alpha_bar[t]
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps


def ddim_step(
    z_t: np.ndarray, eps_pred: np.ndarray, t: int, t_prev: int, sched: NoiseSchedule
) -> np.ndarray:
    """One deterministic denoising update from step t to t_prev < t."""
    check_same_shape(z_t, eps_pred, "z_t/eps_pred")
    if not 0 <= t_prev < t <= sched.steps:
        raise ValidationError(f"need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}")
    ab_t = sched.alpha_bar[t]
    ab_prev = sched.alpha_bar[t_prev]
    scale = math.sqrt(ab_prev / ab_t)
    eps_coef = math.sqrt(1.0 - ab_prev) - scale * math.sqrt(1.0 - ab_t)
    return scale * z_t + eps_coef * eps_pred


def inference_timesteps(sched: NoiseSchedule, n_steps: int) -> list[int]:
    """Descending timesteps [T, ..., 0] subsampling the training grid into n_steps updates."""
    if not 1 <= n_steps <= sched.steps:
        raise ValidationError(f"n_steps must be in 1..{sched.steps}")
    ts = np.linspace(sched.steps, 0, n_steps + 1)
    out = [int(round(v)) for v in ts]
    if len(set(out)) != len(out):
        raise ValidationError("inference grid collapsed; reduce n_steps")
    return out
