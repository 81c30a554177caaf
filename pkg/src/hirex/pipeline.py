"""End-to-end progressive higher-resolution extrapolation.

One run = a base pass at the pre-trained latent size (capturing cross-attention
on the late half of its steps), then one stage per entry of the progressive
scale sequence. Each stage upscales the previous clean latent, noise-inverts it
at t = T, and walks the inference grid combining two branches per step:

  patch branch    shifted-window patches denoised with patch-content-aware
                  prompts and, on conditioned steps, per-patch edge conditions,
                  then overlap-averaged;
  dilated branch  strided sub-grids shuffled per position (window interaction),
                  denoised under the full prompt, unshuffled, recombined.

The branches blend with the cosine weight eta (global branch dominant early),
optionally followed by injecting the noise-inversed upscaled reference at the
same cosine weight.
"""
from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .backend import Codec, DenoiseRequest, Denoiser, predict_noise
from .dilation import (
    DilationPlan,
    WindowBijection,
    blend_global,
    dilate_extract,
    dilate_recombine,
    eta_schedule,
    shuffle_windows,
)
from .edges import canny_edges, sample_condition_patches
from .errors import GeometryError, HirexError, ValidationError
from .images import mask_to_image, upscale_image, write_pnm
from .latent import interpolate_latent, write_ltns
from .patches import PatchPlan, extract_patch, format_plan, fuse_patches, plan_patches, scale_plan, shrink_plan
from .prompts import (
    CrossAttentionMap,
    PatchPromptSet,
    WordMask,
    binarize_attention,
    derive_patch_prompts,
    mean_combine_attention,
    open_mask,
    upscale_mask,
)
from .schedule import NoiseSchedule, ddim_step, forward_diffuse, inference_timesteps, make_schedule

ETA_MODES = ("cosine", "zero", "one")
BACKEND_KINDS = ("zero", "linear", "oracle", "edge-biased", "remote")


@dataclass(frozen=True)
class GenerationConfig:
    base_h: int = 16
    base_w: int = 16
    channels: int = 4
    spatial_factor: int = 8
    scales: tuple[int, ...] = (1, 2)
    steps: int = 10
    train_steps: int = 1000
    beta_start: float = 0.00085
    beta_end: float = 0.012
    stride_h: int = 0  # 0 = default patch/2
    stride_w: int = 0
    eta_mode: str = "cosine"
    identity_bijections: bool = False
    residual_injection: bool = True
    workers: int = 1
    prompt_threshold: float = 0.3
    open_radius: int = 1
    att_scale: int = 2
    controlnet_steps: int = -1  # -1 = every step
    canny_low: float = 100.0
    canny_high: float = 200.0
    canny_sigma: float = 1.0
    backend: str = "linear"
    backend_lam: float = 0.5
    backend_bias: float = 0.0
    backend_seed: int = 0
    guidance_scale: float = 1.0
    endpoint: str = ""
    timeout: float = 300.0
    seed: int = 0

    def validate(self) -> "GenerationConfig":
        if min(self.base_h, self.base_w, self.channels) < 1:
            raise ValidationError("base dims and channels must be >= 1")
        if not self.scales or self.scales[0] != 1:
            raise ValidationError("scale sequence must start at 1 (the base pass)")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ValidationError("scale sequence must be strictly increasing")
        if any(int(s) != s or s < 1 for s in self.scales):
            raise ValidationError("scales must be positive integers")
        if not 1 <= self.steps <= self.train_steps:
            raise ValidationError("steps must be in 1..train_steps")
        if not 0.0 < self.prompt_threshold < 1.0:
            raise ValidationError("c must be in (0,1)")
        n_cond = self.resolved_controlnet_steps
        if not 0 <= n_cond <= self.steps:
            raise ValidationError("controlnet_steps must be in 0..steps")
        if self.eta_mode not in ETA_MODES:
            raise ValidationError(f"eta_mode must be one of {ETA_MODES}")
        if self.backend not in BACKEND_KINDS:
            raise ValidationError(f"backend must be one of {BACKEND_KINDS}")
        if not 0 <= self.canny_low <= self.canny_high <= 255:
            raise ValidationError("need 0 <= canny_low <= canny_high <= 255")
        if self.open_radius < 0:
            raise ValidationError("open_radius must be >= 0")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        sh, sw = self.resolved_strides
        if min(sh, sw) < 1:
            raise ValidationError("strides must be >= 1")
        return self

    @property
    def resolved_strides(self) -> tuple[int, int]:
        return (self.stride_h or self.base_h // 2, self.stride_w or self.base_w // 2)

    @property
    def resolved_controlnet_steps(self) -> int:
        return self.steps if self.controlnet_steps < 0 else self.controlnet_steps

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.train_steps, self.beta_start, self.beta_end)


@dataclass
class StageArtifacts:
    scale: int
    input_latent: np.ndarray
    output_latent: np.ndarray | None = None
    word_masks: list[WordMask] = field(default_factory=list)
    prompt_set: PatchPromptSet | None = None
    edge_map: np.ndarray | None = None
    plan: PatchPlan | None = None
    bijection_dumps: dict[int, str] = field(default_factory=dict)
    wall_clock: float = 0.0


@dataclass
class RunResult:
    image: np.ndarray
    final_latent: np.ndarray
    base_latent: np.ndarray
    attention: CrossAttentionMap | None
    stages: list[StageArtifacts]
    artifact_index: list[tuple[str, int, int | None]] = field(default_factory=list)


def stage_noise(seed: int, scale: int, shape: tuple[int, int, int]) -> np.ndarray:
    """The stage's inversion noise; exposed so reference loops can reuse it."""
    rng = np.random.default_rng([seed, 2, scale])
    return rng.standard_normal(shape, dtype=np.float32)


def base_noise(seed: int, shape: tuple[int, int, int]) -> np.ndarray:
    rng = np.random.default_rng([seed, 1])
    return rng.standard_normal(shape, dtype=np.float32)


def plan_conditioned_steps(T: int, controlnet_steps: int) -> frozenset[int]:
    """Evenly spaced subset of {1..T} with the requested cardinality."""
    if not 0 <= controlnet_steps <= T:
        raise ValidationError(f"controlnet_steps must be in 0..{T}")
    if controlnet_steps == 0:
        return frozenset()
    picks = np.round(np.arange(1, controlnet_steps + 1) * (T / controlnet_steps))
    return frozenset(int(v) for v in picks)


def _predict_all(backend: Denoiser, requests: list[DenoiseRequest], workers: int, label: str):
    def one(pair):
        idx, req = pair
        try:
            return predict_noise(backend, req)
        except HirexError as exc:
            raise type(exc)(f"{label} {idx}: {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, enumerate(requests)))
    return [one(pair) for pair in enumerate(requests)]


def _derive_stage_prompts(
    attention: CrossAttentionMap,
    plan: PatchPlan,
    cfg: GenerationConfig,
    prompt_tokens: tuple[int, ...],
) -> tuple[list[WordMask], PatchPromptSet]:
    s = attention.scale
    high_h = plan.parent_h // s
    high_w = plan.parent_w // s
    if plan.parent_h % s or plan.parent_w % s:
        raise GeometryError(f"stage dims {plan.parent_h}x{plan.parent_w} not divisible by attention scale {s}")
    masks = binarize_attention(attention)
    opened = [open_mask(m, cfg.open_radius) for m in masks]
    upscaled = [upscale_mask(m, high_h, high_w) for m in opened]
    mask_plan = shrink_plan(plan, s)
    prompt_set = derive_patch_prompts(upscaled, mask_plan, cfg.prompt_threshold, prompt_tokens)
    return upscaled, prompt_set


def _canny_source(decoded: np.ndarray) -> np.ndarray:
    if decoded.shape[2] in (1, 3):
        return decoded
    return decoded[:, :, :3]


def run_stage(
    z0_low: np.ndarray,
    scale: int,
    cfg: GenerationConfig,
    backend: Denoiser,
    codec: Codec,
    attention: CrossAttentionMap | None,
    prompt_tokens: tuple[int, ...],
    sched: NoiseSchedule,
    request_ids: itertools.count,
    artifacts: StageArtifacts | None = None,
) -> np.ndarray:
    """One progressive stage; returns the stage's clean latent."""
    high_h, high_w = cfg.base_h * scale, cfg.base_w * scale
    channels = z0_low.shape[2]

    z0_up = interpolate_latent(z0_low, high_h, high_w)
    eps_stage = stage_noise(cfg.seed, scale, (high_h, high_w, channels))
    z = forward_diffuse(z0_up, sched.steps, eps_stage, sched)

    stride_h, stride_w = cfg.resolved_strides
    plan = plan_patches(high_h, high_w, cfg.base_h, cfg.base_w, stride_h, stride_w)

    if attention is not None:
        masks, prompt_set = _derive_stage_prompts(attention, plan, cfg, prompt_tokens)
    else:
        masks, prompt_set = [], None  # no capture: every patch gets the full prompt

    decoded = codec.decode(z0_low)
    image_up = upscale_image(
        _canny_source(decoded), high_h * cfg.spatial_factor, high_w * cfg.spatial_factor
    )
    edge_map = canny_edges(image_up, cfg.canny_low, cfg.canny_high, cfg.canny_sigma)
    pixel_plan = scale_plan(plan, cfg.spatial_factor)
    cond_patches = sample_condition_patches(edge_map, pixel_plan)

    dplan = DilationPlan(cfg.base_h, cfg.base_w, high_h, high_w)
    bij = WindowBijection(
        cfg.base_h,
        cfg.base_w,
        dplan.samples,
        seed=cfg.seed + scale,
        identity=cfg.identity_bijections,
    )

    conditioned = plan_conditioned_steps(cfg.steps, cfg.resolved_controlnet_steps)
    timesteps = inference_timesteps(sched, cfg.steps)

    if artifacts is not None:
        artifacts.word_masks = masks
        artifacts.prompt_set = prompt_set
        artifacts.edge_map = edge_map
        artifacts.plan = plan

    for i in range(cfg.steps):
        t, t_prev = timesteps[i], timesteps[i + 1]
        step_no = i + 1
        if cfg.eta_mode == "cosine":
            eta = eta_schedule(t, sched.steps)
        elif cfg.eta_mode == "zero":
            eta = 0.0
        else:
            eta = 1.0

        try:
            z_patch = None
            if eta < 1.0:
                use_cond = step_no in conditioned
                requests = []
                for idx, w in enumerate(plan.windows):
                    tokens = prompt_set.prompt_for(idx) if prompt_set else prompt_tokens
                    requests.append(
                        DenoiseRequest(
                            latent=extract_patch(z, w),
                            timestep=t,
                            prompt_tokens=tokens,
                            guidance_scale=cfg.guidance_scale,
                            condition=cond_patches[idx] if use_cond else None,
                            request_id=next(request_ids),
                        )
                    )
                responses = _predict_all(backend, requests, cfg.workers, "patch")
                stepped = [
                    ddim_step(req.latent, resp.eps_pred, t, t_prev, sched)
                    for req, resp in zip(requests, responses)
                ]
                z_patch = fuse_patches(stepped, plan)

            g = None
            if eta > 0.0:
                samples = dilate_extract(z, dplan)
                shuffled = shuffle_windows(samples, bij, t)
                requests = [
                    DenoiseRequest(
                        latent=s,
                        timestep=t,
                        prompt_tokens=prompt_tokens,
                        guidance_scale=cfg.guidance_scale,
                        request_id=next(request_ids),
                    )
                    for s in shuffled
                ]
                responses = _predict_all(backend, requests, cfg.workers, "sample")
                stepped = [
                    ddim_step(req.latent, resp.eps_pred, t, t_prev, sched)
                    for req, resp in zip(requests, responses)
                ]
                unshuffled = shuffle_windows(stepped, bij, t, inverse=True)
                g = dilate_recombine(unshuffled, dplan)
                if artifacts is not None and not cfg.identity_bijections:
                    artifacts.bijection_dumps[t] = bij.format_dump(t)

            if z_patch is None:
                z = g
            elif g is None:
                z = z_patch
            else:
                z = blend_global(z_patch, g, eta)

            if cfg.residual_injection and t_prev >= 1:
                w_res = eta_schedule(t_prev, sched.steps)
                if w_res > 0.0:
                    reference = forward_diffuse(z0_up, t_prev, eps_stage, sched)
                    z = blend_global(z, reference, w_res)
        except HirexError as exc:
            raise type(exc)(f"stage x{scale}, timestep {t}: {exc}") from exc

    return z


def run(
    cfg: GenerationConfig,
    prompt_tokens: tuple[int, ...] | list[int],
    backend: Denoiser,
    codec: Codec,
    out_dir: str | Path | None = None,
) -> RunResult:
    """Base pass, progressive stages, final decode. Deterministic given seeds."""
    cfg = cfg.validate()
    prompt_tokens = tuple(int(t) for t in prompt_tokens)
    sched = cfg.schedule()
    request_ids = itertools.count(1)
    out_path = Path(out_dir) if out_dir is not None else None
    index: list[tuple[str, int, int | None]] = []

    shape = (cfg.base_h, cfg.base_w, cfg.channels)
    z = base_noise(cfg.seed, shape)
    timesteps = inference_timesteps(sched, cfg.steps)
    captured: list[CrossAttentionMap] = []
    for i in range(cfg.steps):
        t, t_prev = timesteps[i], timesteps[i + 1]
        capture = i >= cfg.steps // 2  # late half of the base pass
        resp = predict_noise(
            backend,
            DenoiseRequest(
                latent=z,
                timestep=t,
                prompt_tokens=prompt_tokens,
                guidance_scale=cfg.guidance_scale,
                capture_attention=capture,
                request_id=next(request_ids),
            ),
        )
        if resp.attention is not None:
            captured.append(resp.attention)
        z = ddim_step(z, resp.eps_pred, t, t_prev, sched)

    attention = mean_combine_attention(captured) if captured else None
    base_latent = z

    if out_path is not None:
        stage_dir = out_path / "base"
        stage_dir.mkdir(parents=True, exist_ok=True)
        write_ltns(stage_dir / "latent.ltns", base_latent)
        index.append(("base/latent.ltns", 1, None))

    stages: list[StageArtifacts] = []
    for scale in cfg.scales[1:]:
        art = StageArtifacts(scale=scale, input_latent=z)
        started = time.perf_counter()
        z = run_stage(
            z, scale, cfg, backend, codec, attention, prompt_tokens, sched, request_ids, art
        )
        art.wall_clock = time.perf_counter() - started
        art.output_latent = z
        stages.append(art)
        if out_path is not None:
            index.extend(_write_stage(out_path, art))

    image = codec.decode(z)
    result = RunResult(
        image=image,
        final_latent=z,
        base_latent=base_latent,
        attention=attention,
        stages=stages,
        artifact_index=index,
    )
    if out_path is not None:
        write_pnm(out_path / "output.ppm", _canny_source(image))
        write_ltns(out_path / "final.ltns", z)
        index.append(("output.ppm", cfg.scales[-1], None))
        index.append(("final.ltns", cfg.scales[-1], None))
    return result


def _write_stage(out_path: Path, art: StageArtifacts) -> list[tuple[str, int, int | None]]:
    stage_dir = out_path / f"stage{art.scale}x"
    stage_dir.mkdir(parents=True, exist_ok=True)
    entries: list[tuple[str, int, int | None]] = []

    def record(name: str, timestep: int | None = None):
        entries.append((f"{stage_dir.name}/{name}", art.scale, timestep))

    write_ltns(stage_dir / "input.ltns", art.input_latent)
    record("input.ltns")
    if art.output_latent is not None:
        write_ltns(stage_dir / "output.ltns", art.output_latent)
        record("output.ltns")
    for m in art.word_masks:
        name = f"mask_word{m.word_index}.pgm"
        write_pnm(stage_dir / name, mask_to_image(m.grid))
        record(name)
    if art.prompt_set is not None:
        (stage_dir / "prompts.txt").write_text(art.prompt_set.format_dump())
        record("prompts.txt")
    if art.edge_map is not None:
        write_pnm(stage_dir / "edges.pgm", art.edge_map)
        record("edges.pgm")
    if art.plan is not None:
        (stage_dir / "plan.txt").write_text(format_plan(art.plan))
        record("plan.txt")
    for t in sorted(art.bijection_dumps):
        name = f"bijection_t{t:05d}.txt"
        (stage_dir / name).write_text(art.bijection_dumps[t])
        record(name, timestep=t)
    return entries
