"""Noise-predictor and codec contracts plus analytic toy implementations.

A backend is anything with predict(DenoiseRequest) -> DenoiseResponse that is
referentially transparent in (its own seed/params, the request). The toys make
the whole pipeline verifiable at desk scale:

  zero         eps = 0
  linear       eps = lam * z_t
  oracle       eps = the stored true noise (drives exact DDIM inversion)
  edge-biased  eps = lam * z_t - bias * (condition pooled to the latent grid)

Toys synthesize a deterministic cross-attention map when a request flags
capture, so prompt masking is exercised without a neural backbone.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .errors import BackendError, ShapeError, ValidationError
from .latent import as_latent
from .prompts import CrossAttentionMap


@dataclass(frozen=True)
class DenoiseRequest:
    latent: np.ndarray
    timestep: int
    prompt_tokens: tuple[int, ...]
    guidance_scale: float = 1.0
    condition: np.ndarray | None = None  # uint8 (H, W, 1) edge map
    capture_attention: bool = False
    request_id: int = 0

    def validated(self) -> "DenoiseRequest":
        lat = as_latent(self.latent)
        if self.timestep < 1:
            raise ValidationError(f"timestep must be >= 1, got {self.timestep}")
        if any(tok < 0 for tok in self.prompt_tokens):
            raise ValidationError("negative token index")
        cond = self.condition
        if cond is not None:
            cond = np.asarray(cond, dtype=np.uint8)
            if cond.ndim == 2:
                cond = cond[:, :, None]
            if cond.ndim != 3 or cond.shape[2] != 1:
                raise ShapeError(f"condition must be (H, W, 1), got {cond.shape}")
        return replace(self, latent=lat, condition=cond)


@dataclass(frozen=True)
class DenoiseResponse:
    eps_pred: np.ndarray
    request_id: int = 0
    attention: CrossAttentionMap | None = None


class Denoiser(Protocol):
    def predict(self, req: DenoiseRequest) -> DenoiseResponse: ...


def predict_noise(backend: Denoiser, req: DenoiseRequest) -> DenoiseResponse:
    """Engine-side wrapper: validates the request and enforces the shape
    contract on whatever the backend returns."""
    req = req.validated()
    try:
        resp = backend.predict(req)
    except BackendError:
        raise
    except Exception as exc:
        raise BackendError(f"backend failure: {exc}", request_id=req.request_id) from exc
    if resp.eps_pred.shape != req.latent.shape:
        raise ShapeError(
            f"backend returned eps shape {resp.eps_pred.shape} for latent {req.latent.shape}"
            f" (request {req.request_id})"
        )
    if not np.isfinite(resp.eps_pred).all():
        raise BackendError("backend returned non-finite eps", request_id=req.request_id)
    return resp


def synthetic_attention(
    seed: int, timestep: int, h_a: int, w_a: int, tokens: int, scale: int
) -> CrossAttentionMap:
    """Deterministic smooth nonnegative map: one soft blob per word over a
    small base level. Purely a desk-scale stand-in for captured attention."""
    rng = np.random.default_rng([seed, timestep, h_a, w_a, tokens])
    ys, xs = np.mgrid[0:h_a, 0:w_a].astype(np.float64)
    cols = np.empty((h_a * w_a, tokens), dtype=np.float64)
    sig = max(h_a, w_a) / 4.0
    for j in range(tokens):
        cy, cx = rng.random() * (h_a - 1), rng.random() * (w_a - 1)
        blob = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * sig * sig))
        cols[:, j] = 0.05 + blob.ravel()
    return CrossAttentionMap(values=cols, map_h=h_a, map_w=w_a, scale=scale)


class _ToyBase:
    """Shared synthetic-attention plumbing for the analytic backends."""

    def __init__(self, seed: int = 0, att_scale: int = 2):
        self.seed = seed
        self.att_scale = att_scale

    def _attach_attention(self, req: DenoiseRequest, eps: np.ndarray) -> DenoiseResponse:
        attention = None
        if req.capture_attention:
            h, w, _ = req.latent.shape
            if h % self.att_scale or w % self.att_scale:
                raise ValidationError(
                    f"latent {h}x{w} not divisible by attention scale {self.att_scale}"
                )
            attention = synthetic_attention(
                self.seed,
                req.timestep,
                h // self.att_scale,
                w // self.att_scale,
                max(1, len(req.prompt_tokens)),
                self.att_scale,
            )
        return DenoiseResponse(
            eps_pred=eps.astype(np.float32), request_id=req.request_id, attention=attention
        )


class ZeroBackend(_ToyBase):
    def predict(self, req: DenoiseRequest) -> DenoiseResponse:
        return self._attach_attention(req, np.zeros_like(req.latent))


class LinearBackend(_ToyBase):
    def __init__(self, lam: float, seed: int = 0, att_scale: int = 2):
        super().__init__(seed, att_scale)
        self.lam = float(lam)

    def predict(self, req: DenoiseRequest) -> DenoiseResponse:
        return self._attach_attention(req, self.lam * req.latent)


class OracleBackend(_ToyBase):
    """Holds the (z0, eps) pair of a known trajectory and always answers with
    the true eps; valid only for requests consistent with that pair."""

    def __init__(self, z0: np.ndarray, eps: np.ndarray, seed: int = 0, att_scale: int = 2):
        super().__init__(seed, att_scale)
        self.z0 = as_latent(z0)
        self.eps = as_latent(eps)
        if self.z0.shape != self.eps.shape:
            raise ShapeError("oracle z0/eps shapes differ")

    def predict(self, req: DenoiseRequest) -> DenoiseResponse:
        if req.latent.shape != self.eps.shape:
            raise ShapeError(
                f"oracle holds {self.eps.shape}, request latent is {req.latent.shape}"
            )
        return self._attach_attention(req, self.eps)


class EdgeBiasedBackend(_ToyBase):
    """lam * z_t minus bias * (edge condition pooled onto the latent grid);
    makes conditioning observable in outputs."""

    def __init__(self, lam: float, bias: float, seed: int = 0, att_scale: int = 2):
        super().__init__(seed, att_scale)
        self.lam = float(lam)
        self.bias = float(bias)

    def predict(self, req: DenoiseRequest) -> DenoiseResponse:
        eps = self.lam * req.latent
        if req.condition is not None:
            h, w, _ = req.latent.shape
            ch, cw, _ = req.condition.shape
            if ch % h or cw % w:
                raise ShapeError(f"condition {ch}x{cw} not divisible by latent {h}x{w}")
            fy, fx = ch // h, cw // w
            pooled = (
                req.condition[:, :, 0]
                .astype(np.float32)
                .reshape(h, fy, w, fx)
                .mean(axis=(1, 3))
                / 255.0
            )
            eps = eps - self.bias * pooled[:, :, None]
        return self._attach_attention(req, eps)


def make_toy_backend(kind: str, **params) -> Denoiser:
    seed = params.pop("seed", 0)
    att_scale = params.pop("att_scale", 2)
    try:
        if kind == "zero":
            backend = ZeroBackend(seed=seed, att_scale=att_scale)
        elif kind == "linear":
            backend = LinearBackend(params.pop("lam"), seed=seed, att_scale=att_scale)
        elif kind == "oracle":
            backend = OracleBackend(
                params.pop("z0"), params.pop("eps"), seed=seed, att_scale=att_scale
            )
        elif kind == "edge-biased":
            backend = EdgeBiasedBackend(
                params.pop("lam"), params.pop("bias"), seed=seed, att_scale=att_scale
            )
        else:
            raise ValidationError(f"unknown backend kind {kind!r}")
    except KeyError as exc:
        raise ValidationError(f"missing parameter {exc} for backend kind {kind!r}") from exc
    if params:
        raise ValidationError(f"unexpected parameters {sorted(params)} for kind {kind!r}")
    return backend


class ToyCodec:
    """Per-channel affine latent<->pixel codec: decode is nearest-neighbor
    upsample by the spatial factor and p = clamp(round(127.5 * (v + 1))),
    encode is block-mean downsample and the inverse affine. decode keeps the
    latent's channel count; encode(decode(z)) ~= clamp(z, -1, 1) within the
    quantization bound 1/127.5."""

    def __init__(self, spatial_factor: int = 8):
        if spatial_factor < 1:
            raise ValidationError("spatial factor must be >= 1")
        self.spatial_factor = int(spatial_factor)

    def decode(self, z: np.ndarray) -> np.ndarray:
        z = as_latent(z)
        f = self.spatial_factor
        up = np.repeat(np.repeat(z, f, axis=0), f, axis=1)
        return np.clip(np.rint(127.5 * (up + 1.0)), 0, 255).astype(np.uint8)

    def encode(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img, dtype=np.uint8)
        if img.ndim == 2:
            img = img[:, :, None]
        f = self.spatial_factor
        H, W, c = img.shape
        if H % f or W % f:
            raise ShapeError(f"image {H}x{W} not divisible by factor {f}")
        pooled = img.astype(np.float64).reshape(H // f, f, W // f, f, c).mean(axis=(1, 3))
        return (pooled / 127.5 - 1.0).astype(np.float32)


class Codec(Protocol):
    spatial_factor: int

    def decode(self, z: np.ndarray) -> np.ndarray: ...

    def encode(self, img: np.ndarray) -> np.ndarray: ...


def toy_codec(spatial_factor: int = 8) -> ToyCodec:
    return ToyCodec(spatial_factor)
