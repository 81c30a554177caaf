/**
 * The backbone contract the adapter serves, plus a deterministic synthetic
 * implementation used where real model weights are unavailable.
 *
 * A real integration implements Backbone over an actual denoiser + VAE
 * (predictNoise runs the conditioned U-Net, attentionBlocks returns the
 * captured cross-attention grids from its up/down blocks, decode/encode wrap
 * the autoencoder). Everything above this interface - protocol, queueing,
 * classifier-free guidance, attention averaging, self-test - is shared.
 */
import { Tensor, at, tensor } from "./tensor.js";

export interface BlockAttention {
  /** downsample factor of this block's grid relative to the latent */
  scale: number;
  /** (h_a, w_a, tokenCount) nonnegative scores */
  grid: Tensor;
}

export interface Backbone {
  readonly modelId: string;
  readonly latentH: number;
  readonly latentW: number;
  readonly latentC: number;
  readonly spatialFactor: number;
  readonly vocabSize: number;
  predictNoise(latent: Tensor, timestep: number, tokens: number[], condition?: Tensor): Tensor;
  /** cross-attention grids for the blocks of interest, coarse and fine */
  attentionBlocks(latent: Tensor, timestep: number, tokens: number[]): BlockAttention[];
  decode(latent: Tensor): Tensor;
  encode(image: Tensor): Tensor;
}

/** Deterministic 32-bit PRNG; keeps the synthetic backbone referentially
 * transparent in (seed, request). */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function hashTokens(tokens: number[]): number {
  let h = 2166136261;
  for (const tok of tokens) {
    h = Math.imul(h ^ tok, 16777619);
  }
  return h >>> 0;
}

export interface SyntheticConfig {
  modelId?: string;
  seed?: number;
  latentH?: number;
  latentW?: number;
  latentC?: number;
  spatialFactor?: number;
  vocabSize?: number;
}

export class SyntheticBackbone implements Backbone {
  readonly modelId: string;
  readonly latentH: number;
  readonly latentW: number;
  readonly latentC: number;
  readonly spatialFactor: number;
  readonly vocabSize: number;
  private readonly seed: number;

  constructor(cfg: SyntheticConfig = {}) {
    this.modelId = cfg.modelId ?? "synthetic-v1";
    this.seed = cfg.seed ?? 0;
    this.latentH = cfg.latentH ?? 16;
    this.latentW = cfg.latentW ?? 16;
    this.latentC = cfg.latentC ?? 4;
    this.spatialFactor = cfg.spatialFactor ?? 8;
    this.vocabSize = cfg.vocabSize ?? 1024;
  }

  predictNoise(latent: Tensor, timestep: number, tokens: number[], condition?: Tensor): Tensor {
    const rng = mulberry32(this.seed ^ (timestep * 2654435761) ^ hashTokens(tokens));
    const eps = new Float32Array(latent.data.length);
    for (let i = 0; i < eps.length; i++) {
      eps[i] = 0.3 * latent.data[i] + 0.05 * (rng() * 2 - 1);
    }
    if (condition) {
      // pool the pixel-space condition onto the latent grid; conditioned
      // requests are observably different from unconditioned ones
      const fy = condition.h / latent.h;
      const fx = condition.w / latent.w;
      if (Number.isInteger(fy) && Number.isInteger(fx) && fy >= 1 && fx >= 1) {
        for (let y = 0; y < latent.h; y++) {
          for (let x = 0; x < latent.w; x++) {
            let acc = 0;
            for (let yy = 0; yy < fy; yy++) {
              for (let xx = 0; xx < fx; xx++) {
                acc += at(condition, y * fy + yy, x * fx + xx, 0);
              }
            }
            const pooled = acc / (fy * fx * 255);
            for (let ch = 0; ch < latent.c; ch++) {
              eps[(y * latent.w + x) * latent.c + ch] -= 0.4 * pooled;
            }
          }
        }
      }
    }
    return tensor(latent.h, latent.w, latent.c, eps);
  }

  attentionBlocks(latent: Tensor, timestep: number, tokens: number[]): BlockAttention[] {
    const m = Math.max(1, tokens.length);
    const blocks: BlockAttention[] = [];
    for (const scale of [4, 2]) {
      if (latent.h % scale || latent.w % scale) {
        continue;
      }
      const h = latent.h / scale;
      const w = latent.w / scale;
      const rng = mulberry32((this.seed ^ (timestep * 40503) ^ (scale * 9973)) >>> 0);
      const grid = new Float32Array(h * w * m);
      for (let j = 0; j < m; j++) {
        const cy = rng() * (h - 1);
        const cx = rng() * (w - 1);
        const sig = Math.max(h, w) / 4;
        for (let y = 0; y < h; y++) {
          for (let x = 0; x < w; x++) {
            const d2 = (y - cy) ** 2 + (x - cx) ** 2;
            grid[(y * w + x) * m + j] = 0.05 + Math.exp(-d2 / (2 * sig * sig));
          }
        }
      }
      blocks.push({ scale, grid: tensor(h, w, m, grid) });
    }
    return blocks;
  }

  decode(latent: Tensor): Tensor {
    const f = this.spatialFactor;
    const out = new Float32Array(latent.h * f * latent.w * f * latent.c);
    const W = latent.w * f;
    for (let y = 0; y < latent.h * f; y++) {
      const sy = Math.floor(y / f);
      for (let x = 0; x < W; x++) {
        const sx = Math.floor(x / f);
        for (let ch = 0; ch < latent.c; ch++) {
          const v = Math.round(127.5 * (at(latent, sy, sx, ch) + 1));
          out[(y * W + x) * latent.c + ch] = Math.min(255, Math.max(0, v));
        }
      }
    }
    return tensor(latent.h * f, latent.w * f, latent.c, out);
  }

  encode(image: Tensor): Tensor {
    const f = this.spatialFactor;
    if (image.h % f || image.w % f) {
      throw new Error(`image ${image.h}x${image.w} not divisible by factor ${f}`);
    }
    const h = image.h / f;
    const w = image.w / f;
    const out = new Float32Array(h * w * image.c);
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        for (let ch = 0; ch < image.c; ch++) {
          let acc = 0;
          for (let yy = 0; yy < f; yy++) {
            for (let xx = 0; xx < f; xx++) {
              acc += at(image, y * f + yy, x * f + xx, ch);
            }
          }
          out[(y * w + x) * image.c + ch] = acc / (f * f) / 127.5 - 1;
        }
      }
    }
    return tensor(h, w, image.c, out);
  }
}
