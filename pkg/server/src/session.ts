/**
 * One serving session over a backbone: message dispatch, server-side
 * classifier-free guidance, attention capture averaged across blocks, and the
 * startup codec self-test. Per-request failures become error frames; the
 * session itself never throws out of handle().
 */
import { Backbone, BlockAttention } from "./backbone.js";
import * as proto from "./protocol.js";
import { Tensor, at, tensor } from "./tensor.js";

export interface SessionOptions {
  device?: string;
}

export class BackendSession {
  readonly backbone: Backbone;
  readonly device: string;
  readonly protocolVersion = proto.VERSION;

  constructor(backbone: Backbone, opts: SessionOptions = {}) {
    this.backbone = backbone;
    this.device = opts.device ?? "cpu";
  }

  helloInfo(): proto.HelloInfo {
    return {
      latentH: this.backbone.latentH,
      latentW: this.backbone.latentW,
      latentC: this.backbone.latentC,
      spatialFactor: this.backbone.spatialFactor,
      vocabSize: this.backbone.vocabSize,
    };
  }

  /** decode(encode(.)) reconstruction error; run at startup and refuse to
   * serve when the codec cannot round-trip within the quantization bound. */
  codecSelfTest(): number {
    const h = this.backbone.latentH;
    const w = this.backbone.latentW;
    const c = this.backbone.latentC;
    const z = new Float32Array(h * w * c);
    for (let i = 0; i < z.length; i++) {
      z[i] = Math.sin(i * 0.37) * 0.9; // deterministic probe in [-0.9, 0.9]
    }
    const probe = tensor(h, w, c, z);
    const back = this.backbone.encode(this.backbone.decode(probe));
    let worst = 0;
    for (let i = 0; i < z.length; i++) {
      worst = Math.max(worst, Math.abs(back.data[i] - z[i]));
    }
    return worst;
  }

  handle(msgType: number, payload: Buffer): Buffer {
    try {
      switch (msgType) {
        case proto.MSG_HELLO:
          return proto.packFrame(proto.MSG_HELLO, proto.encodeHelloResponse(this.helloInfo()));
        case proto.MSG_DENOISE_REQ:
          return this.denoise(proto.decodeDenoiseRequest(payload));
        case proto.MSG_DECODE_REQ: {
          const { requestId, tensor: latent } = proto.decodeTensorMessage(payload);
          const image = this.backbone.decode(latent);
          return proto.packFrame(proto.MSG_DECODE_RESP, proto.encodeTensorMessage(requestId, image));
        }
        case proto.MSG_ENCODE_REQ: {
          const { requestId, tensor: image } = proto.decodeTensorMessage(payload);
          const latent = this.backbone.encode(image);
          return proto.packFrame(proto.MSG_ENCODE_RESP, proto.encodeTensorMessage(requestId, latent));
        }
        default:
          return proto.packFrame(
            proto.MSG_ERROR,
            proto.encodeError(proto.requestIdOf(payload), `unsupported message type ${msgType}`),
          );
      }
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      return proto.packFrame(
        proto.MSG_ERROR,
        proto.encodeError(proto.requestIdOf(payload), message),
      );
    }
  }

  private denoise(req: proto.DenoiseRequest): Buffer {
    if (req.timestep < 1) {
      throw new Error(`timestep must be >= 1, got ${req.timestep}`);
    }
    for (const tok of req.tokens) {
      if (tok >= this.backbone.vocabSize) {
        throw new Error(`token ${tok} outside vocabulary of ${this.backbone.vocabSize}`);
      }
    }
    const eps = this.guidedPrediction(req);
    if (eps.h !== req.latent.h || eps.w !== req.latent.w || eps.c !== req.latent.c) {
      throw new Error("backbone violated the shape contract");
    }
    let attention: proto.AttentionMap | undefined;
    if (req.captureAttention) {
      const blocks = this.backbone.attentionBlocks(req.latent, req.timestep, req.tokens);
      if (blocks.length) {
        attention = averageBlocks(blocks, req.latent.h);
      }
    }
    return proto.packFrame(
      proto.MSG_DENOISE_RESP,
      proto.encodeDenoiseResponse(req.requestId, eps, attention),
    );
  }

  /** classifier-free guidance with an empty-token unconditional branch */
  private guidedPrediction(req: proto.DenoiseRequest): Tensor {
    const text = this.backbone.predictNoise(req.latent, req.timestep, req.tokens, req.condition);
    if (req.guidance === 1 || req.tokens.length === 0) {
      return text;
    }
    const uncond = this.backbone.predictNoise(req.latent, req.timestep, [], req.condition);
    const out = new Float32Array(text.data.length);
    for (let i = 0; i < out.length; i++) {
      out[i] = uncond.data[i] + req.guidance * (text.data[i] - uncond.data[i]);
    }
    return tensor(text.h, text.w, text.c, out);
  }
}

/** Nearest-resample every block to the coarsest grid, then average. */
export function averageBlocks(blocks: BlockAttention[], latentH: number): proto.AttentionMap {
  const coarsest = blocks.reduce((a, b) => (b.grid.h * b.grid.w < a.grid.h * a.grid.w ? b : a));
  const { h, w, c: m } = coarsest.grid;
  const acc = new Float64Array(h * w * m);
  for (const block of blocks) {
    const g = block.grid;
    if (g.c !== m) {
      throw new Error("attention blocks disagree on token count");
    }
    for (let y = 0; y < h; y++) {
      const sy = Math.min(Math.floor(((y + 0.5) * g.h) / h), g.h - 1);
      for (let x = 0; x < w; x++) {
        const sx = Math.min(Math.floor(((x + 0.5) * g.w) / w), g.w - 1);
        for (let j = 0; j < m; j++) {
          acc[(y * w + x) * m + j] += at(g, sy, sx, j);
        }
      }
    }
  }
  const mean = new Float32Array(acc.length);
  for (let i = 0; i < acc.length; i++) {
    mean[i] = acc[i] / blocks.length;
  }
  return { scale: latentH / h, grid: tensor(h, w, m, mean) };
}
