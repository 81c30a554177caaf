/**
 * ADP2 framing and payload codecs (server side).
 *
 * Frame: magic "ADP2" | version u16 LE | msg-type u16 LE | payload-len u32 LE
 * | payload. Denoise request payload: request_id u64 | timestep u32 |
 * guidance f32 | token-count u32 | tokens u32 each | flags u8 (bit0 condition
 * attached, bit1 capture attention) | [condition LTNS] | latent LTNS.
 * Denoise response: request_id u64 | eps LTNS | att-flag u8 |
 * [att-scale u32 | attention LTNS]. Decode/encode: request_id u64 | LTNS.
 * Error: request_id u64 | UTF-8 message.
 */
import { Tensor, packLtns, unpackLtns } from "./tensor.js";

export const MAGIC = Buffer.from("ADP2", "ascii");
export const VERSION = 1;
export const HEADER_LEN = 12;

export const MSG_HELLO = 1;
export const MSG_DENOISE_REQ = 2;
export const MSG_DENOISE_RESP = 3;
export const MSG_DECODE_REQ = 4;
export const MSG_DECODE_RESP = 5;
export const MSG_ENCODE_REQ = 6;
export const MSG_ENCODE_RESP = 7;
export const MSG_ERROR = 8;

const FLAG_CONDITION = 0x01;
const FLAG_CAPTURE = 0x02;

export class ProtocolError extends Error {}

export interface DenoiseRequest {
  requestId: bigint;
  timestep: number;
  guidance: number;
  tokens: number[];
  captureAttention: boolean;
  condition?: Tensor;
  latent: Tensor;
}

export interface AttentionMap {
  scale: number;
  grid: Tensor; // (h_a, w_a, tokenCount)
}

export interface HelloInfo {
  latentH: number;
  latentW: number;
  latentC: number;
  spatialFactor: number;
  vocabSize: number;
}

export function packFrame(msgType: number, payload: Buffer, version = VERSION): Buffer {
  const header = Buffer.alloc(HEADER_LEN);
  MAGIC.copy(header, 0);
  header.writeUInt16LE(version, 4);
  header.writeUInt16LE(msgType, 6);
  header.writeUInt32LE(payload.length, 8);
  return Buffer.concat([header, payload]);
}

export function parseHeader(header: Buffer): { msgType: number; length: number } {
  if (header.length !== HEADER_LEN) {
    throw new ProtocolError("truncated frame header");
  }
  if (!header.subarray(0, 4).equals(MAGIC)) {
    throw new ProtocolError(`bad frame magic ${header.subarray(0, 4).toString("hex")}`);
  }
  const version = header.readUInt16LE(4);
  if (version !== VERSION) {
    throw new ProtocolError(`protocol version mismatch: peer ${version}, ours ${VERSION}`);
  }
  return { msgType: header.readUInt16LE(6), length: header.readUInt32LE(8) };
}

export function decodeDenoiseRequest(payload: Buffer): DenoiseRequest {
  if (payload.length < 21) {
    throw new ProtocolError("denoise request too short");
  }
  const requestId = payload.readBigUInt64LE(0);
  const timestep = payload.readUInt32LE(8);
  const guidance = payload.readFloatLE(12);
  const nTokens = payload.readUInt32LE(16);
  let offset = 20;
  if (payload.length < offset + 4 * nTokens + 1) {
    throw new ProtocolError("denoise request token list truncated");
  }
  const tokens: number[] = [];
  for (let i = 0; i < nTokens; i++) {
    tokens.push(payload.readUInt32LE(offset));
    offset += 4;
  }
  const flags = payload.readUInt8(offset);
  offset += 1;
  let condition: Tensor | undefined;
  if (flags & FLAG_CONDITION) {
    const parsed = unpackLtns(payload, offset);
    condition = parsed.tensor;
    offset = parsed.next;
  }
  const { tensor: latent, next } = unpackLtns(payload, offset);
  if (next !== payload.length) {
    throw new ProtocolError(`${payload.length - next} trailing bytes in denoise request`);
  }
  return {
    requestId,
    timestep,
    guidance,
    tokens,
    captureAttention: Boolean(flags & FLAG_CAPTURE),
    condition,
    latent,
  };
}

export function encodeDenoiseResponse(
  requestId: bigint,
  eps: Tensor,
  attention?: AttentionMap,
): Buffer {
  const head = Buffer.alloc(8);
  head.writeBigUInt64LE(requestId, 0);
  const parts = [head, packLtns(eps)];
  if (attention) {
    const flag = Buffer.alloc(5);
    flag.writeUInt8(1, 0);
    flag.writeUInt32LE(attention.scale, 1);
    parts.push(flag, packLtns(attention.grid));
  } else {
    parts.push(Buffer.from([0]));
  }
  return Buffer.concat(parts);
}

export function encodeHelloResponse(info: HelloInfo): Buffer {
  const out = Buffer.alloc(20);
  out.writeUInt32LE(info.latentH, 0);
  out.writeUInt32LE(info.latentW, 4);
  out.writeUInt32LE(info.latentC, 8);
  out.writeUInt32LE(info.spatialFactor, 12);
  out.writeUInt32LE(info.vocabSize, 16);
  return out;
}

export function decodeTensorMessage(payload: Buffer): { requestId: bigint; tensor: Tensor } {
  if (payload.length < 8) {
    throw new ProtocolError("tensor message too short");
  }
  const requestId = payload.readBigUInt64LE(0);
  const { tensor, next } = unpackLtns(payload, 8);
  if (next !== payload.length) {
    throw new ProtocolError("trailing bytes in tensor message");
  }
  return { requestId, tensor };
}

export function encodeTensorMessage(requestId: bigint, t: Tensor): Buffer {
  const head = Buffer.alloc(8);
  head.writeBigUInt64LE(requestId, 0);
  return Buffer.concat([head, packLtns(t)]);
}

export function encodeError(requestId: bigint, message: string): Buffer {
  const head = Buffer.alloc(8);
  head.writeBigUInt64LE(requestId, 0);
  return Buffer.concat([head, Buffer.from(message, "utf-8")]);
}

/** Best-effort request id for error frames about undecodable payloads. */
export function requestIdOf(payload: Buffer): bigint {
  return payload.length >= 8 ? payload.readBigUInt64LE(0) : 0n;
}
