/**
 * LTNS tensor container: magic "LTNS", u32 LE dims (h, w, c), then h*w*c
 * float32 LE values, row-major with channels innermost.
 */

export interface Tensor {
  h: number;
  w: number;
  c: number;
  data: Float32Array;
}

const MAGIC = Buffer.from("LTNS", "ascii");

export function tensor(h: number, w: number, c: number, data?: Float32Array): Tensor {
  const expected = h * w * c;
  const values = data ?? new Float32Array(expected);
  if (values.length !== expected) {
    throw new Error(`tensor data length ${values.length} != ${h}x${w}x${c}`);
  }
  return { h, w, c, data: values };
}

export function at(t: Tensor, y: number, x: number, ch: number): number {
  return t.data[(y * t.w + x) * t.c + ch];
}

export function packLtns(t: Tensor): Buffer {
  const out = Buffer.alloc(16 + 4 * t.data.length);
  MAGIC.copy(out, 0);
  out.writeUInt32LE(t.h, 4);
  out.writeUInt32LE(t.w, 8);
  out.writeUInt32LE(t.c, 12);
  for (let i = 0; i < t.data.length; i++) {
    out.writeFloatLE(t.data[i], 16 + 4 * i);
  }
  return out;
}

export function unpackLtns(buf: Buffer, offset: number): { tensor: Tensor; next: number } {
  if (!buf.subarray(offset, offset + 4).equals(MAGIC)) {
    throw new Error("bad LTNS magic");
  }
  const h = buf.readUInt32LE(offset + 4);
  const w = buf.readUInt32LE(offset + 8);
  const c = buf.readUInt32LE(offset + 12);
  const n = h * w * c;
  const next = offset + 16 + 4 * n;
  if (buf.length < next) {
    throw new Error("truncated LTNS record");
  }
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    const v = buf.readFloatLE(offset + 16 + 4 * i);
    if (!Number.isFinite(v)) {
      throw new Error("non-finite value in tensor");
    }
    data[i] = v;
  }
  return { tensor: { h, w, c, data }, next };
}
