import assert from "node:assert/strict";
import { test } from "node:test";

import { SyntheticBackbone } from "../src/backbone.js";
import * as proto from "../src/protocol.js";
import { AdapterServer } from "../src/server.js";
import { BackendSession } from "../src/session.js";
import { packLtns, tensor } from "../src/tensor.js";
import { TestClient } from "./util.js";

async function startServer(cfg = {}): Promise<{ server: AdapterServer; port: number }> {
  const server = new AdapterServer(new BackendSession(new SyntheticBackbone(cfg)));
  const address = await server.listen("127.0.0.1", 0);
  return { server, port: address.port };
}

function denoiseFrame(requestId: bigint, latent: ReturnType<typeof tensor>): Buffer {
  const head = Buffer.alloc(20);
  head.writeBigUInt64LE(requestId, 0);
  head.writeUInt32LE(10, 8);
  head.writeFloatLE(1, 12);
  head.writeUInt32LE(0, 16);
  const payload = Buffer.concat([head, Buffer.from([0]), packLtns(latent)]);
  return proto.packFrame(proto.MSG_DENOISE_REQ, payload);
}

test("handshake then denoise over a real socket", async () => {
  const { server, port } = await startServer();
  const client = await TestClient.connect(port);
  try {
    client.send(proto.packFrame(proto.MSG_HELLO, Buffer.alloc(0)));
    const hello = await client.next();
    assert.equal(hello.msgType, proto.MSG_HELLO);
    assert.equal(hello.payload.length, 20);

    const latent = tensor(4, 4, 2, new Float32Array(32).fill(0.25));
    client.send(denoiseFrame(7n, latent));
    const resp = await client.next();
    assert.equal(resp.msgType, proto.MSG_DENOISE_RESP);
    assert.equal(resp.payload.readBigUInt64LE(0), 7n);
  } finally {
    client.close();
    await server.close();
  }
});

test("requests from concurrent connections all get answered in order", async () => {
  const { server, port } = await startServer();
  const clients = await Promise.all([1, 2, 3].map(() => TestClient.connect(port)));
  try {
    const latent = tensor(4, 4, 1, new Float32Array(16).fill(0.5));
    for (const [i, client] of clients.entries()) {
      for (let k = 0; k < 5; k++) {
        client.send(denoiseFrame(BigInt(100 * (i + 1) + k), latent));
      }
    }
    for (const [i, client] of clients.entries()) {
      for (let k = 0; k < 5; k++) {
        const resp = await client.next();
        assert.equal(resp.msgType, proto.MSG_DENOISE_RESP);
        assert.equal(resp.payload.readBigUInt64LE(0), BigInt(100 * (i + 1) + k));
      }
    }
  } finally {
    clients.forEach((c) => c.close());
    await server.close();
  }
});

test("split frames across tcp chunks reassemble", async () => {
  const { server, port } = await startServer();
  const client = await TestClient.connect(port);
  try {
    const frame = denoiseFrame(9n, tensor(2, 2, 1, new Float32Array([1, 2, 3, 4])));
    for (let i = 0; i < frame.length; i += 7) {
      client.send(frame.subarray(i, Math.min(i + 7, frame.length)));
      await new Promise((r) => setTimeout(r, 1));
    }
    const resp = await client.next();
    assert.equal(resp.msgType, proto.MSG_DENOISE_RESP);
  } finally {
    client.close();
    await server.close();
  }
});

test("model failures answer as error frames without dropping the connection", async () => {
  const { server, port } = await startServer({ vocabSize: 4 });
  const client = await TestClient.connect(port);
  try {
    const head = Buffer.alloc(20);
    head.writeBigUInt64LE(55n, 0);
    head.writeUInt32LE(10, 8);
    head.writeFloatLE(1, 12);
    head.writeUInt32LE(1, 16);
    const tok = Buffer.alloc(4);
    tok.writeUInt32LE(9999, 0);
    const latent = tensor(2, 2, 1, new Float32Array(4));
    const payload = Buffer.concat([head, tok, Buffer.from([0]), packLtns(latent)]);
    client.send(proto.packFrame(proto.MSG_DENOISE_REQ, payload));
    const err = await client.next();
    assert.equal(err.msgType, proto.MSG_ERROR);
    assert.equal(err.payload.readBigUInt64LE(0), 55n);

    // connection still serves afterwards
    client.send(proto.packFrame(proto.MSG_HELLO, Buffer.alloc(0)));
    const hello = await client.next();
    assert.equal(hello.msgType, proto.MSG_HELLO);
  } finally {
    client.close();
    await server.close();
  }
});

test("unframeable garbage gets the connection dropped, server survives", async () => {
  const { server, port } = await startServer();
  const bad = await TestClient.connect(port);
  bad.send(Buffer.from("this is not a frame at all, definitely longer than a header"));
  await new Promise((r) => setTimeout(r, 50));
  const good = await TestClient.connect(port);
  try {
    good.send(proto.packFrame(proto.MSG_HELLO, Buffer.alloc(0)));
    const hello = await good.next();
    assert.equal(hello.msgType, proto.MSG_HELLO);
  } finally {
    bad.close();
    good.close();
    await server.close();
  }
});
