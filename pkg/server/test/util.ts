import net from "node:net";

import { FrameReader } from "../src/framing.js";

/** Minimal promise-based protocol client for tests. */
export class TestClient {
  private socket: net.Socket;
  private reader = new FrameReader();
  private waiting: Array<(f: { msgType: number; payload: Buffer }) => void> = [];
  private ready: Array<{ msgType: number; payload: Buffer }> = [];

  private constructor(socket: net.Socket) {
    this.socket = socket;
    socket.on("data", (chunk) => {
      for (const frame of this.reader.push(chunk)) {
        const waiter = this.waiting.shift();
        if (waiter) {
          waiter(frame);
        } else {
          this.ready.push(frame);
        }
      }
    });
  }

  static connect(port: number, host = "127.0.0.1"): Promise<TestClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port }, () => resolve(new TestClient(socket)));
      socket.once("error", reject);
    });
  }

  send(frame: Buffer): void {
    this.socket.write(frame);
  }

  next(timeoutMs = 5000): Promise<{ msgType: number; payload: Buffer }> {
    const queued = this.ready.shift();
    if (queued) {
      return Promise.resolve(queued);
    }
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("timed out waiting for frame")), timeoutMs);
      this.waiting.push((frame) => {
        clearTimeout(timer);
        resolve(frame);
      });
    });
  }

  close(): void {
    this.socket.destroy();
  }
}
