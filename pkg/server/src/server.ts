/**
 * TCP server: per-connection frame readers feed a single FIFO queue, so model
 * execution is strictly serial no matter how many engines are connected;
 * replies go back to the originating connection in request order.
 */
import net from "node:net";

import { FrameReader } from "./framing.js";
import { BackendSession } from "./session.js";

export class AdapterServer {
  private readonly session: BackendSession;
  private readonly server: net.Server;
  private queue: Promise<void> = Promise.resolve();

  constructor(session: BackendSession) {
    this.session = session;
    this.server = net.createServer((socket) => this.serve(socket));
  }

  private serve(socket: net.Socket): void {
    const reader = new FrameReader();
    socket.on("data", (chunk: Buffer) => {
      let frames;
      try {
        frames = reader.push(chunk);
      } catch {
        socket.destroy(); // unframeable garbage; nothing sensible to answer
        return;
      }
      for (const frame of frames) {
        this.queue = this.queue.then(() => {
          if (socket.destroyed) {
            return;
          }
          const reply = this.session.handle(frame.msgType, frame.payload);
          socket.write(reply);
        });
      }
    });
    socket.on("error", () => socket.destroy());
  }

  listen(host: string, port: number): Promise<net.AddressInfo> {
    return new Promise((resolve, reject) => {
      this.server.once("error", reject);
      this.server.listen(port, host, () => {
        resolve(this.server.address() as net.AddressInfo);
      });
    });
  }

  close(): Promise<void> {
    return new Promise((resolve) => this.server.close(() => resolve()));
  }
}
