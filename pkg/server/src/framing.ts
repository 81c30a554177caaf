import { HEADER_LEN, parseHeader } from "./protocol.js";

/**
 * Incremental frame splitter: feed raw socket chunks, get whole frames out.
 * Throws ProtocolError on a bad header; the caller drops the connection.
 */
export class FrameReader {
  private pending: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): Array<{ msgType: number; payload: Buffer }> {
    this.pending = this.pending.length ? Buffer.concat([this.pending, chunk]) : chunk;
    const frames: Array<{ msgType: number; payload: Buffer }> = [];
    while (this.pending.length >= HEADER_LEN) {
      const { msgType, length } = parseHeader(this.pending.subarray(0, HEADER_LEN));
      if (this.pending.length < HEADER_LEN + length) {
        break;
      }
      frames.push({
        msgType,
        payload: this.pending.subarray(HEADER_LEN, HEADER_LEN + length),
      });
      this.pending = this.pending.subarray(HEADER_LEN + length);
    }
    return frames;
  }
}
