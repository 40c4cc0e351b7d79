/**
 * Browser transport: a WebSocket to the bundled bridge, which forwards
 * bytes to the server's TCP port unchanged (see bridge.mjs).
 */

import type { Transport } from "./client.js";

export class BrowserWsTransport implements Transport {
  private socket: WebSocket | null = null;
  private readonly encoder = new TextEncoder();

  constructor(private readonly url: string) {}

  connect(onData: (chunk: Uint8Array) => void, onClose: () => void): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = new WebSocket(this.url);
      socket.binaryType = "arraybuffer";
      socket.onopen = () => {
        this.socket = socket;
        resolve();
      };
      socket.onerror = () => {
        if (!this.socket) reject(new Error(`cannot reach ${this.url}`));
      };
      socket.onmessage = (event) => {
        if (typeof event.data === "string") {
          onData(this.encoder.encode(event.data));
        } else {
          onData(new Uint8Array(event.data as ArrayBuffer));
        }
      };
      socket.onclose = () => onClose();
    });
  }

  send(payload: Uint8Array): void {
    if (!this.socket) throw new Error("transport not connected");
    // copy into a plain ArrayBuffer; the socket API rejects shared views
    const buffer = new ArrayBuffer(payload.byteLength);
    new Uint8Array(buffer).set(payload);
    this.socket.send(buffer);
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
  }
}
