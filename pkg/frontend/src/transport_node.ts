/** TCP transport for headless (Node) clients and integration tests. */

import * as net from "node:net";

import type { Transport } from "./client.js";

export class NodeTcpTransport implements Transport {
  private socket: net.Socket | null = null;

  constructor(
    private readonly host: string,
    private readonly port: number,
  ) {}

  connect(onData: (chunk: Uint8Array) => void, onClose: () => void): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host: this.host, port: this.port });
      socket.setNoDelay(true);
      socket.once("connect", () => {
        this.socket = socket;
        resolve();
      });
      socket.once("error", (err) => {
        if (!this.socket) reject(err);
      });
      socket.on("data", (chunk: Buffer) => onData(new Uint8Array(chunk)));
      socket.once("close", () => onClose());
    });
  }

  send(payload: Uint8Array): void {
    if (!this.socket) throw new Error("transport not connected");
    this.socket.write(payload);
  }

  close(): void {
    this.socket?.destroy();
    this.socket = null;
  }
}
