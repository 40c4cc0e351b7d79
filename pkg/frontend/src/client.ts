/**
 * Session client: drives a transport, parses the stream into session
 * state, and reconnects with exponential backoff after a drop.
 */

import { LineDecoder, encodeMessage, isFiniteFrame } from "./protocol.js";
import type { HelloMessage, ServerMessage, SkeletonDescription } from "./protocol.js";
import { SessionState } from "./state.js";

/** Byte-stream transport; implementations are Node TCP and browser WebSocket. */
export interface Transport {
  connect(onData: (chunk: Uint8Array) => void, onClose: () => void): Promise<void>;
  send(payload: Uint8Array): void;
  close(): void;
}

export interface ClientOptions {
  reconnect?: boolean;
  backoffInitialMs?: number;
  backoffMaxMs?: number;
  now?: () => number;
  setTimer?: (fn: () => void, ms: number) => unknown;
}

export class SessionClient {
  readonly state: SessionState;
  hello: HelloMessage | null = null;
  onMessage: ((message: ServerMessage) => void) | null = null;
  onConnectionChange: ((status: string) => void) | null = null;

  private transport: Transport | null = null;
  private decoder = new LineDecoder();
  private backoffMs: number;
  private closed = false;

  constructor(
    private readonly makeTransport: () => Transport,
    private readonly options: ClientOptions = {},
  ) {
    this.state = new SessionState();
    this.backoffMs = options.backoffInitialMs ?? 500;
  }

  get skeleton(): SkeletonDescription | null {
    return this.hello ? this.hello.skeleton : null;
  }

  private now(): number {
    return this.options.now ? this.options.now() : Date.now();
  }

  async connect(): Promise<void> {
    this.setStatus("connecting");
    this.decoder = new LineDecoder();
    this.transport = this.makeTransport();
    try {
      await this.transport.connect(
        (chunk) => this.handleData(chunk),
        () => this.handleClose(),
      );
    } catch (err) {
      this.handleClose();
      throw err;
    }
    this.backoffMs = this.options.backoffInitialMs ?? 500;
    this.setStatus("connected");
  }

  sendCommand(text: string): void {
    if (!this.transport) throw new Error("not connected");
    const nowMs = this.now();
    this.state.recordCommandSent(text, nowMs);
    this.transport.send(
      encodeMessage({ type: "command", text, client_time_ms: nowMs }),
    );
  }

  ping(nonce: unknown): void {
    if (!this.transport) throw new Error("not connected");
    this.transport.send(encodeMessage({ type: "ping", nonce }));
  }

  close(): void {
    this.closed = true;
    this.transport?.close();
    this.setStatus("closed");
  }

  private setStatus(status: "connecting" | "connected" | "reconnecting" | "closed") {
    this.state.connection = status;
    this.onConnectionChange?.(status);
  }

  private handleData(chunk: Uint8Array): void {
    const before = this.decoder.dropped;
    for (const message of this.decoder.push(chunk)) {
      this.dispatch(message);
    }
    for (let i = before; i < this.decoder.dropped; i += 1) {
      this.state.onMalformed();
    }
  }

  private dispatch(message: ServerMessage): void {
    switch (message.type) {
      case "hello":
        this.hello = message;
        break;
      case "frame":
        if (isFiniteFrame(message)) {
          this.state.onFrame(message, this.now());
        } else {
          this.state.onMalformed();
        }
        break;
      case "status":
        this.state.onStatus(message);
        break;
      default:
        break;
    }
    this.onMessage?.(message);
  }

  private handleClose(): void {
    if (this.closed) return;
    if (!this.options.reconnect) {
      this.setStatus("closed");
      return;
    }
    this.setStatus("reconnecting");
    const wait = this.backoffMs;
    this.backoffMs = Math.min(this.backoffMs * 2, this.options.backoffMaxMs ?? 15_000);
    const schedule = this.options.setTimer ?? ((fn: () => void, ms: number) => setTimeout(fn, ms));
    schedule(() => {
      if (!this.closed) {
        this.connect().catch(() => {
          /* handleClose reschedules */
        });
      }
    }, wait);
  }
}
