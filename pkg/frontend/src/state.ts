/**
 * Client session state: a frame ring buffer the renderer reads from,
 * append-only command history, latency samples (send to first frame
 * carrying the new active command) and buffer telemetry.
 */

import type { FrameMessage, StatusMessage } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "reconnecting" | "closed";

export interface CommandRecord {
  text: string;
  sentAtMs: number;
  latchedFrameIndex: number | null;
  latencyMs: number | null;
}

export interface Telemetry {
  bufferDepth: number;
  underruns: number;
  generatorPeriodMs: number;
}

export class SessionState {
  readonly ringSize: number;
  connection: ConnectionStatus = "connecting";
  activeCommand = "";
  droppedFrames = 0;
  telemetry: Telemetry = { bufferDepth: 0, underruns: 0, generatorPeriodMs: 0 };

  private readonly ring: FrameMessage[] = [];
  private readonly history: CommandRecord[] = [];
  private lastFrameIndex = -1;

  constructor(ringSize = 256) {
    this.ringSize = ringSize;
  }

  /** Rendering reads only from this buffer. */
  latestFrame(): FrameMessage | null {
    return this.ring.length ? this.ring[this.ring.length - 1] : null;
  }

  frames(): readonly FrameMessage[] {
    return this.ring;
  }

  /** Append-only view of everything the user sent. */
  commandHistory(): readonly CommandRecord[] {
    return this.history;
  }

  latencySamples(): number[] {
    return this.history
      .map((r) => r.latencyMs)
      .filter((v): v is number => v !== null);
  }

  recordCommandSent(text: string, nowMs: number): void {
    this.history.push({ text, sentAtMs: nowMs, latchedFrameIndex: null, latencyMs: null });
  }

  onFrame(frame: FrameMessage, nowMs: number): void {
    if (frame.frame_index <= this.lastFrameIndex) {
      this.droppedFrames += 1; // stale or duplicated frame
      return;
    }
    this.lastFrameIndex = frame.frame_index;
    this.ring.push(frame);
    if (this.ring.length > this.ringSize) {
      this.ring.splice(0, this.ring.length - this.ringSize);
    }
    if (frame.active_command !== this.activeCommand) {
      this.activeCommand = frame.active_command;
      for (const record of this.history) {
        if (record.latchedFrameIndex === null && record.text === frame.active_command) {
          record.latchedFrameIndex = frame.frame_index;
          record.latencyMs = nowMs - record.sentAtMs;
          break;
        }
      }
    }
  }

  onStatus(status: StatusMessage): void {
    this.telemetry = {
      bufferDepth: status.buffer_depth,
      underruns: status.underruns,
      generatorPeriodMs: status.generator_period_ms,
    };
  }

  onMalformed(): void {
    this.droppedFrames += 1;
  }
}
