/**
 * Wire protocol: line-delimited JSON over a full-duplex stream.
 *
 * The encoder guarantees every outbound payload is valid UTF-8 and
 * newline-terminated; the decoder reassembles lines across chunk
 * boundaries and counts (rather than throws on) malformed input.
 */

export interface HelloMessage {
  type: "hello";
  protocol_version: number;
  skeleton: SkeletonDescription;
  frame_rate: number;
  frames_per_block: number;
  n_q: number;
  n_c: number;
  idle_command: string;
}

export interface FrameMessage {
  type: "frame";
  frame_index: number;
  time_ms: number;
  root_position: [number, number, number];
  root_quaternion: [number, number, number, number];
  q: number[];
  contacts: number[];
  active_command: string;
}

export interface StatusMessage {
  type: "status";
  buffer_depth: number;
  underruns: number;
  generator_period_ms: number;
}

export interface PongMessage {
  type: "pong";
  nonce: unknown;
  server_time_ms: number;
}

export interface ErrorMessage {
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage =
  | HelloMessage
  | FrameMessage
  | StatusMessage
  | PongMessage
  | ErrorMessage;

export interface SkeletonDescription {
  name: string;
  joint_names: string[];
  parents: number[];
  axes: [number, number, number][];
  offsets: [number, number, number][];
  ankle_indices: [number, number];
  hash: string;
}

export interface CommandMessage {
  type: "command";
  text: string;
  client_time_ms: number;
}

export interface PingMessage {
  type: "ping";
  nonce: unknown;
}

export type ClientMessage = CommandMessage | PingMessage;

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: false });

/** Serialize one client message: UTF-8 bytes, always newline-terminated. */
export function encodeMessage(message: ClientMessage): Uint8Array {
  return encoder.encode(JSON.stringify(message) + "\n");
}

const KNOWN_TYPES = new Set(["hello", "frame", "status", "pong", "error"]);

/** Incremental newline-framed JSON decoder. */
export class LineDecoder {
  private buffer = "";
  dropped = 0;

  push(chunk: Uint8Array | string): ServerMessage[] {
    this.buffer +=
      typeof chunk === "string" ? chunk : decoder.decode(chunk, { stream: true });
    const out: ServerMessage[] = [];
    let index = this.buffer.indexOf("\n");
    while (index >= 0) {
      const line = this.buffer.slice(0, index).trim();
      this.buffer = this.buffer.slice(index + 1);
      if (line.length > 0) {
        const parsed = this.parseLine(line);
        if (parsed) out.push(parsed);
      }
      index = this.buffer.indexOf("\n");
    }
    return out;
  }

  private parseLine(line: string): ServerMessage | null {
    try {
      const value = JSON.parse(line) as { type?: unknown };
      if (
        value !== null &&
        typeof value === "object" &&
        typeof value.type === "string" &&
        KNOWN_TYPES.has(value.type)
      ) {
        return value as ServerMessage;
      }
    } catch {
      // fall through to the drop counter
    }
    this.dropped += 1;
    return null;
  }
}

export function isFiniteFrame(frame: FrameMessage): boolean {
  const numbers = [
    frame.frame_index,
    frame.time_ms,
    ...frame.root_position,
    ...frame.root_quaternion,
    ...frame.q,
    ...frame.contacts,
  ];
  return numbers.every((v) => typeof v === "number" && Number.isFinite(v));
}
