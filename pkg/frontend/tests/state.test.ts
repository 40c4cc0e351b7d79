/** Session state: ring buffer, append-only history, latency accounting. */

import { describe, expect, it } from "vitest";

import type { FrameMessage } from "../src/protocol.js";
import { SessionState } from "../src/state.js";

function frame(index: number, command: string): FrameMessage {
  return {
    type: "frame",
    frame_index: index,
    time_ms: index * 20,
    root_position: [0, 0, 0.79],
    root_quaternion: [1, 0, 0, 0],
    q: [0, 0, 0, 0, 0],
    contacts: [1, 1],
    active_command: command,
  };
}

describe("SessionState", () => {
  it("keeps only the newest ringSize frames and renders from the latest", () => {
    const state = new SessionState(4);
    for (let i = 0; i < 10; i += 1) state.onFrame(frame(i, "stand"), i * 20);
    expect(state.frames().length).toBe(4);
    expect(state.latestFrame()?.frame_index).toBe(9);
    expect(state.frames()[0].frame_index).toBe(6);
  });

  it("counts stale frames as dropped instead of rewinding", () => {
    const state = new SessionState();
    state.onFrame(frame(5, "stand"), 100);
    state.onFrame(frame(4, "stand"), 120);
    expect(state.droppedFrames).toBe(1);
    expect(state.latestFrame()?.frame_index).toBe(5);
  });

  it("measures latency from send to the first frame with the new command", () => {
    const state = new SessionState();
    state.onFrame(frame(0, "stand"), 0);
    state.recordCommandSent("walk", 90);
    state.onFrame(frame(1, "stand"), 100);
    state.onFrame(frame(8, "walk"), 260);
    state.onFrame(frame(9, "walk"), 280);
    const [record] = state.commandHistory();
    expect(record.latchedFrameIndex).toBe(8);
    expect(record.latencyMs).toBe(170);
    expect(state.latencySamples()).toEqual([170]);
  });

  it("keeps history append-only across repeated commands", () => {
    const state = new SessionState();
    state.recordCommandSent("walk", 0);
    state.recordCommandSent("walk", 50);
    state.onFrame(frame(8, "walk"), 200);
    expect(state.commandHistory().length).toBe(2);
    // only the first unlatched matching record is resolved per switch
    expect(state.commandHistory()[0].latencyMs).toBe(200);
    expect(state.commandHistory()[1].latencyMs).toBeNull();
  });

  it("tracks buffer telemetry from status messages", () => {
    const state = new SessionState();
    state.onStatus({ type: "status", buffer_depth: 13, underruns: 2, generator_period_ms: 160 });
    expect(state.telemetry).toEqual({ bufferDepth: 13, underruns: 2, generatorPeriodMs: 160 });
  });
});
