/**
 * 2.5-D orthographic skeleton view plus HUD and command timeline strip.
 * Pure drawing: reads snapshots of the session state each animation tick.
 */

import { boneSegments, forwardKinematics } from "./fk.js";
import type { Vec3 } from "./fk.js";
import type { SkeletonDescription } from "./protocol.js";
import type { SessionState } from "./state.js";

const VIEW_YAW = Math.PI / 5; // fixed three-quarter view
const VIEW_TILT = 0.42;

function project(p: Vec3, scale: number, cx: number, cy: number): [number, number] {
  const x = p[0] * Math.cos(VIEW_YAW) - p[1] * Math.sin(VIEW_YAW);
  const y = p[0] * Math.sin(VIEW_YAW) + p[1] * Math.cos(VIEW_YAW);
  const sx = cx + x * scale;
  const sy = cy - (p[2] + y * VIEW_TILT) * scale;
  return [sx, sy];
}

function commandColor(text: string): string {
  let h = 0;
  for (let i = 0; i < text.length; i += 1) h = (h * 31 + text.charCodeAt(i)) >>> 0;
  return `hsl(${h % 360} 65% 55%)`;
}

export class Renderer {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly timeline: HTMLElement,
    private readonly hud: HTMLElement,
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas unavailable");
    this.ctx = ctx;
  }

  draw(state: SessionState, skeleton: SkeletonDescription | null): void {
    const { width, height } = this.canvas;
    const ctx = this.ctx;
    ctx.clearRect(0, 0, width, height);
    const frame = state.latestFrame();
    if (!skeleton || !frame) {
      ctx.fillStyle = "#889";
      ctx.font = "14px system-ui";
      ctx.fillText("waiting for frames...", 16, 24);
      this.drawHud(state);
      return;
    }

    const scale = height / 2.4;
    const cx = width / 2;
    const cy = height * 0.92;
    const pose = forwardKinematics(
      skeleton,
      // keep the figure centered: drop the world XY drift, keep height
      [0, 0, frame.root_position[2]],
      frame.root_quaternion,
      frame.q,
    );

    // ground line
    ctx.strokeStyle = "#2c2f3a";
    ctx.beginPath();
    ctx.moveTo(0, cy);
    ctx.lineTo(width, cy);
    ctx.stroke();

    ctx.lineWidth = 3;
    ctx.strokeStyle = "#7ad0ff";
    for (const [a, b] of boneSegments(skeleton)) {
      const [x1, y1] = project(pose.positions[a], scale, cx, cy);
      const [x2, y2] = project(pose.positions[b], scale, cx, cy);
      ctx.beginPath();
      ctx.moveTo(x1, y1);
      ctx.lineTo(x2, y2);
      ctx.stroke();
    }
    ctx.fillStyle = "#ffffff";
    for (const p of pose.positions) {
      const [x, y] = project(p, scale, cx, cy);
      ctx.beginPath();
      ctx.arc(x, y, 3, 0, 2 * Math.PI);
      ctx.fill();
    }

    ctx.fillStyle = "#cfd6e4";
    ctx.font = "16px system-ui";
    ctx.fillText(frame.active_command || "(idle)", 16, 28);
    this.drawHud(state);
    this.drawTimeline(state);
  }

  private drawHud(state: SessionState): void {
    const samples = state.latencySamples();
    const last = samples.length ? `${Math.round(samples[samples.length - 1])} ms` : "-";
    this.hud.textContent =
      `status ${state.connection} | latency ${last} | ` +
      `buffer ${state.telemetry.bufferDepth} frames | ` +
      `underruns ${state.telemetry.underruns} | dropped ${state.droppedFrames}`;
  }

  private drawTimeline(state: SessionState): void {
    const history = state.commandHistory();
    const recent = history.slice(-12);
    this.timeline.replaceChildren(
      ...recent.map((record) => {
        const span = document.createElement("span");
        span.className = "cmd";
        span.style.background = commandColor(record.text);
        const latency = record.latencyMs === null ? "..." : `${Math.round(record.latencyMs)} ms`;
        span.textContent = `${record.text} (${latency})`;
        return span;
      }),
    );
  }
}
