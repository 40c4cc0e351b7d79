/**
 * Headless client integration: connect -> command -> frame with the new
 * command against a real local server, plus reconnect backoff behavior
 * against a scripted transport.
 */

import { spawn } from "node:child_process";
import type { ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface } from "node:readline";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SessionClient } from "../src/client.js";
import type { Transport } from "../src/client.js";
import { forwardKinematics } from "../src/fk.js";
import { NodeTcpTransport } from "../src/transport_node.js";

let server: ChildProcessWithoutNullStreams;
let port = 0;
let host = "127.0.0.1";

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-m", "motionstream.cli", "serve", "--skeleton", "five_dof", "--generator", "hold", "--port", "0"],
    { cwd: "..", stdio: "pipe" },
  );
  const lines = createInterface({ input: server.stdout });
  const first = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server did not announce itself")), 15_000);
    lines.once("line", (line) => {
      clearTimeout(timer);
      resolve(line);
    });
    server.once("exit", (code) => reject(new Error(`server exited early (${code})`)));
  });
  const info = JSON.parse(first);
  host = info.host;
  port = info.port;
}, 20_000);

afterAll(() => {
  server?.kill();
});

function waitFor<T>(predicate: () => T | null, timeoutMs: number, label: string): Promise<T> {
  return new Promise((resolve, reject) => {
    const started = Date.now();
    const poll = () => {
      const value = predicate();
      if (value !== null) return resolve(value);
      if (Date.now() - started > timeoutMs) return reject(new Error(`timeout: ${label}`));
      setTimeout(poll, 10);
    };
    poll();
  });
}

describe("scripted headless session", () => {
  it("completes connect -> command -> frame-with-new-command with latency in [160 ms, 2 s)", async () => {
    const client = new SessionClient(() => new NodeTcpTransport(host, port));
    await client.connect();
    expect(client.state.connection).toBe("connected");

    await waitFor(() => client.hello, 5_000, "hello");
    expect(client.skeleton?.joint_names.length).toBe(5);
    expect(client.hello?.protocol_version).toBe(1);

    // wait for streaming before issuing the command
    await waitFor(() => client.state.latestFrame(), 5_000, "first frame");

    client.sendCommand("wave left hand");
    const record = await waitFor(
      () => {
        const [r] = client.state.commandHistory();
        return r && r.latencyMs !== null ? r : null;
      },
      5_000,
      "command latch",
    );
    expect(record.latchedFrameIndex! % 8).toBe(0);
    expect(record.latencyMs!).toBeGreaterThanOrEqual(160);
    expect(record.latencyMs!).toBeLessThan(2_000);

    // the live frame drives client-side FK using the hello skeleton
    const frame = client.state.latestFrame()!;
    const pose = forwardKinematics(
      client.skeleton!,
      frame.root_position,
      frame.root_quaternion,
      frame.q,
    );
    expect(pose.positions.length).toBe(6);
    for (const p of pose.positions) {
      for (const v of p) expect(Number.isFinite(v)).toBe(true);
    }
    client.close();
  }, 20_000);

  it("receives status telemetry", async () => {
    const client = new SessionClient(() => new NodeTcpTransport(host, port));
    await client.connect();
    await waitFor(
      () => (client.state.telemetry.generatorPeriodMs > 0 ? true : null),
      10_000,
      "status",
    );
    expect(client.state.telemetry.generatorPeriodMs).toBe(160);
    client.close();
  }, 15_000);
});

describe("reconnect with backoff", () => {
  class FlakyTransport implements Transport {
    constructor(private readonly failures: { count: number }) {}

    async connect(): Promise<void> {
      if (this.failures.count > 0) {
        this.failures.count -= 1;
        throw new Error("connection refused");
      }
    }

    send(): void {}

    close(): void {}
  }

  it("schedules growing delays and recovers", async () => {
    const delays: number[] = [];
    const pending: (() => void)[] = [];
    const failures = { count: 3 };
    const client = new SessionClient(() => new FlakyTransport(failures), {
      reconnect: true,
      backoffInitialMs: 100,
      backoffMaxMs: 10_000,
      setTimer: (fn, ms) => {
        delays.push(ms);
        pending.push(fn);
        return 0;
      },
    });
    await expect(client.connect()).rejects.toThrow("connection refused");
    // drain the scheduled reconnects deterministically
    while (pending.length) {
      const fn = pending.shift()!;
      await Promise.resolve(fn());
      await new Promise((r) => setTimeout(r, 0));
    }
    expect(delays).toEqual([100, 200, 400]);
    expect(client.state.connection).toBe("connected");
    client.close();
  });
});
