/** Browser entry point: wire the transport, state, renderer and input box. */

import { SessionClient } from "./client.js";
import { Renderer } from "./render.js";
import { BrowserWsTransport } from "./transport_ws.js";

function required<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

const canvas = required<HTMLCanvasElement>("view");
const hud = required<HTMLDivElement>("hud");
const timeline = required<HTMLDivElement>("timeline");
const input = required<HTMLInputElement>("command");
const banner = required<HTMLDivElement>("banner");

const params = new URLSearchParams(window.location.search);
const bridgeUrl = params.get("bridge") ?? "ws://127.0.0.1:7654";

const client = new SessionClient(() => new BrowserWsTransport(bridgeUrl), {
  reconnect: true,
  backoffInitialMs: 500,
  backoffMaxMs: 10_000,
});
const renderer = new Renderer(canvas, timeline, hud);

client.onConnectionChange = (status) => {
  banner.textContent = status === "connected" ? "" : `connection: ${status}`;
  banner.style.display = status === "connected" ? "none" : "block";
};

input.addEventListener("keydown", (event) => {
  if (event.key === "Enter" && input.value.trim()) {
    client.sendCommand(input.value.trim());
    input.value = "";
  }
});

function tick() {
  renderer.draw(client.state, client.skeleton);
  requestAnimationFrame(tick);
}

client.connect().catch(() => {
  /* reconnect loop takes over */
});
requestAnimationFrame(tick);
