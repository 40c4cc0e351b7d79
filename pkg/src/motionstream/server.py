"""Interactive streaming service.

Topology: a network receive path updates an atomically swapped pending
command; a generator loop produces one feature block per period (6.25 Hz at
the defaults) into the motion buffer; a frame emitter pops and broadcasts
one frame message per 20 ms tick.  Commands latch at generator-step
boundaries.  The buffer decouples the emitter from generator stalls, which
degrade into counted underruns with hold-last frames, never a stalled
connection.

Wire protocol: line-delimited JSON over a stream socket, one session per
connection, versioned by the hello message.  Inbound::

    {"type": "command", "text": str, "client_time_ms": number}
    {"type": "ping", "nonce": any}

Outbound::

    {"type": "hello", "protocol_version", "skeleton", "frame_rate",
     "frames_per_block", "n_q", "n_c", "idle_command"}
    {"type": "frame", "frame_index", "time_ms", "root_position",
     "root_quaternion", "q", "contacts", "active_command"}
    {"type": "pong", "nonce", "server_time_ms"}
    {"type": "status", "buffer_depth", "underruns", "generator_period_ms"}
    {"type": "error", "code", "message"}

``client_time_ms`` is echoed into the log but never trusted; all latency
accounting uses the server's monotonic clock.
"""

from __future__ import annotations

import json
import socket
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .diffusion import (
    DEFAULT_CFG_SCALE,
    DEFAULT_DIFFUSION_STEPS,
    DiffusionBlockGenerator,
    HashedTextEmbedder,
    cosine_schedule,
    load_codec,
    load_retrieval_index,
)
from .errors import DimensionError, FormatError, ProtocolError
from .features import FeatureLayout, RawMotionFrame, decode_features, stand_frame
from .kinematics import DEFAULT_STAND_HEIGHT, SkeletonSpec, load_packaged_skeleton, load_skeleton
from .primitives import (
    FRAME_RATE,
    T_FUTURE,
    HoldBlockGenerator,
    MotionBuffer,
    init_rollout,
    rollout_step,
)

PROTOCOL_VERSION = 1
STATUS_EVERY_FRAMES = 50


@dataclass(frozen=True)
class SessionConfig:
    """Everything needed to stand up a serving session.

    ``frame_rate / frames_per_block`` is the generator rate; the defaults
    give 6.25 Hz generation under 50 Hz emission.
    """

    skeleton_path: str | None = None
    codec_path: str | None = None
    index_path: str | None = None
    generator: str = "retrieval"  # or "hold"
    frame_rate: float = FRAME_RATE
    frames_per_block: int = T_FUTURE
    cfg_scale: float = DEFAULT_CFG_SCALE
    diffusion_steps: int = DEFAULT_DIFFUSION_STEPS
    seed: int = 0
    host: str = "127.0.0.1"
    port: int = 0
    idle_command: str = "stand"
    stand_height: float = DEFAULT_STAND_HEIGHT
    prefill_blocks: int = 1
    buffer_capacity_blocks: int = 3

    @property
    def generator_period_s(self) -> float:
        return self.frames_per_block / self.frame_rate


def encode_message(message: dict) -> bytes:
    return json.dumps(message, separators=(",", ":")).encode("utf-8") + b"\n"


def skeleton_description(skeleton: SkeletonSpec) -> dict:
    """JSON-safe skeleton payload for the hello message."""
    return {
        "name": skeleton.name,
        "joint_names": list(skeleton.joint_names),
        "parents": skeleton.parents.tolist(),
        "axes": skeleton.axes.tolist(),
        "offsets": skeleton.offsets.tolist(),
        "ankle_indices": list(skeleton.ankle_indices),
        "hash": skeleton.content_hash(),
    }


class _Client:
    def __init__(self, conn: socket.socket, peer):
        self.conn = conn
        self.peer = peer
        self.lock = threading.Lock()
        self.alive = True

    def send(self, payload: bytes) -> bool:
        with self.lock:
            if not self.alive:
                return False
            try:
                self.conn.sendall(payload)
                return True
            except OSError:
                self.alive = False
                return False


class StreamServer:
    """One serving session broadcast to any number of clients.

    Commands from any client land in a single last-writer-wins slot and are
    latched at the next generator step.  Construct, :meth:`start`, interact,
    :meth:`stop`; or use :func:`serve` for a blocking CLI-style run.
    """

    def __init__(
        self,
        config: SessionConfig,
        generator,
        skeleton: SkeletonSpec,
        seed_pose: RawMotionFrame | None = None,
    ):
        if generator.frames_per_block != config.frames_per_block:
            raise DimensionError("generator block size disagrees with the session config")
        self.config = config
        self.generator = generator
        self.skeleton = skeleton
        self.seed_pose = seed_pose or stand_frame(skeleton, config.stand_height)
        self.log: list[dict] = []
        self.step_commands: list[str] = []
        self._log_lock = threading.Lock()
        self._command_lock = threading.Lock()
        self._pending_command = config.idle_command
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._socket: socket.socket | None = None
        self._epoch = 0.0
        self._prefilled = threading.Event()
        neutral = self._frame_payload_arrays(self.seed_pose, config.idle_command)
        self._buffer = MotionBuffer(
            neutral_frame=neutral,
            capacity_blocks=config.buffer_capacity_blocks,
            frames_per_block=config.frames_per_block,
        )
        self.address: tuple[str, int] | None = None

    # -- logging ------------------------------------------------------------

    def _now_ms(self) -> float:
        return (time.monotonic() - self._epoch) * 1e3

    def _log_event(self, **event) -> None:
        with self._log_lock:
            self.log.append(event)

    def _on_timing(self, stage: str, ms: float) -> None:
        self._log_event(kind="stage", stage=stage, ms=ms)

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> tuple[str, int]:
        self._socket = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._socket.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._socket.bind((self.config.host, self.config.port))
        self._socket.listen(8)
        self._socket.settimeout(0.2)
        self.address = self._socket.getsockname()[:2]
        self._epoch = time.monotonic()
        for target, name in (
            (self._accept_loop, "accept"),
            (self._generator_loop, "generator"),
            (self._emitter_loop, "emitter"),
        ):
            thread = threading.Thread(target=target, name=f"motionstream-{name}", daemon=True)
            thread.start()
            self._threads.append(thread)
        return self.address

    def stop(self) -> None:
        if self._stop.is_set():
            return
        self._stop.set()
        self._broadcast(self._status_message())  # flush final status
        for thread in self._threads:
            thread.join(timeout=2.0)
        with self._clients_lock:
            for client in self._clients:
                try:
                    client.conn.close()
                except OSError:
                    pass
            self._clients.clear()
        if self._socket is not None:
            self._socket.close()

    def run_forever(self) -> None:
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # -- network ------------------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._socket is not None
        while not self._stop.is_set():
            try:
                conn, peer = self._socket.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            client = _Client(conn, peer)
            client.send(encode_message(self._hello_message()))
            with self._clients_lock:
                self._clients.append(client)
            reader = threading.Thread(
                target=self._client_reader, args=(client,), name="motionstream-reader", daemon=True
            )
            reader.start()

    def _hello_message(self) -> dict:
        return {
            "type": "hello",
            "protocol_version": PROTOCOL_VERSION,
            "skeleton": skeleton_description(self.skeleton),
            "frame_rate": self.config.frame_rate,
            "frames_per_block": self.config.frames_per_block,
            "n_q": self.skeleton.n_q,
            "n_c": 2,
            "idle_command": self.config.idle_command,
        }

    def _client_reader(self, client: _Client) -> None:
        buffer = b""
        conn = client.conn
        conn.settimeout(0.2)
        while not self._stop.is_set() and client.alive:
            try:
                chunk = conn.recv(4096)
            except socket.timeout:
                continue
            except OSError:
                break
            if not chunk:
                break
            buffer += chunk
            while b"\n" in buffer:
                line, buffer = buffer.split(b"\n", 1)
                if line.strip():
                    self._handle_line(client, line)
        client.alive = False

    def _handle_line(self, client: _Client, line: bytes) -> None:
        try:
            message = json.loads(line.decode("utf-8"))
            if not isinstance(message, dict) or "type" not in message:
                raise ProtocolError("message must be an object with a 'type' field")
        except (UnicodeDecodeError, json.JSONDecodeError, ProtocolError) as exc:
            client.send(
                encode_message({"type": "error", "code": "protocol_error", "message": str(exc)})
            )
            return
        mtype = message["type"]
        if mtype == "command":
            text = message.get("text")
            if not isinstance(text, str) or not text:
                client.send(
                    encode_message(
                        {"type": "error", "code": "protocol_error", "message": "command needs text"}
                    )
                )
                return
            now = self._now_ms()
            with self._command_lock:
                self._pending_command = text
            self._log_event(
                kind="command",
                text=text,
                t_ms=now,
                client_time_ms=message.get("client_time_ms"),
                peer=str(client.peer),
            )
        elif mtype == "ping":
            now = self._now_ms()
            client.send(
                encode_message({"type": "pong", "nonce": message.get("nonce"), "server_time_ms": now})
            )
            self._log_event(kind="pong", nonce=message.get("nonce"), t_ms=now)
        else:
            client.send(
                encode_message(
                    {"type": "error", "code": "protocol_error", "message": f"unknown type {mtype!r}"}
                )
            )

    def _broadcast(self, message: dict) -> None:
        payload = encode_message(message)
        with self._clients_lock:
            clients = list(self._clients)
        dead = [c for c in clients if not c.send(payload)]
        if dead:
            with self._clients_lock:
                self._clients = [c for c in self._clients if c not in dead]

    # -- generation and emission ---------------------------------------------

    def _frame_payload_arrays(self, frame: RawMotionFrame, command: str) -> dict:
        return {
            "root_position": frame.root_pos.tolist(),
            "root_quaternion": frame.root_quat.tolist(),
            "q": frame.joint_pos.tolist(),
            "contacts": frame.contacts.tolist(),
            "active_command": command,
        }

    def _generator_loop(self) -> None:
        config = self.config
        rng = np.random.default_rng(config.seed)
        state = init_rollout(self.seed_pose, idle_command=config.idle_command)
        period = config.generator_period_s
        start = time.monotonic()
        step = 0
        while not self._stop.is_set():
            deadline = start + max(0, step - config.prefill_blocks) * period
            delay = deadline - time.monotonic()
            if delay > 0:
                if self._stop.wait(delay):
                    break
            with self._command_lock:
                latched = self._pending_command
            anchor = state.pose
            block, state = rollout_step(state, self.generator, latched, rng)
            raw = decode_features(block, anchor, binarize_contacts=True)
            frames = [
                self._frame_payload_arrays(raw.frame(i), latched) for i in range(len(raw))
            ]
            self._buffer.push_block(frames)
            self.step_commands.append(latched)
            self._log_event(kind="step", index=step, command=latched, t_ms=self._now_ms())
            if step + 1 >= config.prefill_blocks:
                self._prefilled.set()
            step += 1

    def _status_message(self) -> dict:
        return {
            "type": "status",
            "buffer_depth": self._buffer.depth_frames(),
            "underruns": self._buffer.underrun_count(),
            "generator_period_ms": self.config.generator_period_s * 1e3,
        }

    def _emitter_loop(self) -> None:
        config = self.config
        period = 1.0 / config.frame_rate
        self._prefilled.wait(timeout=5.0)
        start = time.monotonic()
        frame_index = 0
        while not self._stop.is_set():
            deadline = start + frame_index * period
            delay = deadline - time.monotonic()
            if delay > 0:
                if self._stop.wait(delay):
                    break
            payload = self._buffer.pop_frame()
            now = self._now_ms()
            message = {"type": "frame", "frame_index": frame_index, "time_ms": now, **payload}
            self._broadcast(message)
            self._log_event(
                kind="frame", frame_index=frame_index, t_ms=now,
                active_command=payload["active_command"],
            )
            frame_index += 1
            if frame_index % STATUS_EVERY_FRAMES == 0:
                self._broadcast(self._status_message())


# ---------------------------------------------------------------------------
# latency analysis


def measure_latency(log: list[dict], min_events: int = 100) -> dict:
    """Per-stage latency statistics from a session log.

    Stages are mean/sd over their samples; ``end_to_end`` measures command
    receipt to the first emitted frame carrying the new active command.
    Raises when a present stage (or end-to-end) has fewer than
    ``min_events`` samples.
    """
    stages: dict[str, list[float]] = {}
    commands = []
    frames = []
    pongs = 0
    for event in log:
        kind = event.get("kind")
        if kind == "stage":
            stages.setdefault(event["stage"], []).append(float(event["ms"]))
        elif kind == "command":
            commands.append(event)
        elif kind == "frame":
            frames.append(event)
        elif kind == "pong":
            pongs += 1
    end_to_end: list[float] = []
    for cmd in commands:
        for frame in frames:
            if frame["t_ms"] >= cmd["t_ms"] and frame["active_command"] == cmd["text"]:
                end_to_end.append(frame["t_ms"] - cmd["t_ms"])
                break
    if end_to_end:
        stages = dict(stages)
        stages["end_to_end"] = end_to_end
    report: dict = {"stages": {}, "pong_count": pongs}
    deficient = [name for name, vals in stages.items() if len(vals) < min_events]
    if deficient:
        raise DimensionError(
            f"stages {deficient} have fewer than {min_events} events"
        )
    for name, vals in stages.items():
        arr = np.asarray(vals)
        report["stages"][name] = {
            "mean_ms": float(arr.mean()),
            "sd_ms": float(arr.std(ddof=0)),
            "count": int(arr.size),
        }
    return report


# ---------------------------------------------------------------------------
# session assembly


def build_generator(config: SessionConfig, on_timing=None):
    """Instantiate the configured block generator from its artifacts."""
    if config.generator == "hold":
        skeleton = load_session_skeleton(config)
        layout = FeatureLayout(skeleton.n_q, 2)
        return HoldBlockGenerator(layout, config.frames_per_block)
    if config.generator != "retrieval":
        raise FormatError(f"unknown generator {config.generator!r}")
    if not config.codec_path or not config.index_path:
        raise FormatError("retrieval generator needs codec and index paths")
    codec = load_codec(config.codec_path)
    denoiser = load_retrieval_index(config.index_path)
    embedder = HashedTextEmbedder(dim=denoiser.text_keys.shape[1])
    schedule = cosine_schedule(config.diffusion_steps)
    return DiffusionBlockGenerator(
        codec=codec,
        denoiser=denoiser,
        schedule=schedule,
        embedder=embedder,
        layout=codec.layout,
        cfg_scale=config.cfg_scale,
        on_timing=on_timing,
    )


def load_session_skeleton(config: SessionConfig) -> SkeletonSpec:
    path = config.skeleton_path
    if not path:
        return load_packaged_skeleton("humanoid_29dof")
    if path in ("humanoid_29dof", "five_dof"):
        return load_packaged_skeleton(path)
    return load_skeleton(path)


def serve(config: SessionConfig) -> None:
    """Blocking entry point: load artifacts, bind, and stream until
    interrupted.  Artifact load failures refuse to start."""
    skeleton = load_session_skeleton(config)
    generator = build_generator(config)
    if getattr(generator, "layout", None) is not None and generator.layout.n_q != skeleton.n_q:
        raise FormatError(
            f"artifacts were built for {generator.layout.n_q} DoF, skeleton has {skeleton.n_q}"
        )
    server = StreamServer(config, generator, skeleton)
    if isinstance(generator, DiffusionBlockGenerator):
        generator.on_timing = server._on_timing
    address = server.start()
    print(json.dumps({"event": "listening", "host": address[0], "port": address[1]}), flush=True)
    try:
        while True:
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
