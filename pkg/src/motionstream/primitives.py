"""Motion primitives, the autoregressive rollout driver, the self-rollout
curriculum assembler, and the rate-synchronizing motion buffer.

A primitive is a fixed window of ``T_history`` past plus ``T_future`` future
feature frames; adjacent primitives share their overlap exactly.  The
rollout driver calls an opaque block generator once per primitive, latching
the active text command at each block boundary, and integrates the root
anchor so block-wise decoding matches whole-sequence decoding bit for bit.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .corpus import CommandTimeline
from .errors import DimensionError, GeneratorError
from .features import (
    FeatureLayout,
    InitialPose,
    MotionFeatures,
    RawMotion,
    RawMotionFrame,
    advance_pose,
    decode_features,
    static_features,
)

T_HISTORY = 2
T_FUTURE = 8
N_PRIMITIVES = 4
FRAME_RATE = 50.0
UNCOND_TEXT_PROB = 0.1


@dataclass(frozen=True)
class MotionPrimitive:
    """``T_history`` past frames and ``T_future`` future frames."""

    history: np.ndarray
    future: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.history, dtype=np.float64)
        f = np.asarray(self.future, dtype=np.float64)
        object.__setattr__(self, "history", h)
        object.__setattr__(self, "future", f)
        if h.ndim != 2 or f.ndim != 2 or h.shape[1] != f.shape[1]:
            raise DimensionError("primitive history/future must share the feature width")


@dataclass(frozen=True)
class CurriculumBatchItem:
    """``n_prim`` consecutive primitives with self-rollout and text-mask flags."""

    primitives: tuple[MotionPrimitive, ...]
    rollout_flags: tuple[bool, ...]
    text: str
    uncond: bool = False

    def __post_init__(self):
        if len(self.primitives) != len(self.rollout_flags):
            raise DimensionError("one rollout flag per primitive required")


def curriculum_rollout_probability(step: int, total_steps: int, cap: float = 0.8) -> float:
    """Linear ramp ``min(cap, step / total_steps)``."""
    if total_steps <= 0:
        raise DimensionError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise DimensionError(f"step {step} outside 0..{total_steps}")
    if not 0.0 <= cap <= 1.0:
        raise DimensionError("cap must lie in [0, 1]")
    return min(cap, step / total_steps)


def segment_primitives(
    features: MotionFeatures,
    annotations=None,
    clip_label: str = "",
    t_history: int = T_HISTORY,
    t_future: int = T_FUTURE,
    n_prim: int = N_PRIMITIVES,
    stride: int | None = None,
    frame_rate: float = FRAME_RATE,
    rollout_prob: float = 0.0,
    uncond_prob: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[CurriculumBatchItem]:
    """Slice a feature sequence into curriculum items.

    Each item spans ``t_history + n_prim * t_future`` frames; windows start
    every ``stride`` frames (default: one window per span, no overlap).  The
    item's text is the annotation covering the window midpoint, falling back
    to ``clip_label``.  Sequences shorter than one span yield an empty list.
    Self-rollout flags are sampled per primitive with ``rollout_prob``
    (never for the first primitive, whose history has no predecessor);
    ``uncond_prob`` masks the text for classifier-free guidance training.
    """
    span = t_history + n_prim * t_future
    total = len(features)
    if total < span:
        return []
    stride = span if stride is None else int(stride)
    if stride < 1:
        raise DimensionError("stride must be positive")
    rng = rng or np.random.default_rng(0)
    data = features.data
    items = []
    for start in range(0, total - span + 1, stride):
        prims = []
        for i in range(n_prim):
            base = start + i * t_future
            prims.append(
                MotionPrimitive(
                    history=data[base : base + t_history].copy(),
                    future=data[base + t_history : base + t_history + t_future].copy(),
                )
            )
        text = clip_label
        if annotations:
            mid_t = (start + span // 2) / frame_rate
            for span_ann in annotations:
                if span_ann.t_start <= mid_t < span_ann.t_end:
                    text = span_ann.text
                    break
        flags = tuple(
            bool(i > 0 and rng.random() < rollout_prob) for i in range(n_prim)
        )
        uncond = bool(rng.random() < uncond_prob)
        items.append(CurriculumBatchItem(tuple(prims), flags, text, uncond))
    return items


# ---------------------------------------------------------------------------
# rollout


@runtime_checkable
class BlockGenerator(Protocol):
    """Produces the next ``frames_per_block`` feature frames.

    Must be deterministic given ``(history, text, rng state)``.
    """

    frames_per_block: int
    layout: FeatureLayout

    def generate(self, history: np.ndarray, text: str, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True)
class HoldBlockGenerator:
    """Zero-increment stub: repeats the last history frame with all
    increments cleared.  Useful as an idle generator and in tests."""

    layout: FeatureLayout
    frames_per_block: int = T_FUTURE

    def generate(self, history, text, rng) -> np.ndarray:
        lay = self.layout
        frame = np.asarray(history, dtype=np.float64)[-1].copy()
        frame[lay.dyaw] = 0.0
        frame[lay.dp_local] = 0.0
        frame[lay.dq] = 0.0
        return np.tile(frame, (self.frames_per_block, 1))


@dataclass(frozen=True)
class RolloutState:
    """History window, decoding anchor and bookkeeping between blocks."""

    history: np.ndarray
    pose: InitialPose
    frame_index: int
    active_command: str
    layout: FeatureLayout


def init_rollout(
    seed_pose: RawMotionFrame,
    t_history: int = T_HISTORY,
    idle_command: str = "stand",
) -> RolloutState:
    """Rollout state holding ``t_history`` copies of the static-pose frame."""
    feats, init = static_features(seed_pose, t_history)
    return RolloutState(
        history=feats.data,
        pose=init,
        frame_index=0,
        active_command=idle_command,
        layout=feats.layout,
    )


def rollout_step(
    state: RolloutState,
    generator: BlockGenerator,
    command_text: str,
    rng: np.random.Generator,
) -> tuple[MotionFeatures, RolloutState]:
    """One generation step: produce a block, roll the history forward and
    advance the decoding anchor through the block."""
    try:
        block = np.asarray(generator.generate(state.history, command_text, rng), dtype=np.float64)
    except Exception as exc:
        raise GeneratorError(
            f"generator failed at frame {state.frame_index} "
            f"(command {command_text!r}): {exc}"
        ) from exc
    t_future = generator.frames_per_block
    if block.shape != (t_future, state.layout.dim):
        raise GeneratorError(
            f"generator returned shape {block.shape}, expected ({t_future}, {state.layout.dim})"
        )
    features = MotionFeatures(block, state.layout)
    t_history = state.history.shape[0]
    new_state = RolloutState(
        history=block[-t_history:].copy(),
        pose=advance_pose(features, state.pose),
        frame_index=state.frame_index + t_future,
        active_command=command_text,
        layout=state.layout,
    )
    return features, new_state


@dataclass(frozen=True)
class StreamResult:
    motion: RawMotion
    frame_commands: tuple[str, ...]
    step_commands: tuple[str, ...]

    def __post_init__(self):
        if len(self.frame_commands) != len(self.motion):
            raise DimensionError("one command log entry per frame required")


def run_steps(
    step_commands: list[str],
    generator: BlockGenerator,
    rng: np.random.Generator,
    seed_pose: RawMotionFrame,
    n_frames: int | None = None,
    t_history: int = T_HISTORY,
) -> StreamResult:
    """Drive the rollout with an explicit per-step command list.

    This is the replay path: a recorded session's latched commands
    reproduce its frame stream exactly given the same seed and generator.
    """
    state = init_rollout(seed_pose, t_history)
    blocks: list[RawMotion] = []
    frame_commands: list[str] = []
    for text in step_commands:
        anchor = state.pose
        block, state = rollout_step(state, generator, text, rng)
        blocks.append(decode_features(block, anchor, binarize_contacts=True))
        frame_commands.extend([text] * generator.frames_per_block)
    motion = RawMotion.concatenate(blocks) if blocks else seed_pose.repeat(0)
    if n_frames is not None:
        motion = motion.slice(0, n_frames)
        frame_commands = frame_commands[:n_frames]
    return StreamResult(motion, tuple(frame_commands), tuple(step_commands))


def stream_session(
    timeline: CommandTimeline,
    generator: BlockGenerator,
    duration: float,
    rng: np.random.Generator,
    seed_pose: RawMotionFrame,
    frame_rate: float = FRAME_RATE,
    t_history: int = T_HISTORY,
) -> StreamResult:
    """Offline streaming session.

    Runs one generation step per ``frames_per_block`` frames; the command
    active at each step's start time is latched for the whole block.  The
    output is truncated to exactly ``round(duration * frame_rate)`` frames.
    """
    if duration <= 0.0:
        raise DimensionError("duration must be positive")
    n_frames = int(round(duration * frame_rate))
    t_future = generator.frames_per_block
    n_steps = math.ceil(n_frames / t_future)
    step_commands = [
        timeline.active_at(step * t_future / frame_rate) for step in range(n_steps)
    ]
    return run_steps(step_commands, generator, rng, seed_pose, n_frames, t_history)


# ---------------------------------------------------------------------------
# motion buffer


class MotionBuffer:
    """Bounded single-producer / single-consumer frame queue.

    Blocks are pushed whole and popped frame by frame.  Popping while empty
    counts an underrun and repeats the most recent frame (or the configured
    neutral frame before anything was seen); pushing past capacity drops the
    oldest block and counts an overrun.  Degradation is counted, never
    raised.
    """

    def __init__(self, neutral_frame, capacity_blocks: int = 3, frames_per_block: int = T_FUTURE):
        if capacity_blocks < 1 or frames_per_block < 1:
            raise DimensionError("buffer capacity and block size must be positive")
        self._neutral = neutral_frame
        self._capacity_frames = capacity_blocks * frames_per_block
        self._frames_per_block = frames_per_block
        self._frames: list = []
        self._last = None
        self._underruns = 0
        self._overruns = 0
        self._lock = threading.Lock()

    def push_block(self, frames) -> None:
        frames = list(frames)
        with self._lock:
            self._frames.extend(frames)
            while len(self._frames) > self._capacity_frames:
                del self._frames[: self._frames_per_block]
                self._overruns += 1

    def pop_frame(self):
        with self._lock:
            if self._frames:
                self._last = self._frames.pop(0)
                return self._last
            self._underruns += 1
            return self._last if self._last is not None else self._neutral

    def underrun_count(self) -> int:
        with self._lock:
            return self._underruns

    def overrun_count(self) -> int:
        with self._lock:
            return self._overruns

    def depth_frames(self) -> int:
        with self._lock:
            return len(self._frames)


@dataclass(frozen=True)
class ScheduleReport:
    frames_emitted: int
    generator_steps: int
    underruns: int
    overruns: int


def simulate_stream_schedule(
    duration_s: float,
    producer_period: float = T_FUTURE / FRAME_RATE,
    consumer_period: float = 1.0 / FRAME_RATE,
    frames_per_block: int = T_FUTURE,
    capacity_blocks: int = 3,
    skipped_producer_steps: frozenset[int] = frozenset(),
) -> ScheduleReport:
    """Discrete-event simulation of the producer/consumer schedule.

    Producer events land at multiples of ``producer_period`` and consumer
    events at multiples of ``consumer_period``; coincident events process
    the producer first (the generator owns the tick).  ``skipped_producer_steps``
    models stalls.
    """
    buffer = MotionBuffer(
        neutral_frame=("neutral",), capacity_blocks=capacity_blocks, frames_per_block=frames_per_block
    )
    n_push = math.ceil(duration_s / producer_period - 1e-12)
    n_pop = math.ceil(duration_s / consumer_period - 1e-12)
    events: list[tuple[float, int, int]] = []
    for k in range(n_push):
        events.append((k * producer_period, 0, k))  # priority 0: producer first
    for j in range(n_pop):
        events.append((j * consumer_period, 1, j))
    events.sort(key=lambda e: (e[0], e[1]))
    steps = 0
    pops = 0
    for _, kind, idx in events:
        if kind == 0:
            if idx not in skipped_producer_steps:
                steps += 1
                buffer.push_block([("frame", idx, i) for i in range(frames_per_block)])
        else:
            buffer.pop_frame()
            pops += 1
    return ScheduleReport(
        frames_emitted=pops,
        generator_steps=steps,
        underruns=buffer.underrun_count(),
        overruns=buffer.overrun_count(),
    )
