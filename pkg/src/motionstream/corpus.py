"""Clip and annotation persistence, dataset preparation, and the synthetic
motion-text corpus used for desk-scale tests and demos.

File formats (all versioned):

* motion clips: the binary container (format ``"clip"``) with a JSON header
  carrying frame rate, DoF/contact counts and the skeleton hash;
* annotation and text-stream files: one record per line,
  ``start_seconds<TAB>end_seconds<TAB>text`` under a ``# motionstream-spans v1``
  header line.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .container import read_container, write_container
from .errors import DimensionError, FormatError, SkeletonHashMismatchError, VersionMismatchError
from .features import (
    FeatureLayout,
    MotionFeatures,
    RawMotion,
    encode_features,
    mirror_motion,
    mirror_text,
)
from .kinematics import (
    DEFAULT_STAND_HEIGHT,
    SkeletonSpec,
    extract_foot_contacts,
    forward_kinematics_batch,
)

DEFAULT_FRAME_RATE = 50.0
SPANS_MAGIC = "# motionstream-spans v1"

DEFAULT_LABELS = ("stand", "walk", "wave left hand", "wave right hand", "punch")


# ---------------------------------------------------------------------------
# clips


@dataclass(frozen=True)
class MotionClip:
    """A raw motion plus the header metadata that travels with it."""

    motion: RawMotion
    frame_rate: float = DEFAULT_FRAME_RATE
    skeleton_hash: str = ""

    def __len__(self) -> int:
        return len(self.motion)


def save_clip(clip: MotionClip, path) -> None:
    meta = {
        "frame_rate": clip.frame_rate,
        "frame_count": len(clip),
        "n_q": clip.motion.n_q,
        "n_c": clip.motion.n_c,
        "skeleton_hash": clip.skeleton_hash,
    }
    write_container(
        path,
        "clip",
        meta,
        {
            "root_pos": clip.motion.root_pos,
            "root_quat": clip.motion.root_quat,
            "joint_pos": clip.motion.joint_pos,
            "contacts": clip.motion.contacts,
        },
    )


def load_clip(path) -> MotionClip:
    meta, arrays = read_container(path, "clip")
    try:
        motion = RawMotion(
            arrays["root_pos"], arrays["root_quat"], arrays["joint_pos"], arrays["contacts"]
        )
    except KeyError as exc:
        raise FormatError(f"{path}: clip missing array {exc}") from exc
    if meta.get("frame_count") != len(motion):
        raise FormatError(
            f"{path}: header declares {meta.get('frame_count')} frames, payload has {len(motion)}"
        )
    try:
        frame_rate = float(meta["frame_rate"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad frame rate: {exc!r}") from exc
    if frame_rate <= 0.0:
        raise FormatError(f"{path}: frame rate must be positive")
    return MotionClip(
        motion=motion,
        frame_rate=frame_rate,
        skeleton_hash=str(meta.get("skeleton_hash", "")),
    )


def save_features(features: MotionFeatures, init, path) -> None:
    """Persist an encoded feature sequence with its initial pose."""
    write_container(
        path,
        "features",
        {"n_q": features.layout.n_q, "n_c": features.layout.n_c},
        {"data": features.data, "init_pos": init.pos, "init_rot": init.rot},
    )


def load_features(path) -> tuple[MotionFeatures, "InitialPose"]:
    from .features import InitialPose  # local import to keep module deps one-way

    meta, arrays = read_container(path, "features")
    layout = FeatureLayout(int(meta["n_q"]), int(meta["n_c"]))
    return MotionFeatures(arrays["data"], layout), InitialPose(arrays["init_pos"], arrays["init_rot"])


def save_embeddings(motion_emb: np.ndarray, text_emb: np.ndarray, labels: list[str], path) -> None:
    """Persist paired motion/text embeddings for offline metric runs."""
    motion_emb = np.asarray(motion_emb, dtype=np.float64)
    text_emb = np.asarray(text_emb, dtype=np.float64)
    if motion_emb.shape != text_emb.shape or motion_emb.shape[0] != len(labels):
        raise DimensionError("embeddings and labels must align")
    write_container(
        path, "embeddings", {"labels": list(labels)},
        {"motion": motion_emb, "text": text_emb},
    )


def load_embeddings(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    meta, arrays = read_container(path, "embeddings")
    return arrays["motion"], arrays["text"], list(meta.get("labels", []))


def validate_clip(clip: MotionClip, skeleton: SkeletonSpec | None = None) -> dict:
    """Consistency report: quaternion norms, finiteness, binary contacts and
    (when a skeleton is given) hash and DoF agreement.  Raises on skeleton
    hash mismatch; everything else is reported."""
    m = clip.motion
    issues: list[str] = []
    norms = np.linalg.norm(m.root_quat, axis=1)
    bad_quat = np.where(np.abs(norms - 1.0) > 1e-9)[0]
    if bad_quat.size:
        issues.append(f"non-unit quaternion at frames {bad_quat[:5].tolist()}")
    nonbinary = np.where(~np.isin(m.contacts, (0.0, 1.0)))[0]
    if nonbinary.size:
        issues.append(f"non-binary contact flags at frames {np.unique(nonbinary)[:5].tolist()}")
    if skeleton is not None:
        if skeleton.n_q != m.n_q:
            issues.append(f"clip has {m.n_q} DoF, skeleton {skeleton.name} has {skeleton.n_q}")
        if clip.skeleton_hash and clip.skeleton_hash != skeleton.content_hash():
            raise SkeletonHashMismatchError(
                f"clip was recorded for skeleton {clip.skeleton_hash}, "
                f"got {skeleton.content_hash()} ({skeleton.name})"
            )
    return {"frames": len(m), "issues": issues, "ok": not issues}


# ---------------------------------------------------------------------------
# annotation spans and command timelines


@dataclass(frozen=True)
class AnnotationSpan:
    """A time-aligned text label; long-form labels use angle markers."""

    t_start: float
    t_end: float
    text: str

    def __post_init__(self):
        if not 0.0 <= self.t_start < self.t_end:
            raise DimensionError(f"invalid span [{self.t_start}, {self.t_end})")


@dataclass(frozen=True)
class CommandEvent:
    time: float
    text: str

    def __post_init__(self):
        if self.time < 0.0:
            raise DimensionError("command time must be non-negative")


@dataclass(frozen=True)
class CommandTimeline:
    """Time-sorted command events plus the session duration they cover."""

    events: tuple[CommandEvent, ...]
    duration: float
    idle_text: str = "stand"

    def __post_init__(self):
        times = [e.time for e in self.events]
        if times != sorted(times):
            raise DimensionError("timeline events must be time-sorted")

    def active_at(self, t: float) -> str:
        current = self.idle_text
        for event in self.events:
            if event.time <= t:
                current = event.text
            else:
                break
        return current

    def spans(self) -> list[AnnotationSpan]:
        out = []
        for i, event in enumerate(self.events):
            end = self.events[i + 1].time if i + 1 < len(self.events) else self.duration
            if end > event.time:
                out.append(AnnotationSpan(event.time, end, event.text))
        return out


def save_spans(spans: list[AnnotationSpan], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SPANS_MAGIC + "\n")
        for s in spans:
            fh.write(f"{s.t_start!r}\t{s.t_end!r}\t{s.text}\n")


def load_spans(path) -> list[AnnotationSpan]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != SPANS_MAGIC:
        raise VersionMismatchError(f"{path}: expected header {SPANS_MAGIC!r}")
    spans = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t", 2)
        if len(parts) != 3:
            raise FormatError(f"{path}:{i}: expected 'start<TAB>end<TAB>text'")
        try:
            spans.append(AnnotationSpan(float(parts[0]), float(parts[1]), parts[2]))
        except ValueError as exc:
            raise FormatError(f"{path}:{i}: {exc}") from exc
    return spans


def timeline_from_spans(spans: list[AnnotationSpan], idle_text: str = "stand") -> CommandTimeline:
    ordered = sorted(spans, key=lambda s: s.t_start)
    events = tuple(CommandEvent(s.t_start, s.text) for s in ordered)
    duration = max((s.t_end for s in ordered), default=0.0)
    return CommandTimeline(events, duration, idle_text)


def save_timeline(timeline: CommandTimeline, path) -> None:
    save_spans(timeline.spans(), path)


def load_timeline(path) -> CommandTimeline:
    return timeline_from_spans(load_spans(path))


def build_random_text_stream(
    vocabulary: list[str],
    rng: np.random.Generator,
    n_commands_range: tuple[int, int] = (3, 5),
    duration_choices: tuple[int, ...] = (6, 7, 8, 9, 10),
    pad_seconds: float = 2.0,
    pad_text: str = "stand",
) -> CommandTimeline:
    """Random command stream: a fixed 2 s stand, 3-5 sampled commands with
    durations drawn from {6..10} s, and a closing 2 s stand."""
    if not vocabulary:
        raise DimensionError("vocabulary must not be empty")
    n = int(rng.integers(n_commands_range[0], n_commands_range[1] + 1))
    words = [vocabulary[int(i)] for i in rng.integers(0, len(vocabulary), size=n)]
    durations = [float(duration_choices[int(i)]) for i in rng.integers(0, len(duration_choices), size=n)]
    events = [CommandEvent(0.0, pad_text)]
    t = pad_seconds
    for word, dur in zip(words, durations):
        events.append(CommandEvent(t, word))
        t += dur
    events.append(CommandEvent(t, pad_text))
    return CommandTimeline(tuple(events), t + pad_seconds)


# ---------------------------------------------------------------------------
# dataset segmentation


def segment_dataset(
    clips: list[MotionClip],
    min_len: int = 100,
    max_len: int = 2000,
    overlap_range: tuple[int, int] = (50, 200),
    rng: np.random.Generator | None = None,
) -> list[MotionClip]:
    """Split long sources into clips of ``[min_len, max_len]`` frames whose
    adjacent pieces overlap by an amount in ``overlap_range``.

    Sources below ``min_len`` pass through with a warning.  A final
    remainder shorter than ``min_len`` becomes a ``min_len`` window ending at
    the source end (its overlap still lands inside the allowed range).
    """
    if not (0 < min_len <= max_len) or not (0 < overlap_range[0] <= overlap_range[1] <= min_len * 2):
        raise DimensionError("invalid segmentation ranges")
    rng = rng or np.random.default_rng(0)
    out: list[MotionClip] = []
    for clip in clips:
        t = len(clip)
        if t < min_len:
            warnings.warn(f"source of {t} frames is below the {min_len}-frame minimum", stacklevel=2)
            out.append(clip)
            continue
        pieces: list[tuple[int, int]] = []
        s = 0
        while True:
            remaining = t - s
            if remaining <= max_len:
                if remaining >= min_len or not pieces:
                    pieces.append((s, t))
                else:
                    pieces.append((t - min_len, t))
                break
            length = int(rng.integers(min_len, max_len + 1))
            pieces.append((s, s + length))
            overlap = int(rng.integers(overlap_range[0], min(overlap_range[1], length - 1) + 1))
            s = s + length - overlap
        for start, stop in pieces:
            out.append(
                MotionClip(clip.motion.slice(start, stop), clip.frame_rate, clip.skeleton_hash)
            )
    return out


def build_eval_segments(
    features: MotionFeatures,
    annotations: list[AnnotationSpan],
    max_len: int = 200,
    frame_rate: float = DEFAULT_FRAME_RATE,
) -> list[tuple[MotionFeatures, str]]:
    """Chunk each annotated span into segments of at most ``max_len`` frames,
    each paired with the span's text.  Overlapping spans chunk independently."""
    total = len(features)
    out: list[tuple[MotionFeatures, str]] = []
    for span in annotations:
        start = max(0, int(round(span.t_start * frame_rate)))
        stop = min(total, int(round(span.t_end * frame_rate)))
        pos = start
        while pos < stop:
            end = min(pos + max_len, stop)
            out.append((features.slice(pos, end), span.text))
            pos = end
    return out


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """Deterministic recipe for the procedural motion-text corpus."""

    labels: tuple[str, ...] = DEFAULT_LABELS
    clip_length_range: tuple[int, int] = (240, 320)
    clips_per_label: int = 2
    noise_amplitude: float = 0.004
    seed: int = 0
    frame_rate: float = DEFAULT_FRAME_RATE
    mirror_augment: bool = False


@dataclass(frozen=True)
class LabeledClip:
    label: str
    motion: RawMotion


def _joint_group(skeleton: SkeletonSpec, *substrings: str) -> list[int]:
    hits = [
        i
        for i, name in enumerate(skeleton.joint_names)
        if all(s in name for s in substrings[:1]) and any(s in name for s in substrings[1:])
    ]
    if not hits:
        raise DimensionError(
            f"skeleton {skeleton.name} has no joints matching {substrings}"
        )
    return hits


def _base_motion(skeleton, t, rng, noise, root_xy=None, yaw=None, height=DEFAULT_STAND_HEIGHT):
    """Stand-height root plus joint noise; callers overwrite what they need."""
    pos = np.zeros((t, 3))
    pos[:, 2] = height
    if root_xy is not None:
        pos[:, :2] = root_xy
    yaw = np.zeros(t) if yaw is None else yaw
    quats = quat.from_yaw(yaw)
    q = noise * rng.standard_normal((t, skeleton.n_q))
    return pos, quats, q


def _with_contacts(skeleton: SkeletonSpec, pos, quats, q) -> RawMotion:
    link_pos, _ = forward_kinematics_batch(skeleton, pos, quats, q)
    ankles = np.stack([link_pos[:, i + 1, :] for i in skeleton.ankle_indices], axis=1)
    contacts = extract_foot_contacts(ankles)
    return RawMotion(pos, quats, q, contacts)


def _gen_stand(skeleton, t, rng, noise):
    pos, quats, q = _base_motion(skeleton, t, rng, noise)
    return _with_contacts(skeleton, pos, quats, q)


def _wave_arm(skeleton, t, rng, noise, side: str):
    pos, quats, q = _base_motion(skeleton, t, rng, noise)
    arm = _joint_group(skeleton, side, "shoulder_pitch", "elbow", "arm")
    phase = np.linspace(0.0, 2.0 * np.pi * 1.5 * t / 50.0, t, endpoint=False)
    for rank, j in enumerate(arm):
        q[:, j] += (-1.3 if rank == 0 else 0.6) + 0.45 * np.sin(phase + 0.7 * rank)
    return _with_contacts(skeleton, pos, quats, q)


def _gen_punch(skeleton, t, rng, noise):
    pos, quats, q = _base_motion(skeleton, t, rng, noise)
    arm = _joint_group(skeleton, "right", "shoulder_pitch", "elbow", "arm")
    phase = np.linspace(0.0, 2.0 * np.pi * 2.5 * t / 50.0, t, endpoint=False)
    thrust = np.clip(np.sin(phase), 0.0, None) ** 2
    for rank, j in enumerate(arm):
        q[:, j] += -1.6 * thrust if rank == 0 else 0.9 * (1.0 - thrust)
    torso = [i for i, n in enumerate(skeleton.joint_names) if "waist_yaw" in n or "torso" in n]
    for j in torso:
        q[:, j] += 0.25 * np.sin(phase)
    return _with_contacts(skeleton, pos, quats, q)


def _gen_walk(skeleton, t, rng, noise):
    """Exaggerated marching gait so the height-threshold contact rule sees
    clean alternating stance phases."""
    step_hz = 1.0
    speed = 0.45  # m/s forward
    tt = np.arange(t) / 50.0
    xy = np.stack([speed * tt, np.zeros(t)], axis=1)
    pos, quats, q = _base_motion(skeleton, t, rng, noise, root_xy=xy)
    phase = 2.0 * np.pi * step_hz * tt
    left_hip = _joint_group(skeleton, "left", "hip_pitch", "leg")
    right_hip = _joint_group(skeleton, "right", "hip_pitch", "leg")
    # swing = lifted leg; a knee bend (when present) raises the ankle past
    # the contact height threshold
    left_swing = np.clip(np.sin(phase), 0.0, None)
    right_swing = np.clip(np.sin(phase + np.pi), 0.0, None)
    q[:, left_hip[0]] += -1.15 * left_swing
    q[:, right_hip[0]] += -1.15 * right_swing
    for side, swing in (("left", left_swing), ("right", right_swing)):
        knees = [i for i, n in enumerate(skeleton.joint_names) if n == f"{side}_knee"]
        for j in knees:
            q[:, j] += 1.5 * swing
    return _with_contacts(skeleton, pos, quats, q)


_GENERATORS = {
    "stand": _gen_stand,
    "walk": _gen_walk,
    "wave left hand": lambda sk, t, rng, noise: _wave_arm(sk, t, rng, noise, "left"),
    "wave right hand": lambda sk, t, rng, noise: _wave_arm(sk, t, rng, noise, "right"),
    "punch": _gen_punch,
}


@dataclass(frozen=True)
class CorpusIndex:
    """Sliding (history, future) windows over the corpus with their labels.

    Supplies both the retrieval-denoiser key material and the
    nearest-template lookup used by the oracle embedder.
    """

    histories: np.ndarray  # (N, T_history, dim)
    futures: np.ndarray  # (N, T_future, dim)
    labels: tuple[str, ...]
    layout: FeatureLayout
    flat_futures: np.ndarray = field(init=False)

    def __post_init__(self):
        flat = self.futures.reshape(self.futures.shape[0], -1)
        object.__setattr__(self, "flat_futures", flat)

    def __len__(self) -> int:
        return self.futures.shape[0]

    @property
    def frames_per_block(self) -> int:
        return self.futures.shape[1]

    def nearest_window(self, block: np.ndarray) -> int:
        flat = np.asarray(block, dtype=np.float64).reshape(-1)
        if flat.shape[0] != self.flat_futures.shape[1]:
            raise DimensionError("query block does not match indexed window size")
        return int(np.argmin(np.linalg.norm(self.flat_futures - flat, axis=1)))

    def nearest_label(self, features: np.ndarray | MotionFeatures) -> str:
        """Label of the nearest window; longer queries vote chunk by chunk."""
        arr = features.data if isinstance(features, MotionFeatures) else np.asarray(features)
        t_f = self.frames_per_block
        if arr.shape[0] < t_f:
            pad = np.repeat(arr[-1:], t_f - arr.shape[0], axis=0)
            arr = np.concatenate([arr, pad], axis=0)
        votes: dict[str, int] = {}
        for start in range(0, arr.shape[0] - t_f + 1, t_f):
            label = self.labels[self.nearest_window(arr[start : start + t_f])]
            votes[label] = votes.get(label, 0) + 1
        return max(votes.items(), key=lambda kv: (kv[1], -list(votes).index(kv[0])))[0]


@dataclass(frozen=True)
class OracleEmbedder:
    """Label-aligned embedding provider built from the synthetic corpus.

    Texts map to unit basis vectors; motions map to the basis vector of
    their corpus-nearest label, so clean templates embed exactly onto their
    own label.
    """

    label_order: tuple[str, ...]
    index: CorpusIndex

    def embed_text(self, text: str) -> np.ndarray:
        if text not in self.label_order:
            raise DimensionError(f"unknown label {text!r}")
        vec = np.zeros(len(self.label_order))
        vec[self.label_order.index(text)] = 1.0
        return vec

    def embed_motion(self, features) -> np.ndarray:
        return self.embed_text(self.index.nearest_label(features))


@dataclass(frozen=True)
class SyntheticCorpus:
    spec: SyntheticCorpusSpec
    skeleton_name: str
    clips: tuple[LabeledClip, ...]
    index: CorpusIndex
    embedder: OracleEmbedder


def build_corpus_index(
    clips: list[LabeledClip],
    layout: FeatureLayout,
    t_history: int = 2,
    t_future: int = 8,
    stride: int = 4,
) -> CorpusIndex:
    histories, futures, labels = [], [], []
    span = t_history + t_future
    for clip in clips:
        feats, _ = encode_features(clip.motion)
        data = feats.data
        for start in range(0, len(feats) - span + 1, stride):
            histories.append(data[start : start + t_history])
            futures.append(data[start + t_history : start + span])
            labels.append(clip.label)
    if not futures:
        raise DimensionError("no corpus windows; clips are too short")
    return CorpusIndex(
        histories=np.stack(histories),
        futures=np.stack(futures),
        labels=tuple(labels),
        layout=layout,
    )


def generate_synthetic_corpus(
    spec: SyntheticCorpusSpec,
    skeleton: SkeletonSpec,
    t_history: int = 2,
    t_future: int = 8,
) -> SyntheticCorpus:
    """Procedural labeled clips plus the oracle embedder and window index.

    Bitwise reproducible from ``(spec, skeleton)``: every clip draws from a
    child generator derived from the recipe's seed.
    """
    rng = np.random.default_rng(spec.seed)
    clips: list[LabeledClip] = []
    for label in spec.labels:
        if label not in _GENERATORS:
            raise DimensionError(f"no procedural generator for label {label!r}")
        for _ in range(spec.clips_per_label):
            t = int(rng.integers(spec.clip_length_range[0], spec.clip_length_range[1] + 1))
            child = np.random.default_rng(rng.integers(0, 2**63 - 1))
            motion = _GENERATORS[label](skeleton, t, child, spec.noise_amplitude)
            clips.append(LabeledClip(label, motion))
            if spec.mirror_augment:
                clips.append(LabeledClip(mirror_text(label), mirror_motion(motion, skeleton)))
    layout = FeatureLayout(skeleton.n_q, 2)
    label_order = tuple(dict.fromkeys(c.label for c in clips))
    index = build_corpus_index(clips, layout, t_history, t_future)
    return SyntheticCorpus(
        spec=spec,
        skeleton_name=skeleton.name,
        clips=tuple(clips),
        index=index,
        embedder=OracleEmbedder(label_order, index),
    )
