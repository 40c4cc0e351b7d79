"""Skeleton model and forward kinematics.

A skeleton is a topologically sorted tree of single-DoF revolute joints.
Link ``i + 1`` is rigidly offset from its parent link and rotates by ``q[i]``
about a fixed axis expressed in the parent frame.  Link 0 is the root.

The on-disk skeleton description is a line-oriented text file::

    # motionstream-skeleton v1
    name <identifier>
    ankles <left_joint_index> <right_joint_index>
    joints <n_q>
    <name> <parent> <ax> <ay> <az> <ox> <oy> <oz> <mirror_index> <mirror_sign>

with one joint line per DoF, in topological order.  ``parent`` is the joint
index of the parent (-1 when attached to the root link).  ``mirror_index`` /
``mirror_sign`` describe the sagittal-mirror involution on joint angles.
"""

from __future__ import annotations

import hashlib
import importlib.resources
from dataclasses import dataclass

import numpy as np

from . import quat
from .errors import DimensionError, FormatError, SkeletonError, VersionMismatchError

SKELETON_MAGIC = "# motionstream-skeleton v1"

# contact rule defaults: squared per-frame displacement and ankle height
CONTACT_EPS_VEL = 0.002
CONTACT_EPS_HEIGHT = 0.2


@dataclass(frozen=True)
class SkeletonSpec:
    """Immutable description of a revolute-joint tree.

    ``parents[i] < i`` for all ``i`` (topological order), axes are unit
    vectors in the parent frame and offsets are in meters.
    """

    name: str
    joint_names: tuple[str, ...]
    parents: np.ndarray
    axes: np.ndarray
    offsets: np.ndarray
    ankle_indices: tuple[int, int]
    mirror_perm: np.ndarray
    mirror_signs: np.ndarray

    def __post_init__(self):
        n = len(self.joint_names)
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=np.int64))
        object.__setattr__(self, "axes", np.asarray(self.axes, dtype=np.float64))
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=np.float64))
        object.__setattr__(self, "mirror_perm", np.asarray(self.mirror_perm, dtype=np.int64))
        object.__setattr__(self, "mirror_signs", np.asarray(self.mirror_signs, dtype=np.float64))
        if self.parents.shape != (n,) or self.axes.shape != (n, 3) or self.offsets.shape != (n, 3):
            raise SkeletonError(f"inconsistent joint arrays for {n} joints")
        for i, p in enumerate(self.parents):
            if not -1 <= p < i:
                raise SkeletonError(f"joint {i} has parent {p}; joints must be topologically sorted")
        norms = np.linalg.norm(self.axes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise SkeletonError(f"axis of joint {bad} is not unit length (norm {norms[bad]!r})")
        if self.mirror_perm.shape != (n,) or self.mirror_signs.shape != (n,):
            raise SkeletonError("mirror map must cover every joint")
        if sorted(self.mirror_perm.tolist()) != list(range(n)):
            raise SkeletonError("mirror_perm is not a permutation")
        for i in range(n):
            j = int(self.mirror_perm[i])
            if int(self.mirror_perm[j]) != i or self.mirror_signs[i] * self.mirror_signs[j] != 1.0:
                raise SkeletonError("mirror map is not an involution")
        if not all(0 <= a < n for a in self.ankle_indices):
            raise SkeletonError(f"ankle indices {self.ankle_indices} out of range")

    @property
    def n_q(self) -> int:
        return len(self.joint_names)

    @property
    def n_links(self) -> int:
        return self.n_q + 1

    def mirror_q(self, q: np.ndarray) -> np.ndarray:
        """Apply the sagittal mirror map to joint angles (last axis)."""
        q = np.asarray(q, dtype=np.float64)
        return self.mirror_signs * q[..., self.mirror_perm]

    def content_hash(self) -> str:
        """Stable 16-hex-digit digest of the geometric content."""
        h = hashlib.sha256()
        h.update(serialize_skeleton(self).encode("utf-8"))
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class BodyPose:
    """World pose of every link; index 0 is the root link."""

    link_positions: np.ndarray
    link_orientations: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.link_positions, dtype=np.float64)
        o = np.asarray(self.link_orientations, dtype=np.float64)
        object.__setattr__(self, "link_positions", p)
        object.__setattr__(self, "link_orientations", o)
        if p.shape[:-1] != o.shape[:-1] or p.shape[-1] != 3 or o.shape[-1] != 4:
            raise DimensionError("link positions and orientations do not align")
        norms = np.linalg.norm(o, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise DimensionError("link orientations must be unit quaternions")


def forward_kinematics(
    skeleton: SkeletonSpec,
    root_position: np.ndarray,
    root_orientation: np.ndarray,
    q: np.ndarray,
) -> BodyPose:
    """Pose of every link for one configuration.

    Link ``i + 1`` is oriented ``R_parent * rot(axis[i], q[i])`` and placed at
    ``parent_position + R_child @ offset[i]``: the joint spins at the parent
    origin and the link offset hangs off the rotated frame, so a quarter turn
    about z swings a child offset at (1, 0, 0) to (0, 1, 0).
    """
    positions, orientations = forward_kinematics_batch(
        skeleton,
        np.asarray(root_position, dtype=np.float64)[None],
        np.asarray(root_orientation, dtype=np.float64)[None],
        np.asarray(q, dtype=np.float64)[None],
    )
    return BodyPose(positions[0], orientations[0])


def forward_kinematics_batch(
    skeleton: SkeletonSpec,
    root_positions: np.ndarray,
    root_orientations: np.ndarray,
    q: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized FK over a batch of configurations.

    Returns ``(positions, orientations)`` with shapes ``(B, n_links, 3)`` and
    ``(B, n_links, 4)``.
    """
    root_positions = np.asarray(root_positions, dtype=np.float64)
    root_orientations = np.asarray(root_orientations, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n_q = skeleton.n_q
    if q.ndim != 2 or q.shape[1] != n_q:
        raise DimensionError(f"expected joint angles of shape (B, {n_q}), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise DimensionError("joint angles must be finite")
    b = q.shape[0]
    if root_positions.shape != (b, 3) or root_orientations.shape != (b, 4):
        raise DimensionError("root pose batch does not match joint angle batch")

    positions = np.empty((b, n_q + 1, 3))
    orientations = np.empty((b, n_q + 1, 4))
    positions[:, 0] = root_positions
    orientations[:, 0] = root_orientations
    for i in range(n_q):
        parent = int(skeleton.parents[i]) + 1
        parent_rot = orientations[:, parent]
        local = quat.from_axis_angle(skeleton.axes[i], q[:, i])
        child_rot = quat.multiply(parent_rot, local)
        orientations[:, i + 1] = child_rot
        positions[:, i + 1] = positions[:, parent] + quat.rotate(child_rot, skeleton.offsets[i])
    return positions, orientations


def extract_foot_contacts(
    ankle_positions: np.ndarray,
    eps_vel: float = CONTACT_EPS_VEL,
    eps_height: float = CONTACT_EPS_HEIGHT,
) -> np.ndarray:
    """Threshold-based contact flags from ankle world trajectories.

    ``ankle_positions`` is ``(T, 3)`` for one foot or ``(T, n_feet, 3)``.
    Frame ``t`` is in contact iff the squared displacement to frame ``t + 1``
    is strictly below ``eps_vel`` and the height is strictly below
    ``eps_height``.  The rule needs the next frame, so the final frame copies
    the flag of the one before it.
    """
    p = np.asarray(ankle_positions, dtype=np.float64)
    single = p.ndim == 2
    if single:
        p = p[:, None, :]
    if p.ndim != 3 or p.shape[-1] != 3:
        raise DimensionError(f"expected (T, n_feet, 3) ankle positions, got {p.shape}")
    t = p.shape[0]
    if t < 2:
        raise DimensionError("contact extraction needs at least 2 frames")
    disp_sq = np.sum(np.square(p[1:] - p[:-1]), axis=-1)
    flags = np.zeros(p.shape[:2], dtype=np.float64)
    flags[:-1] = ((disp_sq < eps_vel) & (p[:-1, :, 2] < eps_height)).astype(np.float64)
    flags[-1] = flags[-2]
    return flags[:, 0] if single else flags


# ---------------------------------------------------------------------------
# skeleton file format


def serialize_skeleton(spec: SkeletonSpec) -> str:
    lines = [SKELETON_MAGIC, f"name {spec.name}"]
    lines.append(f"ankles {spec.ankle_indices[0]} {spec.ankle_indices[1]}")
    lines.append(f"joints {spec.n_q}")
    for i in range(spec.n_q):
        ax, ay, az = (float(v) for v in spec.axes[i])
        ox, oy, oz = (float(v) for v in spec.offsets[i])
        lines.append(
            f"{spec.joint_names[i]} {int(spec.parents[i])} "
            f"{ax!r} {ay!r} {az!r} {ox!r} {oy!r} {oz!r} "
            f"{int(spec.mirror_perm[i])} {int(spec.mirror_signs[i])}"
        )
    return "\n".join(lines) + "\n"


def save_skeleton(spec: SkeletonSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_skeleton(spec))


def parse_skeleton(text: str) -> SkeletonSpec:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SKELETON_MAGIC:
        raise VersionMismatchError(
            f"unsupported skeleton header {lines[0]!r}" if lines else "empty skeleton file"
        )
    fields: dict[str, str] = {}
    idx = 1
    while idx < len(lines) and " " in lines[idx]:
        key, _, value = lines[idx].partition(" ")
        if key in ("name", "ankles", "joints"):
            fields[key] = value
            idx += 1
            if key == "joints":
                break
        else:
            break
    try:
        n = int(fields["joints"])
        ankles = tuple(int(v) for v in fields["ankles"].split())
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad skeleton preamble: {exc}") from exc
    joint_lines = lines[idx : idx + n]
    if len(joint_lines) != n:
        raise FormatError(f"expected {n} joint lines, found {len(joint_lines)}")
    names, parents, axes, offsets, perm, signs = [], [], [], [], [], []
    for ln in joint_lines:
        parts = ln.split()
        if len(parts) != 10:
            raise FormatError(f"malformed joint line: {ln!r}")
        names.append(parts[0])
        parents.append(int(parts[1]))
        axes.append([float(v) for v in parts[2:5]])
        offsets.append([float(v) for v in parts[5:8]])
        perm.append(int(parts[8]))
        signs.append(float(parts[9]))
    return SkeletonSpec(
        name=fields.get("name", "skeleton"),
        joint_names=tuple(names),
        parents=np.array(parents),
        axes=np.array(axes),
        offsets=np.array(offsets),
        ankle_indices=(ankles[0], ankles[1]),
        mirror_perm=np.array(perm),
        mirror_signs=np.array(signs),
    )


def load_skeleton(path) -> SkeletonSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_skeleton(fh.read())


def load_packaged_skeleton(name: str) -> SkeletonSpec:
    """Load one of the skeletons shipped with the package (by file stem)."""
    resource = importlib.resources.files("motionstream.data").joinpath(f"{name}.txt")
    return parse_skeleton(resource.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# built-in skeletons

_X = (1.0, 0.0, 0.0)
_Y = (0.0, 1.0, 0.0)
_Z = (0.0, 0.0, 1.0)


def _build_mirror(names: list[str], axes: list[tuple]) -> tuple[np.ndarray, np.ndarray]:
    """Left/right name swap; roll (x) and yaw (z) joints flip sign."""
    perm = []
    signs = []
    for name, axis in zip(names, axes):
        if name.startswith("left_"):
            partner = "right_" + name[5:]
        elif name.startswith("right_"):
            partner = "left_" + name[6:]
        else:
            partner = name
        perm.append(names.index(partner))
        signs.append(1.0 if axis == _Y else -1.0)
    return np.array(perm), np.array(signs)


def humanoid_29dof_skeleton() -> SkeletonSpec:
    """Desk-scale 29-DoF humanoid: 2x6 legs, 3-DoF waist, 2x7 arms.

    Link offsets are plausible for a ~1.3 m humanoid standing with its pelvis
    at 0.793 m; they are a stand-in, not measured hardware geometry.
    """
    joints: list[tuple[str, int, tuple, tuple]] = []

    def leg(side: str, sign: float, base: int) -> None:
        joints.extend(
            [
                (f"{side}_hip_pitch", -1, _Y, (0.0, sign * 0.0955, -0.031)),
                (f"{side}_hip_roll", base + 0, _X, (0.0, 0.0, -0.06)),
                (f"{side}_hip_yaw", base + 1, _Z, (0.0, 0.0, -0.06)),
                (f"{side}_knee", base + 2, _Y, (0.0, 0.0, -0.22)),
                (f"{side}_ankle_pitch", base + 3, _Y, (0.0, 0.0, -0.26)),
                (f"{side}_ankle_roll", base + 4, _X, (0.0, 0.0, -0.04)),
            ]
        )

    def arm(side: str, sign: float, base: int, waist: int) -> None:
        joints.extend(
            [
                (f"{side}_shoulder_pitch", waist, _Y, (0.0, sign * 0.14, 0.21)),
                (f"{side}_shoulder_roll", base + 0, _X, (0.0, sign * 0.033, -0.02)),
                (f"{side}_shoulder_yaw", base + 1, _Z, (0.0, 0.0, -0.09)),
                (f"{side}_elbow", base + 2, _Y, (0.0, 0.0, -0.12)),
                (f"{side}_wrist_roll", base + 3, _X, (0.02, 0.0, -0.10)),
                (f"{side}_wrist_pitch", base + 4, _Y, (0.05, 0.0, 0.0)),
                (f"{side}_wrist_yaw", base + 5, _Z, (0.04, 0.0, 0.0)),
            ]
        )

    leg("left", 1.0, 0)
    leg("right", -1.0, 6)
    joints.append(("waist_yaw", -1, _Z, (0.0, 0.0, 0.05)))
    joints.append(("waist_roll", 12, _X, (0.0, 0.0, 0.04)))
    joints.append(("waist_pitch", 13, _Y, (0.0, 0.0, 0.04)))
    arm("left", 1.0, 15, 14)
    arm("right", -1.0, 22, 14)

    names = [j[0] for j in joints]
    axes = [j[2] for j in joints]
    perm, signs = _build_mirror(names, axes)
    return SkeletonSpec(
        name="humanoid_29dof",
        joint_names=tuple(names),
        parents=np.array([j[1] for j in joints]),
        axes=np.array(axes, dtype=np.float64),
        offsets=np.array([j[3] for j in joints], dtype=np.float64),
        ankle_indices=(names.index("left_ankle_roll"), names.index("right_ankle_roll")),
        mirror_perm=perm,
        mirror_signs=signs,
    )


def five_dof_skeleton() -> SkeletonSpec:
    """Tiny symmetric skeleton for fast tests: two legs, a torso, two arms."""
    names = ["left_leg", "right_leg", "torso_yaw", "left_arm", "right_arm"]
    parents = np.array([-1, -1, -1, 2, 2])
    axes = [_Y, _Y, _Z, _Y, _Y]
    offsets = np.array(
        [
            [0.0, 0.09, -0.05],
            [0.0, -0.09, -0.05],
            [0.0, 0.0, 0.1],
            [0.0, 0.2, 0.25],
            [0.0, -0.2, 0.25],
        ]
    )
    perm, signs = _build_mirror(names, axes)
    return SkeletonSpec(
        name="five_dof",
        joint_names=tuple(names),
        parents=parents,
        axes=np.array(axes, dtype=np.float64),
        offsets=offsets,
        ankle_indices=(0, 1),
        mirror_perm=perm,
        mirror_signs=signs,
    )


DEFAULT_STAND_HEIGHT = 0.793
