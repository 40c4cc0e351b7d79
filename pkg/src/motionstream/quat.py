"""Quaternion and Euler-angle helpers.

Conventions, fixed package-wide and in every file format:

* quaternions are scalar-first ``(w, x, y, z)`` using the Hamilton product;
* Euler angles are roll/pitch/yaw with ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``
  (rotations about the fixed x, then y, then z axes);
* pitch is reported in ``[-pi/2, pi/2]``.

All functions broadcast over leading dimensions; quaternion arguments have
shape ``(..., 4)`` and vectors ``(..., 3)``.
"""

from __future__ import annotations

import warnings

import numpy as np

# cos(pitch) below this is treated as gimbal lock (pitch within ~1e-6 of +-pi/2)
GIMBAL_COS_PITCH = 1e-6


class GimbalLockWarning(UserWarning):
    """Euler decomposition hit the pitch singularity; roll absorbed into yaw."""


def identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a * b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors ``v`` by quaternions ``q``."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def from_axis_angle(axis: np.ndarray, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    s = np.sin(half)
    return np.concatenate(
        [np.cos(half)[..., None], s[..., None] * axis], axis=-1
    )


def from_yaw(yaw) -> np.ndarray:
    yaw = np.asarray(yaw, dtype=np.float64)
    half = 0.5 * yaw
    zeros = np.zeros_like(half)
    return np.stack([np.cos(half), zeros, zeros, np.sin(half)], axis=-1)


def to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = (q[..., i] for i in range(4))
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    m[..., 0, 1] = 2.0 * (x * y - w * z)
    m[..., 0, 2] = 2.0 * (x * z + w * y)
    m[..., 1, 0] = 2.0 * (x * y + w * z)
    m[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    m[..., 1, 2] = 2.0 * (y * z - w * x)
    m[..., 2, 0] = 2.0 * (x * z - w * y)
    m[..., 2, 1] = 2.0 * (y * z + w * x)
    m[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return m


def euler_to_quat(roll, pitch, yaw) -> np.ndarray:
    """Quaternion of ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    roll = np.asarray(roll, dtype=np.float64)
    pitch = np.asarray(pitch, dtype=np.float64)
    yaw = np.asarray(yaw, dtype=np.float64)
    cr, sr = np.cos(0.5 * roll), np.sin(0.5 * roll)
    cp, sp = np.cos(0.5 * pitch), np.sin(0.5 * pitch)
    cy, sy = np.cos(0.5 * yaw), np.sin(0.5 * yaw)
    return np.stack(
        [
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ],
        axis=-1,
    )


def _matrix_elements(q: np.ndarray):
    """Rotation-matrix entries needed for Euler extraction.

    ``m00`` is grouped as ``(w^2 + x^2) - (y^2 + z^2)`` rather than
    ``1 - 2(y^2 + z^2)``; the grouped form negates exactly under a half-turn
    yaw of the quaternion, which keeps heading differences maximally stable.
    """
    w, x, y, z = (q[..., i] for i in range(4))
    m00 = (w * w + x * x) - (y * y + z * z)
    m10 = 2.0 * (x * y + w * z)
    m20 = 2.0 * (x * z - w * y)
    m21 = 2.0 * (y * z + w * x)
    m22 = (w * w + z * z) - (x * x + y * y)
    return m00, m10, m20, m21, m22


def quat_to_euler(q: np.ndarray, warn_gimbal: bool = True):
    """Decompose into (roll, pitch, yaw).

    Near the pitch singularity the decomposition is not unique; roll is set
    to zero and the remaining rotation is absorbed into yaw.
    """
    q = np.asarray(q, dtype=np.float64)
    m00, m10, m20, m21, m22 = _matrix_elements(q)
    cos_pitch = np.hypot(m21, m22)
    pitch = np.arctan2(-m20, cos_pitch)
    roll = np.arctan2(m21, m22)
    yaw = np.arctan2(m10, m00)

    locked = cos_pitch < GIMBAL_COS_PITCH
    if np.any(locked):
        if warn_gimbal:
            warnings.warn(
                "pitch within 1e-6 of +-pi/2; using the yaw-absorbing branch",
                GimbalLockWarning,
                stacklevel=2,
            )
        w, x, y, z = (q[..., i] for i in range(4))
        m11 = (w * w + y * y) - (x * x + z * z)
        m12 = 2.0 * (y * z - w * x)
        # sign of pitch picks the branch: at +pi/2 yaw-roll enter as (yaw-roll)
        sign = np.where(m20 < 0.0, 1.0, -1.0)  # m20 = -sin(pitch)
        yaw_locked = np.arctan2(sign * m12, m11)
        roll = np.where(locked, 0.0, roll)
        yaw = np.where(locked, yaw_locked, yaw)
    return roll, pitch, yaw


def yaw_of(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    m00, m10, _, _, _ = _matrix_elements(q)
    return np.arctan2(m10, m00)


def heading(q: np.ndarray):
    """Unnormalized XY heading ``(m00, m10)`` whose angle is the yaw."""
    q = np.asarray(q, dtype=np.float64)
    m00, m10, _, _, _ = _matrix_elements(q)
    return m00, m10


def wrap_angle(a) -> np.ndarray:
    """Wrap to ``(-pi, pi]``."""
    a = np.asarray(a, dtype=np.float64)
    out = np.arctan2(np.sin(a), np.cos(a))
    return np.where(out <= -np.pi, np.pi, out)


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation angle between unit quaternions, in ``[0, pi]``."""
    d = multiply(conjugate(a), b)
    vec = np.linalg.norm(d[..., 1:], axis=-1)
    return 2.0 * np.arctan2(vec, np.abs(d[..., 0]))
