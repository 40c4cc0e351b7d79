import numpy as np
import pytest

from motionstream import quat
from motionstream.features import RawMotion
from motionstream.kinematics import humanoid_29dof_skeleton, five_dof_skeleton


@pytest.fixture(scope="session")
def skeleton29():
    return humanoid_29dof_skeleton()


@pytest.fixture(scope="session")
def skeleton5():
    return five_dof_skeleton()


def random_smooth_motion(skeleton, n_frames, rng, max_pitch=1.3, start_xy=(0.0, 0.0)):
    """Band-limited random motion with bounded pitch, away from gimbal lock."""
    t = np.arange(n_frames) / 50.0
    n_q = skeleton.n_q

    def mix(amplitude, n_terms=3):
        out = np.zeros(n_frames)
        for _ in range(n_terms):
            freq = rng.uniform(0.2, 2.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            out += rng.uniform(0.2, 1.0) * np.sin(2.0 * np.pi * freq * t + phase)
        return amplitude * out / n_terms

    roll = mix(0.6)
    pitch = np.clip(mix(0.9), -max_pitch, max_pitch)
    yaw = np.cumsum(rng.uniform(-0.06, 0.06, size=n_frames)) + rng.uniform(-np.pi, np.pi)
    quats = quat.euler_to_quat(roll, pitch, yaw)

    speed = rng.uniform(0.2, 1.2)
    heading = yaw + mix(0.3)
    vel = speed * np.stack([np.cos(heading), np.sin(heading)], axis=1) / 50.0
    pos = np.zeros((n_frames, 3))
    pos[:, 0] = start_xy[0] + np.concatenate([[0.0], np.cumsum(vel[:-1, 0])])
    pos[:, 1] = start_xy[1] + np.concatenate([[0.0], np.cumsum(vel[:-1, 1])])
    pos[:, 2] = 0.78 + mix(0.05)

    q = np.stack([mix(rng.uniform(0.2, 1.0)) for _ in range(n_q)], axis=1)
    contacts = (rng.random((n_frames, 2)) < 0.5).astype(np.float64)
    return RawMotion(pos, quats, q, contacts)
