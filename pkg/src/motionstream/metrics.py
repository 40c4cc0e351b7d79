"""Motion-quality and tracking-fidelity metrics.

Generation quality works in an embedding space supplied by an
:class:`EmbeddingProvider` (distribution distance, diversity, retrieval
precision, text-motion distance, and jerk-based smoothness of transition
clips).  Tracking fidelity compares executed and reference link trajectories
(per-link position, velocity and acceleration errors in millimeters, and a
thresholded success rate).

Conventions pinned here:

* Per-link averages run over the ``J`` non-root links; index 0 is the root.
* Velocities and accelerations are per-frame differences (units of
  mm/frame and mm/frame^2 after the metric's factor of 1000).
* Jerk is the third-order backward finite difference of joint angles in
  per-frame units; the first valid value is replicated backward so every
  frame carries a jerk sample.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import DimensionError, NumericalError

SUCCESS_THRESHOLD_M = 0.3
TRANSITION_HALF_WINDOW = 15


# ---------------------------------------------------------------------------
# embedding statistics


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Maps motions and texts into one shared, fixed-dimension space."""

    def embed_motion(self, features) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class FeatureStats:
    """First and second moments of an embedding sample."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        d = mu.shape[0]
        if mu.ndim != 1 or sigma.shape != (d, d):
            raise DimensionError(f"stats shapes disagree: mu {mu.shape}, sigma {sigma.shape}")
        if self.n < 1:
            raise DimensionError("sample count must be at least 1")
        if np.max(np.abs(sigma - sigma.T)) > 1e-12 * max(1.0, float(np.max(np.abs(sigma)))):
            raise DimensionError("covariance must be symmetric")

    @staticmethod
    def from_samples(x: np.ndarray) -> "FeatureStats":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionError("expected (N, d) embeddings")
        mu = x.mean(axis=0)
        if x.shape[0] > 1:
            c = x - mu
            sigma = (c.T @ c) / (x.shape[0] - 1)
            sigma = 0.5 * (sigma + sigma.T)
        else:
            sigma = np.zeros((x.shape[1], x.shape[1]))
        return FeatureStats(mu, sigma, x.shape[0])


@dataclass
class PartialStats:
    """Mergeable running moments for parallel map-reduce accumulation."""

    vec_sum: np.ndarray
    outer_sum: np.ndarray
    count: int

    @staticmethod
    def empty(dim: int) -> "PartialStats":
        return PartialStats(np.zeros(dim), np.zeros((dim, dim)), 0)

    def add(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None]
        self.vec_sum += x.sum(axis=0)
        self.outer_sum += x.T @ x
        self.count += x.shape[0]

    def merge(self, other: "PartialStats") -> "PartialStats":
        return PartialStats(
            self.vec_sum + other.vec_sum, self.outer_sum + other.outer_sum, self.count + other.count
        )

    def finalize(self) -> FeatureStats:
        if self.count < 1:
            raise DimensionError("no samples accumulated")
        mu = self.vec_sum / self.count
        if self.count > 1:
            sigma = (self.outer_sum - self.count * np.outer(mu, mu)) / (self.count - 1)
            sigma = 0.5 * (sigma + sigma.T)
        else:
            sigma = np.zeros_like(self.outer_sum)
        return FeatureStats(mu, sigma, self.count)


def _clipped_eigvals(vals: np.ndarray) -> np.ndarray:
    if np.min(vals) < -1e-10:
        raise NumericalError(f"covariance has eigenvalue {np.min(vals)!r}; not PSD")
    vals = np.clip(vals, 0.0, None)
    # zero out rounding noise on null modes: sqrt would amplify 1e-17 to 1e-9
    if vals.size and vals.max() > 0.0:
        vals[vals < vals.max() * 1e-12] = 0.0
    return vals


def _psd_sqrt(sigma: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(sigma)
    vals = _clipped_eigvals(vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(g: FeatureStats, r: FeatureStats) -> float:
    """Frechet distance between the two Gaussian moment summaries.

    ``|mu_g - mu_r|^2 + Tr(S_g + S_r - 2 (S_g S_r)^{1/2})`` with the cross
    square root evaluated through the symmetric product
    ``S_r^{1/2} S_g S_r^{1/2}`` (equivalent for PSD inputs, numerically far
    better behaved than the root of the non-symmetric product).
    """
    if g.mu.shape != r.mu.shape:
        raise DimensionError("stats dimensions differ")
    if not (np.all(np.isfinite(g.mu)) and np.all(np.isfinite(r.mu))):
        raise NumericalError("non-finite means")
    sqrt_r = _psd_sqrt(0.5 * (r.sigma + r.sigma.T))
    inner = sqrt_r @ (0.5 * (g.sigma + g.sigma.T)) @ sqrt_r
    vals = _clipped_eigvals(np.linalg.eigvalsh(0.5 * (inner + inner.T)))
    tr_sqrt = float(np.sum(np.sqrt(vals)))
    diff = g.mu - r.mu
    return float(diff @ diff + np.trace(g.sigma) + np.trace(r.sigma) - 2.0 * tr_sqrt)


def diversity(embeddings: np.ndarray, subset_size: int | None, rng: np.random.Generator) -> float:
    """Mean distance between two disjoint random subsets of equal size.

    ``subset_size=None`` defaults to ``min(32, N // 2)``.  One permutation
    draw from ``rng`` selects both subsets.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    d = min(32, n // 2) if subset_size is None else int(subset_size)
    if d < 1 or n < 2 * d:
        raise DimensionError(f"need at least {2 * max(d, 1)} embeddings, got {n}")
    perm = rng.permutation(n)
    a = x[perm[:d]]
    b = x[perm[d : 2 * d]]
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def r_precision(motion_emb: np.ndarray, text_emb: np.ndarray, k: int) -> float:
    """Fraction of texts whose own motion ranks in the top-K by distance.

    Ties are broken by index (stable sort), so identical distances favor the
    earlier motion.
    """
    x = np.asarray(motion_emb, dtype=np.float64)
    h = np.asarray(text_emb, dtype=np.float64)
    if x.shape != h.shape:
        raise DimensionError("motion and text embedding batches must align")
    m = x.shape[0]
    if not 1 <= k <= m:
        raise DimensionError(f"K={k} outside 1..{m}")
    dists = np.linalg.norm(h[:, None, :] - x[None, :, :], axis=2)
    hits = 0
    for i in range(m):
        order = np.argsort(dists[i], kind="stable")
        if i in order[:k]:
            hits += 1
    return hits / m


def mm_dist(motion_emb: np.ndarray, text_emb: np.ndarray) -> float:
    """Mean distance between each motion and its own text embedding."""
    x = np.asarray(motion_emb, dtype=np.float64)
    h = np.asarray(text_emb, dtype=np.float64)
    if x.shape != h.shape:
        raise DimensionError("motion and text embedding batches must align")
    return float(np.mean(np.linalg.norm(x - h, axis=1)))


# ---------------------------------------------------------------------------
# jerk-based smoothness


def joint_jerk(trajectories: np.ndarray) -> np.ndarray:
    """Per-joint, per-frame jerk of ``(K, L)`` angle trajectories.

    Third-order backward difference in per-frame units; frames before the
    first valid sample replicate it, so the output is also ``(K, L)``.
    """
    x = np.asarray(trajectories, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if x.ndim != 2:
        raise DimensionError(f"expected (K, L) trajectories, got {x.shape}")
    if x.shape[1] < 4:
        raise DimensionError("jerk needs at least 4 samples")
    j = np.diff(np.diff(np.diff(x, axis=1), axis=1), axis=1)
    lead = np.repeat(j[:, :1], 3, axis=1)
    return np.concatenate([lead, j], axis=1)


def peak_jerk(trajectories: np.ndarray) -> float:
    """Largest absolute instantaneous jerk over all joints and frames."""
    return float(np.max(np.abs(joint_jerk(trajectories))))


def auj(trajectories: np.ndarray, jerk_avg: float) -> float:
    """Sum over frames of the worst per-joint deviation from ``jerk_avg``."""
    j = joint_jerk(trajectories)
    return float(np.sum(np.max(np.abs(j - jerk_avg), axis=0)))


def jerk_baseline(clips: list[np.ndarray]) -> float:
    """Mean absolute jerk over every joint, frame and clip of a dataset."""
    if not clips:
        raise DimensionError("jerk baseline needs at least one clip")
    values = [np.abs(joint_jerk(c)).reshape(-1) for c in clips]
    return float(np.mean(np.concatenate(values)))


def transition_clips(
    motion: np.ndarray, boundaries, half_window: int = TRANSITION_HALF_WINDOW
) -> list[np.ndarray]:
    """Windows of ``2 * half_window`` frames centered on each boundary.

    Boundaries closer than ``half_window`` to either end are skipped with a
    warning rather than truncated.
    """
    arr = np.asarray(motion)
    t = arr.shape[0]
    clips = []
    for b in boundaries:
        start, stop = int(b) - half_window, int(b) + half_window
        if start < 0 or stop > t:
            warnings.warn(
                f"transition boundary {b} too close to the clip edge; skipped", stacklevel=2
            )
            continue
        clips.append(arr[start:stop])
    return clips


# ---------------------------------------------------------------------------
# tracking fidelity


@dataclass(frozen=True)
class TrajectoryPair:
    """Time-aligned executed and reference link-position trajectories."""

    policy: np.ndarray  # (T, n_links, 3)
    reference: np.ndarray  # (T, n_links, 3)

    def __post_init__(self):
        p = np.asarray(self.policy, dtype=np.float64)
        r = np.asarray(self.reference, dtype=np.float64)
        object.__setattr__(self, "policy", p)
        object.__setattr__(self, "reference", r)
        if p.shape != r.shape:
            raise DimensionError(f"trajectory shapes differ: {p.shape} vs {r.shape}")
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[1] < 2:
            raise DimensionError("trajectories must be (T, n_links >= 2, 3)")


def _mean_link_norm(diff: np.ndarray) -> float:
    """Mean Euclidean norm over frames and non-root links of a difference."""
    return float(np.mean(np.linalg.norm(diff[:, 1:, :], axis=2)))


def tracking_metrics(pair: TrajectoryPair) -> dict[str, float]:
    """Global/root-relative position errors plus velocity and acceleration
    errors, all in millimeters (per frame for the temporal ones)."""
    t = pair.policy.shape[0]
    if t < 3:
        raise DimensionError("tracking metrics need at least 3 frames")
    diff = pair.policy - pair.reference
    rel_p = pair.policy - pair.policy[:, :1, :]
    rel_r = pair.reference - pair.reference[:, :1, :]
    vel_p = pair.policy[1:] - pair.policy[:-1]
    vel_r = pair.reference[1:] - pair.reference[:-1]
    acc_p = vel_p[1:] - vel_p[:-1]
    acc_r = vel_r[1:] - vel_r[:-1]
    return {
        "g_mpjpe": 1000.0 * _mean_link_norm(diff),
        "mpjpe": 1000.0 * _mean_link_norm(rel_p - rel_r),
        "e_vel": 1000.0 * _mean_link_norm(vel_p - vel_r),
        "e_acc": 1000.0 * _mean_link_norm(acc_p - acc_r),
    }


def max_relative_error(pair: TrajectoryPair) -> float:
    """Worst-frame mean per-link root-relative position error, in meters."""
    rel = (pair.policy - pair.policy[:, :1, :]) - (pair.reference - pair.reference[:, :1, :])
    per_frame = np.mean(np.linalg.norm(rel[:, 1:, :], axis=2), axis=1)
    return float(np.max(per_frame))


def success_rate(pairs: list[TrajectoryPair], theta: float = SUCCESS_THRESHOLD_M) -> float:
    """Fraction of sequences whose worst-frame relative error stays <= theta."""
    if not pairs:
        raise DimensionError("success rate needs at least one sequence")
    hits = sum(1 for p in pairs if max_relative_error(p) <= theta)
    return hits / len(pairs)
