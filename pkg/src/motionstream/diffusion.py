"""Denoising-diffusion machinery over motion latents.

The generator owns a latent space (a :class:`LatentCodec` mapping future
feature blocks to vectors), a denoiser predicting clean latents from noisy
ones, and a noise schedule.  Sampling runs the standard DDPM reverse chain
with classifier-free guidance applied to the clean-latent predictions.

Nothing here trains anything: the codec is a PCA fit and the reference
denoisers are a closed-form linear-Gaussian posterior (used as a sampler
oracle) and a nearest-neighbor retrieval over a corpus index.
"""

from __future__ import annotations

import hashlib
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from . import quat
from .container import read_container, write_container
from .errors import DimensionError, EmptyIndexError, NumericalError, RankError
from .features import FeatureLayout, InitialPose, MotionFeatures, decode_features
from .kinematics import SkeletonSpec, forward_kinematics_batch

DEFAULT_DIFFUSION_STEPS = 5
DEFAULT_CFG_SCALE = 5.0
DEFAULT_LATENT_DIM = 128


# ---------------------------------------------------------------------------
# noise schedule


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise levels; arrays are indexed by ``k - 1`` for k in 1..K."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        for name in ("beta", "alpha", "alpha_bar"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        k = self.beta.shape[0]
        if k == 0:
            raise DimensionError("schedule needs at least one step")
        if self.alpha.shape != (k,) or self.alpha_bar.shape != (k,):
            raise DimensionError("schedule arrays disagree in length")
        if np.any(self.beta <= 0.0) or np.any(self.beta > 0.999):
            raise DimensionError("beta values must lie in (0, 0.999]")
        if np.any(np.diff(self.alpha_bar) >= 0.0) or self.alpha_bar[0] >= 1.0:
            raise DimensionError("alpha_bar must be strictly decreasing and below 1")

    @property
    def n_steps(self) -> int:
        return self.beta.shape[0]

    def alpha_bar_at(self, k: int) -> float:
        """Cumulative product at step ``k``; ``k = 0`` is the clean signal."""
        if k == 0:
            return 1.0
        return float(self.alpha_bar[k - 1])


def cosine_schedule(n_steps: int, s: float = 0.008, max_beta: float = 0.999) -> NoiseSchedule:
    """Squared-cosine noise ramp with offset ``s`` and betas capped at 0.999."""
    if n_steps < 1:
        raise DimensionError("schedule needs at least one step")
    steps = np.arange(n_steps + 1, dtype=np.float64)
    f = np.cos(((steps / n_steps + s) / (1.0 + s)) * np.pi / 2.0) ** 2
    alpha_bar_raw = f[1:] / f[0]
    prev = np.concatenate([[1.0], alpha_bar_raw[:-1]])
    beta = np.minimum(1.0 - alpha_bar_raw / prev, max_beta)
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def add_noise(z0: np.ndarray, k: int, schedule: NoiseSchedule, epsilon: np.ndarray) -> np.ndarray:
    """Forward noising: ``z_k = sqrt(abar_k) z0 + sqrt(1 - abar_k) eps``."""
    z0 = np.asarray(z0, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if z0.shape != epsilon.shape:
        raise DimensionError(f"latent {z0.shape} and noise {epsilon.shape} shapes differ")
    if not 1 <= k <= schedule.n_steps:
        raise DimensionError(f"step {k} outside 1..{schedule.n_steps}")
    ab = schedule.alpha_bar_at(k)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * epsilon


def predicted_noise(z_k: np.ndarray, z0_hat: np.ndarray, k: int, schedule: NoiseSchedule) -> np.ndarray:
    """Noise implied by a clean-latent prediction at step ``k``."""
    ab = schedule.alpha_bar_at(k)
    return (np.asarray(z_k) - np.sqrt(ab) * np.asarray(z0_hat)) / np.sqrt(1.0 - ab)


# ---------------------------------------------------------------------------
# denoiser / codec contracts


@runtime_checkable
class Denoiser(Protocol):
    """Predicts the clean latent from a noisy one.

    ``text_embedding=None`` selects the unconditional branch.  Predictions
    must be deterministic functions of the inputs.
    """

    latent_dim: int

    def predict(
        self,
        z_k: np.ndarray,
        k: int,
        history: np.ndarray | None,
        text_embedding: np.ndarray | None,
    ) -> np.ndarray: ...


@runtime_checkable
class LatentCodec(Protocol):
    latent_dim: int
    frames_per_block: int

    def encode(self, history: np.ndarray | None, future: np.ndarray) -> np.ndarray: ...

    def decode(self, history: np.ndarray | None, z: np.ndarray) -> np.ndarray: ...


def cfg_predict(
    denoiser: Denoiser,
    z_k: np.ndarray,
    k: int,
    history: np.ndarray | None,
    text_embedding: np.ndarray | None,
    cfg_scale: float,
) -> np.ndarray:
    """Classifier-free guidance on clean-latent predictions.

    Returns ``F(none) + scale * (F(text) - F(none))``; the scale-0 and
    scale-1 endpoints return the respective branch untouched.
    """
    if text_embedding is None or cfg_scale == 0.0:
        return denoiser.predict(z_k, k, history, None)
    cond = denoiser.predict(z_k, k, history, text_embedding)
    if cfg_scale == 1.0:
        return cond
    uncond = denoiser.predict(z_k, k, history, None)
    return uncond + cfg_scale * (cond - uncond)


def ddpm_sample(
    denoiser: Denoiser,
    history: np.ndarray | None,
    text_embedding: np.ndarray | None,
    schedule: NoiseSchedule,
    cfg_scale: float,
    rng: np.random.Generator,
    n_samples: int | None = None,
    terminal_noise: bool = False,
) -> np.ndarray:
    """Ancestral DDPM sampling of a clean latent.

    Starts from standard normal noise and iterates k = K..1; each step turns
    the guided clean prediction into an implied noise, takes the posterior
    mean and perturbs it with variance ``beta_k``.  At k = 1 the posterior
    mean reduces to the clean prediction itself, and by default no terminal
    noise is added (``terminal_noise=True`` restores noise at every step).

    Pass ``n_samples`` to draw a batch; the denoiser must then accept
    ``(n, d)`` latents.
    """
    d = denoiser.latent_dim
    shape = (d,) if n_samples is None else (n_samples, d)
    z = rng.standard_normal(shape)
    for k in range(schedule.n_steps, 0, -1):
        z0_hat = cfg_predict(denoiser, z, k, history, text_embedding, cfg_scale)
        if k == 1:
            # posterior mean coefficients collapse to (0, 1) at the last step
            z = np.asarray(z0_hat, dtype=np.float64)
            if terminal_noise:
                z = z + np.sqrt(schedule.beta[0]) * rng.standard_normal(shape)
        else:
            ab = schedule.alpha_bar_at(k)
            a = float(schedule.alpha[k - 1])
            eps_theta = (z - np.sqrt(ab) * z0_hat) / np.sqrt(1.0 - ab)
            mean = (z - ((1.0 - a) / np.sqrt(1.0 - ab)) * eps_theta) / np.sqrt(a)
            z = mean + np.sqrt(schedule.beta[k - 1]) * rng.standard_normal(shape)
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"non-finite latent during reverse step {k}", step=k)
    return z


# ---------------------------------------------------------------------------
# reference denoisers


@dataclass(frozen=True)
class LinearGaussianDenoiser:
    """Bayes-optimal clean-latent predictor for a diagonal Gaussian prior.

    For ``z0 ~ N(mean, diag(var))`` and ``z_k = sqrt(abar) z0 + sqrt(1-abar) eps``
    the posterior mean is elementwise

        (sqrt(abar) var * z_k + (1 - abar) mean) / (abar var + (1 - abar))

    History and text are ignored; this exists to give the sampler an
    analytically checkable target.
    """

    mean: np.ndarray
    var: np.ndarray
    schedule: NoiseSchedule

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=np.float64)
        v = np.asarray(self.var, dtype=np.float64)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "var", v)
        if m.shape != v.shape or m.ndim != 1:
            raise DimensionError("mean and variance must be 1-D and equal length")
        if np.any(v <= 0.0):
            raise DimensionError("prior variances must be positive")

    @property
    def latent_dim(self) -> int:
        return self.mean.shape[0]

    def predict(self, z_k, k, history=None, text_embedding=None) -> np.ndarray:
        ab = self.schedule.alpha_bar_at(k)
        denom = ab * self.var + (1.0 - ab)
        return (np.sqrt(ab) * self.var * np.asarray(z_k) + (1.0 - ab) * self.mean) / denom


def history_summary(history: np.ndarray) -> np.ndarray:
    """Unit-normalized flattened history block, the retrieval key space.

    Normalizing keeps the history term commensurate with unit-norm text
    embeddings under the default unit distance weights.
    """
    flat = np.asarray(history, dtype=np.float64).reshape(-1)
    norm = np.linalg.norm(flat)
    return flat / norm if norm > 0.0 else flat


@dataclass(frozen=True)
class RetrievalDenoiser:
    """Nearest-neighbor lookup over (history summary, text embedding) keys.

    ``predict`` returns the stored clean latent of the entry minimizing
    ``w_history * |summary diff| + w_text * |embedding diff|``; the noisy
    latent and step index are ignored by design.  Ties resolve to the lowest
    insertion index.  With ``text_embedding=None`` the text term is dropped.
    """

    history_keys: np.ndarray  # (N, Dh), unit rows
    text_keys: np.ndarray  # (N, De), unit rows
    latents: np.ndarray  # (N, d_z)
    w_history: float = 1.0
    w_text: float = 1.0

    def __post_init__(self):
        hk = np.asarray(self.history_keys, dtype=np.float64)
        tk = np.asarray(self.text_keys, dtype=np.float64)
        lt = np.asarray(self.latents, dtype=np.float64)
        object.__setattr__(self, "history_keys", hk)
        object.__setattr__(self, "text_keys", tk)
        object.__setattr__(self, "latents", lt)
        if hk.shape[0] == 0:
            raise EmptyIndexError("retrieval index has no entries")
        if not (hk.shape[0] == tk.shape[0] == lt.shape[0]):
            raise DimensionError("index arrays disagree in entry count")

    @property
    def latent_dim(self) -> int:
        return self.latents.shape[1]

    def nearest(self, history: np.ndarray | None, text_embedding: np.ndarray | None) -> int:
        score = np.zeros(self.history_keys.shape[0])
        if history is not None:
            hs = history_summary(history)
            score = score + self.w_history * np.linalg.norm(self.history_keys - hs, axis=1)
        if text_embedding is not None:
            e = np.asarray(text_embedding, dtype=np.float64)
            score = score + self.w_text * np.linalg.norm(self.text_keys - e, axis=1)
        return int(np.argmin(score))  # argmin keeps the lowest index on ties

    def predict(self, z_k, k, history=None, text_embedding=None) -> np.ndarray:
        return self.latents[self.nearest(history, text_embedding)].copy()


# ---------------------------------------------------------------------------
# PCA latent codec


@dataclass(frozen=True)
class PcaCodec:
    """Linear codec over flattened future blocks.

    ``encode`` projects the centered flattened block onto the principal
    directions; ``decode`` reprojects and restores the mean.  The history
    argument is accepted for interface compatibility and ignored: a linear
    trainer-free codec gains nothing from conditioning, and a conditional
    codec can drop in behind the same contract.
    """

    mean: np.ndarray  # (D,)
    components: np.ndarray  # (d_z, D), orthonormal rows
    frames_per_block: int
    layout: FeatureLayout
    singular_values: np.ndarray = field(default=None)

    @property
    def latent_dim(self) -> int:
        return self.components.shape[0]

    def _flatten(self, future: np.ndarray) -> np.ndarray:
        arr = np.asarray(future, dtype=np.float64)
        flat = arr.reshape(-1)
        if flat.shape[0] != self.mean.shape[0]:
            raise DimensionError(
                f"future block has {flat.shape[0]} values, codec expects {self.mean.shape[0]}"
            )
        return flat

    def encode(self, history, future) -> np.ndarray:
        return self.components @ (self._flatten(future) - self.mean)

    def decode(self, history, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.latent_dim,):
            raise DimensionError(f"latent must be ({self.latent_dim},), got {z.shape}")
        flat = self.mean + self.components.T @ z
        return flat.reshape(self.frames_per_block, self.layout.dim)


def fit_pca_codec(
    futures: np.ndarray,
    latent_dim: int,
    layout: FeatureLayout,
) -> PcaCodec:
    """Fit a :class:`PcaCodec` on ``(N, T_future, dim)`` future blocks.

    Requires at least ``latent_dim + 1`` windows and data rank at least
    ``latent_dim`` (rank judged against the usual relative singular-value
    cutoff); otherwise raises :class:`~motionstream.errors.RankError` naming
    the achievable rank.
    """
    arr = np.asarray(futures, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != layout.dim:
        raise DimensionError(f"expected (N, T_future, {layout.dim}) windows, got {arr.shape}")
    n, t_future, dim = arr.shape
    d = t_future * dim
    if latent_dim > d:
        raise DimensionError(f"latent dim {latent_dim} exceeds flattened block size {d}")
    if n < latent_dim + 1:
        raise DimensionError(f"need at least {latent_dim + 1} windows, got {n}")
    x = arr.reshape(n, d)
    mean = x.mean(axis=0)
    centered = x - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    tol = svals[0] * max(n, d) * np.finfo(np.float64).eps if svals.size else 0.0
    rank = int(np.sum(svals > tol))
    if rank < latent_dim:
        raise RankError(
            f"data rank {rank} below requested latent dim {latent_dim}",
            achievable_rank=rank,
        )
    return PcaCodec(
        mean=mean,
        components=vt[:latent_dim].copy(),
        frames_per_block=t_future,
        layout=layout,
        singular_values=svals.copy(),
    )


# ---------------------------------------------------------------------------
# text embedding provider


@dataclass(frozen=True)
class HashedTextEmbedder:
    """Deterministic hashed bag-of-words embedding, L2-normalized.

    A stand-in for a learned text encoder: each lowercase token hashes to a
    slot and a sign.  Stable across processes (uses sha256, not ``hash``).
    """

    dim: int = 64

    def embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in re.findall(r"[a-z0-9]+", text.lower()):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


# ---------------------------------------------------------------------------
# block generator wiring and artifact persistence


class DiffusionBlockGenerator:
    """Feature-block generator: text embedding, guided DDPM sampling over the
    codec's latent space, then decoding back to feature frames.

    ``on_timing`` (stage name, milliseconds) receives instrumentation for
    the text-embedding and sampling stages when set.
    """

    def __init__(
        self,
        codec: LatentCodec,
        denoiser: Denoiser,
        schedule: NoiseSchedule,
        embedder,
        layout: FeatureLayout,
        cfg_scale: float = DEFAULT_CFG_SCALE,
        on_timing: Callable[[str, float], None] | None = None,
    ):
        if codec.latent_dim != denoiser.latent_dim:
            raise DimensionError(
                f"codec latent dim {codec.latent_dim} != denoiser latent dim {denoiser.latent_dim}"
            )
        self.codec = codec
        self.denoiser = denoiser
        self.schedule = schedule
        self.embedder = embedder
        self.layout = layout
        self.cfg_scale = cfg_scale
        self.on_timing = on_timing

    @property
    def frames_per_block(self) -> int:
        return self.codec.frames_per_block

    def _embed(self, text: str) -> np.ndarray:
        start = time.perf_counter()
        embedding = self.embedder.embed_text(text)
        if self.on_timing is not None:
            self.on_timing("embed", (time.perf_counter() - start) * 1e3)
        return embedding

    def generate(self, history: np.ndarray, text: str, rng: np.random.Generator) -> np.ndarray:
        embedding = self._embed(text) if text else None
        start = time.perf_counter()
        z = ddpm_sample(self.denoiser, history, embedding, self.schedule, self.cfg_scale, rng)
        block = self.codec.decode(history, z)
        if self.on_timing is not None:
            self.on_timing("generate", (time.perf_counter() - start) * 1e3)
        return block


def save_codec(codec: PcaCodec, path) -> None:
    meta = {
        "frames_per_block": codec.frames_per_block,
        "n_q": codec.layout.n_q,
        "n_c": codec.layout.n_c,
    }
    arrays = {"mean": codec.mean, "components": codec.components}
    if codec.singular_values is not None:
        arrays["singular_values"] = codec.singular_values
    write_container(path, "pca-codec", meta, arrays)


def load_codec(path) -> PcaCodec:
    meta, arrays = read_container(path, "pca-codec")
    return PcaCodec(
        mean=arrays["mean"],
        components=arrays["components"],
        frames_per_block=int(meta["frames_per_block"]),
        layout=FeatureLayout(int(meta["n_q"]), int(meta["n_c"])),
        singular_values=arrays.get("singular_values"),
    )


def save_retrieval_index(denoiser: RetrievalDenoiser, path) -> None:
    write_container(
        path,
        "retrieval-index",
        {"w_history": denoiser.w_history, "w_text": denoiser.w_text},
        {
            "history_keys": denoiser.history_keys,
            "text_keys": denoiser.text_keys,
            "latents": denoiser.latents,
        },
    )


def load_retrieval_index(path) -> RetrievalDenoiser:
    meta, arrays = read_container(path, "retrieval-index")
    return RetrievalDenoiser(
        history_keys=arrays["history_keys"],
        text_keys=arrays["text_keys"],
        latents=arrays["latents"],
        w_history=float(meta.get("w_history", 1.0)),
        w_text=float(meta.get("w_text", 1.0)),
    )


def build_retrieval_denoiser(
    histories: np.ndarray,
    futures: np.ndarray,
    texts: list[str],
    codec: LatentCodec,
    embedder,
    w_history: float = 1.0,
    w_text: float = 1.0,
) -> RetrievalDenoiser:
    """Index (history summary, text embedding, clean latent) triples."""
    n = len(texts)
    if not (histories.shape[0] == futures.shape[0] == n):
        raise DimensionError("histories, futures and texts must align")
    if n == 0:
        raise EmptyIndexError("cannot build an index from zero windows")
    history_keys = np.stack([history_summary(h) for h in histories])
    text_keys = np.stack([embedder.embed_text(t) for t in texts])
    latents = np.stack([codec.encode(h, f) for h, f in zip(histories, futures)])
    return RetrievalDenoiser(history_keys, text_keys, latents, w_history, w_text)


# ---------------------------------------------------------------------------
# loss evaluation


@dataclass(frozen=True)
class LossWeights:
    rec: float = 1.0
    kl: float = 1e-4
    simple: float = 1.0
    trans: float = 0.05
    rot: float = 1e-2
    dof: float = 0.03
    vel: float = 1e-5
    contact: float = 0.01


HUBER_DELTA = 1.0


def huber(diff: np.ndarray, delta: float = HUBER_DELTA) -> np.ndarray:
    """Elementwise Huber (smooth-L1) penalty of a difference."""
    a = np.abs(np.asarray(diff, dtype=np.float64))
    return np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))


def _huber_sum(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"loss operands differ in shape: {a.shape} vs {b.shape}")
    return float(np.sum(huber(a - b)))


def _geometric_terms(
    pred: MotionFeatures, target: MotionFeatures, skeleton: SkeletonSpec
) -> dict[str, float]:
    """FK-space penalties between two feature blocks decoded from a shared
    identity anchor."""
    anchor = InitialPose(np.zeros(3), quat.identity())
    raw_p = decode_features(pred, anchor)
    raw_t = decode_features(target, anchor)
    pos_p, rot_p = forward_kinematics_batch(
        skeleton, raw_p.root_pos, raw_p.root_quat, raw_p.joint_pos
    )
    pos_t, rot_t = forward_kinematics_batch(
        skeleton, raw_t.root_pos, raw_t.root_quat, raw_t.joint_pos
    )
    terms = {
        "body_trans": _huber_sum(pos_p, pos_t),
        "body_rot": float(np.sum(huber(quat.geodesic_angle(rot_p, rot_t)))),
        "dof": _huber_sum(pred.q, target.q),
        "dof_vel": _huber_sum(pred.dq, target.dq),
    }
    # contact term: ankle link positions, only at frames the target marks as
    # in contact (one flag column per ankle)
    ankle_links = [i + 1 for i in skeleton.ankle_indices]
    total = 0.0
    flags = target.contacts
    for foot, link in enumerate(ankle_links):
        mask = flags[:, foot] >= 0.5 if foot < flags.shape[1] else np.zeros(len(pred), bool)
        if np.any(mask):
            total += _huber_sum(pos_p[mask, link], pos_t[mask, link])
    terms["contact"] = total
    return terms


def gaussian_kl(mean: np.ndarray, std: np.ndarray) -> float:
    """Mean per-dimension KL(N(mean, diag std^2) || N(0, I))."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if mean.shape != std.shape:
        raise DimensionError("latent mean and std shapes differ")
    if np.any(std <= 0.0):
        raise DimensionError("latent std must be positive")
    per_dim = 0.5 * (std**2 + mean**2 - 1.0) - np.log(std)
    return float(np.mean(per_dim))


def vae_loss(
    pred: MotionFeatures,
    target: MotionFeatures,
    latent_mean: np.ndarray,
    latent_std: np.ndarray,
    skeleton: SkeletonSpec,
    weights: LossWeights = LossWeights(),
) -> dict[str, float]:
    """Reconstruction + KL + geometric objective, reported per term.

    Per-term values are unweighted (Huber sums over all entries; KL is the
    mean per-dimension divergence); ``total`` applies the weights.
    """
    if pred.data.shape != target.data.shape:
        raise DimensionError("prediction and target feature shapes differ")
    terms = {"rec": _huber_sum(pred.data, target.data), "kl": gaussian_kl(latent_mean, latent_std)}
    terms.update(_geometric_terms(pred, target, skeleton))
    terms["total"] = (
        weights.rec * terms["rec"]
        + weights.kl * terms["kl"]
        + weights.trans * terms["body_trans"]
        + weights.rot * terms["body_rot"]
        + weights.dof * terms["dof"]
        + weights.vel * terms["dof_vel"]
        + weights.contact * terms["contact"]
    )
    return terms


def ldm_loss(
    z0_hat: np.ndarray,
    z0: np.ndarray,
    pred: MotionFeatures,
    target: MotionFeatures,
    skeleton: SkeletonSpec,
    weights: LossWeights = LossWeights(),
) -> dict[str, float]:
    """Latent reconstruction + feature reconstruction + geometric objective."""
    if pred.data.shape != target.data.shape:
        raise DimensionError("prediction and target feature shapes differ")
    terms = {"simple": _huber_sum(z0_hat, z0), "rec": _huber_sum(pred.data, target.data)}
    terms.update(_geometric_terms(pred, target, skeleton))
    terms["total"] = (
        weights.simple * terms["simple"]
        + weights.rec * terms["rec"]
        + weights.trans * terms["body_trans"]
        + weights.rot * terms["body_rot"]
        + weights.dof * terms["dof"]
        + weights.vel * terms["dof_vel"]
        + weights.contact * terms["contact"]
    )
    return terms
