"""Acceptance suite: one test per acceptance criterion, at the stated
tolerances, each printing a PASS/FAIL line (run with ``pytest -s`` to see
them inline).

The bitwise-invariance criterion is asserted exactly as stated and marked
as a strict expected failure: applying a yaw rotation or XY translation in
IEEE-754 arithmetic perturbs the stored positions/quaternions by rounding
before the encoder ever runs, so no encoder can reproduce identical bits
(measured deviation is a few 1e-16).  The companion test pins the
guarantees that do hold.  Analysis in notes/decisions.md.
"""

import time

import numpy as np
import pytest

from motionstream.corpus import (
    CommandEvent,
    CommandTimeline,
    SyntheticCorpusSpec,
    build_random_text_stream,
    generate_synthetic_corpus,
)
from motionstream.diffusion import (
    DiffusionBlockGenerator,
    LinearGaussianDenoiser,
    add_noise,
    build_retrieval_denoiser,
    cfg_predict,
    cosine_schedule,
    ddpm_sample,
    fit_pca_codec,
    predicted_noise,
)
from motionstream.features import (
    FeatureLayout,
    decode_features,
    encode_features,
    feature_dim,
    stand_frame,
    transform_motion,
)
from motionstream.kinematics import humanoid_29dof_skeleton, five_dof_skeleton
from motionstream.metrics import (
    FeatureStats,
    TrajectoryPair,
    fid,
    max_relative_error,
    peak_jerk,
    r_precision,
    success_rate,
    tracking_metrics,
)
from motionstream.primitives import run_steps, simulate_stream_schedule, stream_session
from motionstream.server import SessionConfig, StreamServer, measure_latency
from tests.client_util import ScriptedClient
from tests.conftest import random_smooth_motion


def report(name: str, ok: bool, detail: str = ""):
    print(f"[acceptance] {'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="module")
def corpus_stack():
    """Synthetic 5-label corpus on the 29-DoF skeleton with the retrieval
    denoiser and a 16-dim PCA codec, as the end-to-end criteria require."""
    skeleton = humanoid_29dof_skeleton()
    built = generate_synthetic_corpus(SyntheticCorpusSpec(seed=100), skeleton)
    layout = FeatureLayout(skeleton.n_q, 2)
    codec = fit_pca_codec(built.index.futures, 16, layout)
    denoiser = build_retrieval_denoiser(
        built.index.histories, built.index.futures, list(built.index.labels),
        codec, built.embedder,
    )

    def make_generator():
        return DiffusionBlockGenerator(
            codec, denoiser, cosine_schedule(5), built.embedder, layout, cfg_scale=1.0
        )

    return skeleton, built, codec, make_generator


def test_roundtrip_thousand_motions():
    """decode(encode(m)) = m within 1e-9 over 1,000 motions, < 30 s."""
    start = time.perf_counter()
    worst_pos = 0.0
    worst_joint = 0.0
    rng = np.random.default_rng(1000)
    for skeleton in (humanoid_29dof_skeleton(), five_dof_skeleton()):
        for _ in range(500):
            raw = random_smooth_motion(skeleton, 60, rng, max_pitch=1.39)
            feats, init = encode_features(raw)
            back = decode_features(feats, init)
            t = len(back)
            worst_pos = max(
                worst_pos, float(np.max(np.linalg.norm(back.root_pos - raw.root_pos[:t], axis=1)))
            )
            worst_joint = max(
                worst_joint, float(np.max(np.abs(back.joint_pos - raw.joint_pos[:t])))
            )
    elapsed = time.perf_counter() - start
    ok = worst_pos <= 1e-9 and worst_joint <= 1e-9 and elapsed < 30.0
    report(
        "round-trip (1000 motions, 29+5 DoF)", ok,
        f"max pos err {worst_pos:.2e} m, max joint err {worst_joint:.2e} rad, {elapsed:.1f}s",
    )
    assert worst_pos <= 1e-9
    assert worst_joint <= 1e-9
    assert elapsed < 30.0


@pytest.mark.xfail(
    strict=True,
    reason="bitwise invariance is unattainable in IEEE-754: the transform itself "
    "rounds positions/quaternions (~1e-16) before encoding; see notes/decisions.md",
)
def test_invariance_bitwise_under_rigid_transforms():
    """Features bitwise-stable under 100 random yaw+XY transforms (as stated)."""
    skeleton = humanoid_29dof_skeleton()
    rng = np.random.default_rng(2000)
    raw = random_smooth_motion(skeleton, 50, rng)
    base, _ = encode_features(raw)
    worst = 0.0
    all_equal = True
    for _ in range(100):
        yaw = rng.uniform(-np.pi, np.pi)
        delta = rng.uniform(-5.0, 5.0, size=2)
        moved, _ = encode_features(transform_motion(raw, yaw, delta))
        if not np.array_equal(moved.data, base.data):
            all_equal = False
            worst = max(worst, float(np.max(np.abs(moved.data - base.data))))
    report(
        "invariance (bitwise, 100 rigid transforms)", all_equal,
        f"max |delta| {worst:.2e}; expected-unattainable, see notes/decisions.md",
    )
    assert all_equal


def test_invariance_attainable_guarantees():
    """What does hold: <= 1e-12 everywhere; contacts/height/q/dq bitwise."""
    skeleton = humanoid_29dof_skeleton()
    rng = np.random.default_rng(2001)
    raw = random_smooth_motion(skeleton, 50, rng)
    base, _ = encode_features(raw)
    lay = base.layout
    exact_cols = np.r_[lay.contacts, lay.height, lay.q, lay.dq]
    worst = 0.0
    for _ in range(100):
        moved, _ = encode_features(
            transform_motion(raw, rng.uniform(-np.pi, np.pi), rng.uniform(-5.0, 5.0, 2))
        )
        worst = max(worst, float(np.max(np.abs(moved.data - base.data))))
        assert np.array_equal(moved.data[:, exact_cols], base.data[:, exact_cols])
    ok = worst <= 1e-12
    report("invariance (1e-12 + exact untouched channels)", ok, f"max |delta| {worst:.2e}")
    assert ok


def test_feature_dimension():
    ok = feature_dim(29, 2) == 69
    report("feature dimension (29, 2) -> 69", ok)
    assert ok


def test_ddpm_sampler_against_analytic_posterior():
    """Linear-Gaussian denoiser: 1e4 latents in d=8 match the propagated
    moments (mean within 4/sqrt(1e4) of the prior scale, variance 5%), < 60 s."""
    start = time.perf_counter()
    schedule = cosine_schedule(5)
    d = 8
    rng = np.random.default_rng(3000)
    mu = rng.uniform(-2.0, 2.0, d)
    var = rng.uniform(0.5, 2.0, d)
    denoiser = LinearGaussianDenoiser(mu, var, schedule)

    def gain(k):
        ab = schedule.alpha_bar_at(k)
        return np.sqrt(ab) * var / (ab * var + (1.0 - ab))

    def mean(k):
        ab = schedule.alpha_bar_at(k)
        return (1.0 - ab) * mu / (ab * var + (1.0 - ab))

    m = np.zeros(d)
    v = np.ones(d)
    for k in range(schedule.n_steps, 0, -1):
        g, c = gain(k), mean(k)
        if k == 1:
            m, v = g * m + c, g**2 * v
        else:
            ab = schedule.alpha_bar_at(k)
            a = schedule.alpha[k - 1]
            q = (1.0 - a) / np.sqrt(1.0 - ab)
            coef = (1.0 - q / np.sqrt(1.0 - ab) + q * np.sqrt(ab) * g / np.sqrt(1.0 - ab)) / np.sqrt(a)
            m = coef * m + q * np.sqrt(ab) * c / (np.sqrt(1.0 - ab) * np.sqrt(a))
            v = coef**2 * v + schedule.beta[k - 1]

    n = 10_000
    samples = ddpm_sample(denoiser, None, None, schedule, 1.0, np.random.default_rng(3001), n_samples=n)
    mean_err = np.abs(samples.mean(axis=0) - m)
    mean_band = 4.0 / np.sqrt(n) * np.sqrt(var)
    var_err = np.abs(samples.var(axis=0) - v)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(mean_err <= mean_band) and np.all(var_err <= 0.05 * v) and elapsed < 60.0)
    report(
        "ddpm sampler vs analytic posterior", ok,
        f"worst mean err {np.max(mean_err / np.sqrt(var)):.4f} prior-scales, "
        f"worst var err {np.max(var_err / v) * 100:.2f}%, {elapsed:.1f}s",
    )
    assert np.all(mean_err <= mean_band)
    assert np.all(var_err <= 0.05 * v)
    assert elapsed < 60.0


def test_cfg_identities():
    class Branches:
        latent_dim = 6

        def __init__(self, rng):
            self.cond = rng.standard_normal(6)
            self.uncond = rng.standard_normal(6)

        def predict(self, z_k, k, history=None, text_embedding=None):
            return (self.uncond if text_embedding is None else self.cond).copy()

    rng = np.random.default_rng(4000)
    den = Branches(rng)
    z = rng.standard_normal(6)
    e = np.ones(3)
    exact_cond = np.array_equal(cfg_predict(den, z, 1, None, e, 1.0), den.cond)
    exact_uncond = np.array_equal(cfg_predict(den, z, 1, None, e, 0.0), den.uncond)
    outs = {s: cfg_predict(den, z, 1, None, e, s) for s in (0.0, 1.0, 5.0)}
    affine_dev = float(np.max(np.abs(outs[5.0] - (outs[0.0] + 5.0 * (outs[1.0] - outs[0.0])))))
    ok = exact_cond and exact_uncond and affine_dev <= 1e-12
    report("cfg identities (scale 0 / 1 exact, affine at 0,1,5)", ok, f"affine dev {affine_dev:.2e}")
    assert exact_cond and exact_uncond
    assert affine_dev <= 1e-12


def test_epsilon_theta_consistency_thousand():
    schedule = cosine_schedule(5)
    rng = np.random.default_rng(5000)
    worst = 0.0
    for _ in range(1000):
        z0 = rng.standard_normal(8)
        eps = rng.standard_normal(8)
        k = int(rng.integers(1, 6))
        z_k = add_noise(z0, k, schedule, eps)
        worst = max(worst, float(np.max(np.abs(predicted_noise(z_k, z0, k, schedule) - eps))))
    ok = worst <= 1e-9
    report("epsilon recovery (1000 draws)", ok, f"max err {worst:.2e}")
    assert worst <= 1e-9


def test_metric_oracles():
    # FID self-distance and the 1-D closed form
    rng = np.random.default_rng(6000)
    stats = FeatureStats.from_samples(rng.standard_normal((300, 5)))
    self_fid = fid(stats, stats)
    one_d = fid(
        FeatureStats(np.array([0.0]), np.array([[1.0]]), 10),
        FeatureStats(np.array([1.0]), np.array([[4.0]]), 10),
    )
    # 10 mm global shift
    ref = rng.standard_normal((20, 15, 3)).cumsum(axis=0) * 0.01
    shifted = tracking_metrics(TrajectoryPair(ref + np.array([0.01, 0.0, 0.0]), ref))
    # success boundaries with J = 14
    base = np.zeros((10, 15, 3))
    base[:, :, 2] = np.linspace(0.0, 1.0, 15)[None, :]
    one_link = base.copy()
    one_link[4, 7, 0] += 0.31
    all_links = base.copy()
    all_links[4, 1:, 0] += 0.31
    succ_one = success_rate([TrajectoryPair(one_link, base)], theta=0.3)
    succ_all = success_rate([TrajectoryPair(all_links, base)], theta=0.3)
    e_one = max_relative_error(TrajectoryPair(one_link, base))
    # cubic-trajectory peak jerk
    t = np.arange(40, dtype=np.float64)
    pj = peak_jerk((t**3)[None, :])

    checks = {
        "fid(a,a)": abs(self_fid) <= 1e-9,
        "fid 1-D == 2": abs(one_d - 2.0) <= 1e-12,
        "g-mpjpe 10mm": abs(shifted["g_mpjpe"] - 10.0) <= 1e-9,
        "mpjpe 0": abs(shifted["mpjpe"]) <= 1e-9,
        "e_vel 0": abs(shifted["e_vel"]) <= 1e-9,
        "e_acc 0": abs(shifted["e_acc"]) <= 1e-9,
        "succ one-link": succ_one == 1.0 and abs(e_one - 0.31 / 14) <= 1e-12,
        "succ all-links": succ_all == 0.0,
        "cubic PJ == 6": abs(pj - 6.0) <= 1e-9,
    }
    ok = all(checks.values())
    report("metric oracles", ok, ", ".join(k for k, v in checks.items() if not v) or "all")
    assert ok, checks


def test_rate_invariant_sixty_seconds():
    out = simulate_stream_schedule(60.0)
    ok = out.frames_emitted == 3000 and out.generator_steps == 375 and out.underruns == 0
    report(
        "rate invariant (60 s ideal clocks)", ok,
        f"{out.frames_emitted} frames, {out.generator_steps} steps, {out.underruns} underruns",
    )
    assert out.frames_emitted == 3000
    assert out.generator_steps == 375
    assert out.underruns == 0


def test_text_stream_builder_thousand_draws():
    vocab = ["walk", "punch", "wave left hand", "wave right hand", "jump"]
    ok = True
    for seed in range(1000):
        tl = build_random_text_stream(vocab, np.random.default_rng(seed))
        first, last = tl.events[0], tl.events[-1]
        ok &= 22.0 <= tl.duration <= 54.0
        ok &= first.text == "stand" and first.time == 0.0 and tl.events[1].time == 2.0
        ok &= last.text == "stand" and tl.duration - last.time == 2.0
        if not ok:
            break
    report("text-stream builder (1000 draws in [22, 54] s)", bool(ok))
    assert ok


def test_end_to_end_semantic_switching(corpus_stack):
    """Scripted stand -> wave left hand -> walk session: >= 90% of post-switch
    blocks land on the latched label; clean-template R@1 = 1.0; < 2 min."""
    start = time.perf_counter()
    skeleton, built, codec, make_generator = corpus_stack
    timeline = CommandTimeline(
        (
            CommandEvent(0.0, "stand"),
            CommandEvent(4.0, "wave left hand"),
            CommandEvent(10.0, "walk"),
        ),
        16.0,
    )
    result = stream_session(
        timeline, make_generator(), 16.0, np.random.default_rng(123), stand_frame(skeleton)
    )
    feats, _ = encode_features(result.motion)
    hits = 0
    total = 0
    for step, command in enumerate(result.step_commands):
        begin = step * 8
        if begin + 8 > len(feats):
            break
        if begin / 50.0 < 4.0:  # post-switch blocks only
            continue
        label = built.index.nearest_label(feats.data[begin : begin + 8])
        total += 1
        hits += label == command
    rate = hits / max(total, 1)

    # clean-template retrieval alignment
    motion_emb, text_emb = [], []
    seen = set()
    for clip in built.clips:
        if clip.label in seen:
            continue
        seen.add(clip.label)
        clip_feats, _ = encode_features(clip.motion)
        motion_emb.append(built.embedder.embed_motion(clip_feats))
        text_emb.append(built.embedder.embed_text(clip.label))
    r1 = r_precision(np.stack(motion_emb), np.stack(text_emb), 1)
    elapsed = time.perf_counter() - start
    ok = rate >= 0.9 and r1 == 1.0 and elapsed < 120.0
    report(
        "end-to-end semantic switching", ok,
        f"label match {rate * 100:.1f}% post-switch, R@1 {r1:.2f}, {elapsed:.1f}s",
    )
    assert rate >= 0.9
    assert r1 == 1.0
    assert elapsed < 120.0


def test_online_offline_equivalence(corpus_stack):
    """A live server session replayed offline from its command log reproduces
    the frame stream bit for bit."""
    skeleton, built, codec, make_generator = corpus_stack
    seed = 9090
    config = SessionConfig(generator="retrieval-inproc", seed=seed)
    server = StreamServer(config, make_generator(), skeleton)
    host, port = server.start()
    try:
        client = ScriptedClient(host, port)
        client.wait_for(lambda m: m.get("type") == "frame")
        client.send({"type": "command", "text": "wave left hand"})
        client.wait_for(
            lambda m: m.get("type") == "frame" and m["active_command"] == "wave left hand"
        )
        client.send({"type": "command", "text": "walk"})
        client.wait_for(lambda m: m.get("type") == "frame" and m["active_command"] == "walk")
        client.drain_for(0.4)
        client.close()
    finally:
        server.stop()

    clean = server._buffer.underrun_count() == 0 and server._buffer.overrun_count() == 0
    frames = [m for m in client.messages if m["type"] == "frame"]
    replay = run_steps(
        list(server.step_commands), make_generator(), np.random.default_rng(seed),
        stand_frame(skeleton),
    )
    identical = bool(frames) and clean
    for message in frames:
        idx = message["frame_index"]
        identical &= replay.frame_commands[idx] == message["active_command"]
        identical &= bool(
            np.array_equal(message["root_position"], replay.motion.root_pos[idx])
            and np.array_equal(message["root_quaternion"], replay.motion.root_quat[idx])
            and np.array_equal(message["q"], replay.motion.joint_pos[idx])
            and np.array_equal(message["contacts"], replay.motion.contacts[idx])
        )
    report(
        "online/offline equivalence", identical,
        f"{len(frames)} frames compared bitwise, underruns {server._buffer.underrun_count()}",
    )
    assert identical


def test_latency_floor_from_latching(corpus_stack):
    """Supporting check: command-to-new-frame latency respects the one-block
    latching floor (160 ms at the default rates)."""
    skeleton, _, _, make_generator = corpus_stack
    server = StreamServer(SessionConfig(seed=5), make_generator(), skeleton)
    host, port = server.start()
    try:
        client = ScriptedClient(host, port)
        client.wait_for(lambda m: m.get("type") == "frame")
        client.send({"type": "command", "text": "punch"})
        client.wait_for(lambda m: m.get("type") == "frame" and m["active_command"] == "punch")
        client.close()
    finally:
        server.stop()
    stats = measure_latency(server.log, min_events=1)["stages"]["end_to_end"]
    ok = 160.0 <= stats["mean_ms"] < 2000.0
    report("latency floor (>= 160 ms by latching)", ok, f"{stats['mean_ms']:.0f} ms")
    assert ok
