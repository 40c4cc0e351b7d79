"""Metric tests: closed-form oracles, brute-force re-implementations, and
the stated invariances."""

import numpy as np
import pytest

from motionstream.errors import DimensionError
from motionstream.metrics import (
    FeatureStats,
    PartialStats,
    TrajectoryPair,
    auj,
    diversity,
    fid,
    jerk_baseline,
    joint_jerk,
    max_relative_error,
    mm_dist,
    peak_jerk,
    r_precision,
    success_rate,
    tracking_metrics,
    transition_clips,
)


def stats(mu, sigma):
    return FeatureStats(np.atleast_1d(mu), np.atleast_2d(sigma), 10)


# -- FID -----------------------------------------------------------------------


def test_fid_self_distance_zero():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 6))
    s = FeatureStats.from_samples(x)
    assert abs(fid(s, s)) <= 1e-9


def test_fid_scalar_closed_form():
    # 1-D: (mu 0, var 1) vs (mu 1, var 4): 1 + (1 + 4 - 2*2) = 2
    assert fid(stats(0.0, 1.0), stats(1.0, 4.0)) == pytest.approx(2.0, abs=1e-12)


def test_fid_diagonal_separability():
    mu_g = np.array([0.0, 1.0, -2.0])
    mu_r = np.array([0.5, 0.0, 1.0])
    var_g = np.array([1.0, 2.0, 0.5])
    var_r = np.array([4.0, 1.0, 1.5])
    total = fid(
        FeatureStats(mu_g, np.diag(var_g), 10), FeatureStats(mu_r, np.diag(var_r), 10)
    )
    per_dim = sum(
        fid(stats(mg, vg), stats(mr, vr))
        for mg, vg, mr, vr in zip(mu_g, var_g, mu_r, var_r)
    )
    assert total == pytest.approx(per_dim, abs=1e-9)


def test_fid_symmetry_and_nonnegativity():
    rng = np.random.default_rng(1)
    a = FeatureStats.from_samples(rng.standard_normal((100, 4)))
    b = FeatureStats.from_samples(rng.standard_normal((100, 4)) + 0.5)
    assert fid(a, b) == pytest.approx(fid(b, a), rel=1e-9)
    assert fid(a, b) >= -1e-9


def test_fid_dimension_mismatch():
    with pytest.raises(DimensionError):
        fid(stats(0.0, 1.0), FeatureStats(np.zeros(2), np.eye(2), 5))


def test_partial_stats_merge_matches_direct():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((50, 3))
    a = PartialStats.empty(3)
    b = PartialStats.empty(3)
    a.add(x[:20])
    b.add(x[20:])
    merged = a.merge(b).finalize()
    direct = FeatureStats.from_samples(x)
    np.testing.assert_allclose(merged.mu, direct.mu, atol=1e-12)
    np.testing.assert_allclose(merged.sigma, direct.sigma, atol=1e-12)
    assert merged.n == 50


# -- diversity -------------------------------------------------------------------


def test_diversity_identical_embeddings_zero():
    x = np.tile([1.0, 2.0], (20, 1))
    assert diversity(x, 5, np.random.default_rng(0)) == 0.0


def test_diversity_two_points():
    a, b = np.array([0.0, 0.0]), np.array([3.0, 4.0])
    assert diversity(np.stack([a, b]), 1, np.random.default_rng(0)) == pytest.approx(5.0)


def test_diversity_matches_independent_reimplementation():
    rng = np.random.default_rng(42)
    x = rng.standard_normal((100, 8))
    got = diversity(x, 32, np.random.default_rng(7))
    # straight-line oracle replicating the documented single permutation draw
    perm = np.random.default_rng(7).permutation(100)
    expected = np.mean(
        [np.linalg.norm(x[perm[i]] - x[perm[32 + i]]) for i in range(32)]
    )
    assert got == pytest.approx(expected, rel=1e-12)


def test_diversity_requires_enough_samples():
    with pytest.raises(DimensionError):
        diversity(np.zeros((10, 2)), 6, np.random.default_rng(0))


# -- retrieval precision -----------------------------------------------------------


def test_r_precision_perfect_extractor():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((32, 5))
    assert r_precision(x, x, 1) == 1.0
    assert mm_dist(x, x) == 0.0


def test_r_precision_brute_force_oracle():
    rng = np.random.default_rng(4)
    m = 16
    motions = rng.standard_normal((m, 6))
    texts = rng.standard_normal((m, 6))
    for k in (1, 3, 5):
        got = r_precision(motions, texts, k)
        hits = 0
        for i in range(m):
            d = [float(np.linalg.norm(motions[j] - texts[i])) for j in range(m)]
            ranked = sorted(range(m), key=lambda j: (d[j], j))
            hits += i in ranked[:k]
        assert got == pytest.approx(hits / m)


def test_r_precision_separated_clusters():
    rng = np.random.default_rng(5)
    centers = np.eye(3) * 100.0
    labels = rng.integers(0, 3, size=32)
    motions = centers[labels] + 0.01 * rng.standard_normal((32, 3))
    texts = centers[labels] + 0.01 * rng.standard_normal((32, 3))
    assert r_precision(motions, texts, 32) == 1.0  # K = M is always 1
    with pytest.raises(DimensionError):
        r_precision(motions, texts, 33)


def test_mm_dist_value():
    x = np.array([[0.0, 0.0], [1.0, 0.0]])
    h = np.array([[3.0, 4.0], [1.0, 2.0]])
    assert mm_dist(x, h) == pytest.approx((5.0 + 2.0) / 2.0)


# -- jerk ---------------------------------------------------------------------------


def test_jerk_constant_trajectory():
    traj = np.full((3, 20), 1.7)
    assert peak_jerk(traj) == 0.0
    j_avg = 0.4
    assert auj(traj, j_avg) == pytest.approx(20 * j_avg)  # every frame deviates by j_avg


def test_jerk_cubic_trajectory():
    t = np.arange(30, dtype=np.float64)
    traj = (t**3)[None, :]
    j = joint_jerk(traj)
    np.testing.assert_allclose(j, np.full((1, 30), 6.0), atol=1e-9)
    assert peak_jerk(traj) == pytest.approx(6.0, abs=1e-9)
    assert jerk_baseline([traj]) == pytest.approx(6.0, abs=1e-9)


def test_jerk_sinusoid_matches_independent_difference():
    t = np.arange(64, dtype=np.float64)
    traj = np.sin(0.3 * t)[None, :]
    # independent oracle: plain third differences, edge-replicated
    x = traj[0]
    core = np.array([x[i] - 3 * x[i - 1] + 3 * x[i - 2] - x[i - 3] for i in range(3, 64)])
    expected = np.concatenate([[core[0]] * 3, core])
    np.testing.assert_allclose(joint_jerk(traj)[0], expected, atol=1e-12)
    assert peak_jerk(traj) == pytest.approx(np.max(np.abs(expected)))


def test_jerk_linearity():
    rng = np.random.default_rng(6)
    traj = rng.standard_normal((4, 40))
    assert peak_jerk(-2.5 * traj) == pytest.approx(2.5 * peak_jerk(traj), rel=1e-12)


def test_jerk_baseline_mean_of_two_clips():
    t = np.arange(30, dtype=np.float64)
    cubic = (t**3)[None, :]
    flat = np.zeros((1, 30))
    assert jerk_baseline([flat, cubic]) == pytest.approx(3.0, abs=1e-9)
    with pytest.raises(DimensionError):
        jerk_baseline([])


def test_jerk_needs_four_samples():
    with pytest.raises(DimensionError):
        joint_jerk(np.zeros((2, 3)))


# -- transition clips ------------------------------------------------------------------


def test_transition_clip_window():
    motion = np.arange(200)
    clips = transition_clips(motion, [100])
    assert len(clips) == 1
    np.testing.assert_array_equal(clips[0], np.arange(85, 115))


def test_transition_clip_edge_skipped():
    with pytest.warns(UserWarning):
        clips = transition_clips(np.arange(200), [5])
    assert clips == []


def test_transition_clips_order_preserved():
    clips = transition_clips(np.arange(300), [100, 200])
    assert len(clips) == 2
    assert clips[0][0] == 85 and clips[1][0] == 185


# -- tracking fidelity -------------------------------------------------------------------


def random_trajectory(rng, t=20, links=15):
    return rng.standard_normal((t, links, 3)).cumsum(axis=0) * 0.01


def test_tracking_perfect():
    rng = np.random.default_rng(7)
    ref = random_trajectory(rng)
    pair = TrajectoryPair(ref, ref)
    out = tracking_metrics(pair)
    assert all(v == 0.0 for v in out.values())
    assert success_rate([pair]) == 1.0


def test_tracking_rigid_offset():
    rng = np.random.default_rng(8)
    ref = random_trajectory(rng)
    pol = ref + np.array([0.01, 0.0, 0.0])
    out = tracking_metrics(TrajectoryPair(pol, ref))
    assert out["g_mpjpe"] == pytest.approx(10.0, abs=1e-9)
    assert out["mpjpe"] == pytest.approx(0.0, abs=1e-9)
    assert out["e_vel"] == pytest.approx(0.0, abs=1e-9)
    assert out["e_acc"] == pytest.approx(0.0, abs=1e-9)
    assert success_rate([TrajectoryPair(pol, ref)]) == 1.0


def test_success_boundary_cases():
    # J = 14 non-root links; one link offset 0.31 m at one frame
    t, links = 10, 15
    ref = np.zeros((t, links, 3))
    ref[:, :, 2] = np.linspace(0.0, 1.0, links)[None, :]
    pol = ref.copy()
    pol[4, 7, 0] += 0.31
    pair = TrajectoryPair(pol, ref)
    assert max_relative_error(pair) == pytest.approx(0.31 / 14.0, abs=1e-12)
    assert success_rate([pair], theta=0.3) == 1.0
    pol_all = ref.copy()
    pol_all[4, 1:, 0] += 0.31  # every non-root link offset: mean error 0.31 > theta
    pair_all = TrajectoryPair(pol_all, ref)
    assert max_relative_error(pair_all) == pytest.approx(0.31, abs=1e-12)
    assert success_rate([pair_all], theta=0.3) == 0.0
    assert success_rate([pair, pair_all], theta=0.3) == 0.5


def test_success_monotone_in_theta():
    rng = np.random.default_rng(9)
    pairs = []
    for _ in range(10):
        ref = random_trajectory(rng)
        pol = ref + rng.uniform(0, 0.05) * rng.standard_normal(ref.shape)
        pairs.append(TrajectoryPair(pol, ref))
    rates = [success_rate(pairs, theta) for theta in (0.001, 0.01, 0.1, 1.0)]
    assert all(a <= b for a, b in zip(rates, rates[1:]))


def test_tracking_invariances():
    rng = np.random.default_rng(10)
    ref = random_trajectory(rng)
    pol = ref + 0.002 * rng.standard_normal(ref.shape)
    base = tracking_metrics(TrajectoryPair(pol, ref))

    # common rigid transform applied to both leaves every metric unchanged
    from motionstream import quat

    rot = quat.from_yaw(0.7)
    shift = np.array([1.0, -2.0, 0.5])
    moved = tracking_metrics(
        TrajectoryPair(quat.rotate(rot, pol) + shift, quat.rotate(rot, ref) + shift)
    )
    for key in base:
        assert moved[key] == pytest.approx(base[key], rel=1e-9), key

    # constant offset on the policy only: temporal metrics unchanged
    off = tracking_metrics(TrajectoryPair(pol + np.array([0.3, 0.0, 0.0]), ref))
    assert off["e_vel"] == pytest.approx(base["e_vel"], rel=1e-9)
    assert off["e_acc"] == pytest.approx(base["e_acc"], rel=1e-9)

    # shared linear-in-time drift: acceleration error unchanged
    t = pol.shape[0]
    drift = np.linspace(0, 0.5, t)[:, None, None] * np.array([1.0, 0.0, 0.0])
    drifted = tracking_metrics(TrajectoryPair(pol + drift, ref))
    assert drifted["e_acc"] == pytest.approx(base["e_acc"], rel=1e-9)


def test_tracking_shape_errors():
    with pytest.raises(DimensionError):
        TrajectoryPair(np.zeros((5, 3, 3)), np.zeros((6, 3, 3)))
    with pytest.raises(DimensionError):
        tracking_metrics(TrajectoryPair(np.zeros((2, 3, 3)), np.zeros((2, 3, 3))))
