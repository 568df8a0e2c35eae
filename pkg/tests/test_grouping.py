"""Behavior-similarity grouping: k-means determinism, sigma-band trimming,
and pooled group parameters."""

import numpy as np
import pytest

from cogbg.config import EngineConfig
from cogbg.errors import ClusteringError
from cogbg.frame_io import Frame, FramePlane
from cogbg.grouping import (
    UNGROUPED,
    AdaptedStats,
    behavior_features,
    build_group_params,
    build_groups,
    cluster_pixels,
    collect_adapted_stats,
    kmeans,
    kmeans_objective,
    threshold_clusters,
)
from cogbg.synthgen import SynthRegion, SynthSpec, generate


def frames_from(arrays):
    return [Frame(index=i,
                  planes=[FramePlane(channel_id=0, data=np.asarray(a))])
            for i, a in enumerate(arrays)]


def adjusted_rand_index(a, b):
    ca = np.unique(a, return_inverse=True)[1]
    cb = np.unique(b, return_inverse=True)[1]
    table = np.zeros((ca.max() + 1, cb.max() + 1), dtype=np.int64)
    np.add.at(table, (ca, cb), 1)

    def comb2(x):
        return x * (x - 1) // 2

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    total = comb2(np.int64(a.size))
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    return (sum_ij - expected) / (max_index - expected)


def three_behavior_scene(n_frames=60, seed=7):
    spec = SynthSpec(
        width=48, height=48, frame_count=n_frames, seed=seed,
        regions=[
            SynthRegion(rect=(0, 0, 16, 48), kind="static",
                        level=100.0, noise=0.3),
            SynthRegion(rect=(16, 0, 16, 48), kind="oscillating",
                        level=100.0, noise=0.3, amplitude=40.0, period=4),
            SynthRegion(rect=(32, 0, 16, 48), kind="dynamic",
                        level=100.0, noise=25.0),
        ])
    frames = [f for f, _ in generate(spec)]
    truth = np.zeros((48, 48), dtype=np.int64)
    truth[:, 16:32] = 1
    truth[:, 32:] = 2
    return frames, truth.ravel()


def test_kmeans_recovers_separated_blobs():
    rng = np.random.default_rng(4)
    centers = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
    labels = np.repeat([0, 1, 2], 150)
    feats = centers[labels] + rng.normal(0.0, 0.25, size=(450, 2))
    assign, _ = kmeans(feats, k=3, seed=0)
    assert adjusted_rand_index(assign, labels) >= 0.95


def test_cluster_pixels_separates_constructed_behaviors():
    # alternating series x + a*(-1)^t has temporal variance a^2, so the
    # amplitudes below place the three blocks at distinct feature blobs
    rng = np.random.default_rng(9)
    labels = np.repeat([0, 1, 2], 100)
    var_amp = np.array([1.0, 10.0, 30.0])[labels] + rng.normal(0, 0.01, 300)
    w_amp = np.array([0.05, 0.2, 0.4])[labels] + rng.normal(0, 0.001, 300)
    sign = (-1.0) ** np.arange(20)
    stats = AdaptedStats(
        variance_series=200.0 + np.outer(sign, var_amp),
        weight_series=0.5 + np.outer(sign, w_amp))
    assign = cluster_pixels(stats, k=3, seed=0)
    assert adjusted_rand_index(assign, labels) >= 0.95


def test_kmeans_objective_nonincreasing():
    rng = np.random.default_rng(3)
    feats = rng.normal(size=(200, 2))
    objectives = []
    for iters in range(1, 8):
        assign, centers = kmeans(feats, k=3, seed=0, max_iter=iters)
        objectives.append(kmeans_objective(feats, assign, centers))
    assert all(b <= a + 1e-9 for a, b in zip(objectives, objectives[1:]))


def test_kmeans_deterministic():
    rng = np.random.default_rng(11)
    feats = rng.normal(size=(300, 2))
    a1, c1 = kmeans(feats, k=3, seed=5)
    a2, c2 = kmeans(feats, k=3, seed=5)
    assert np.array_equal(a1, a2)
    assert np.array_equal(c1, c2)


def test_kmeans_too_few_points():
    with pytest.raises(ClusteringError):
        kmeans(np.zeros((2, 2)), k=3, seed=0)


def test_identical_features_form_one_full_group():
    # constant scene: every pixel's adaptation series is identical
    arrays = [np.full((6, 6), 90) for _ in range(12)]
    cfg = EngineConfig()
    gmap = build_groups(frames_from(arrays), cfg)
    assert gmap.group_count == 1
    assert np.all(gmap.group_id == 0)
    assert gmap.member_count[0] == 36
    assert gmap.mu[0, 0] == pytest.approx(90.0)
    # pooled variance of a constant signal hits the floor
    assert gmap.var[0, 0] == pytest.approx(cfg.variance_floor)


def test_outlier_pixel_stays_ungrouped():
    rng = np.random.default_rng(0)
    base = rng.normal(100.0, 0.3, size=(40, 8, 8))
    base[:, 4, 4] = rng.normal(100.0, 40.0, size=40)  # one wild pixel
    arrays = [np.clip(np.rint(a), 0, 255) for a in base]
    cfg = EngineConfig(cluster_threshold=2.0)
    gmap = build_groups(frames_from(arrays), cfg)
    outlier = 4 * 8 + 4
    assert gmap.group_id[outlier] == UNGROUPED
    quiet = np.delete(np.arange(64), outlier)
    assert (gmap.group_id[quiet] != UNGROUPED).mean() > 0.75


def test_zero_band_keeps_only_exact_mean_members():
    rng = np.random.default_rng(2)
    stats = AdaptedStats(variance_series=rng.normal(size=(10, 50)) ** 2,
                         weight_series=rng.uniform(size=(10, 50)))
    assign = np.zeros(50, dtype=np.int64)
    membership = threshold_clusters(assign, stats, c=0.0)
    feats = behavior_features(stats)
    mean = feats.mean(axis=0)
    expected = np.all(feats == mean, axis=1)
    assert np.array_equal(membership != UNGROUPED, expected)


def test_sigma_band_trims_tails():
    # cluster of 99 tight points plus one at ~9 sigma
    var_series = np.zeros((4, 100))
    var_series[:, :] = np.linspace(0, 1, 100)  # per-pixel spread in Var_t
    weight_series = np.zeros((4, 100))
    var_series[:, 99] = [0, 40, 0, 40]  # huge temporal variance
    stats = AdaptedStats(var_series, weight_series)
    assign = np.zeros(100, dtype=np.int64)
    membership = threshold_clusters(assign, stats, c=2.0)
    assert membership[99] == UNGROUPED
    assert (membership[:99] != UNGROUPED).sum() > 90


def test_small_clusters_dropped():
    var_series = np.zeros((3, 5))
    weight_series = np.zeros((3, 5))
    stats = AdaptedStats(var_series, weight_series)
    membership = np.array([0, 0, 1, UNGROUPED, UNGROUPED])
    arrays = [np.full((1, 5), 10) for _ in range(3)]
    cfg = EngineConfig()
    gmap = build_group_params(membership, frames_from(arrays), stats, cfg)
    assert gmap.group_count == 1  # the singleton cluster 1 is dropped
    assert np.array_equal(gmap.group_id, [0, 0, -1, -1, -1])


def test_group_params_pool_member_intensities():
    arrays = [np.array([[10, 20, 200]]), np.array([[30, 40, 200]])]
    stats = AdaptedStats(variance_series=np.zeros((2, 3)),
                         weight_series=np.array([[1.0, 1.0, 1.0],
                                                 [0.6, 0.8, 1.0]]))
    membership = np.array([0, 0, UNGROUPED])
    cfg = EngineConfig()
    gmap = build_group_params(membership, frames_from(arrays), stats, cfg)
    pooled = np.array([10, 20, 30, 40], dtype=np.float64)
    assert gmap.mu[0, 0] == pytest.approx(pooled.mean())
    assert gmap.var[0, 0] == pytest.approx(max(pooled.var(), 4.0))
    assert gmap.weight[0] == pytest.approx((0.6 + 0.8) / 2)


def test_grouping_disabled_yields_empty_map():
    arrays = [np.full((4, 4), 50) for _ in range(5)]
    cfg = EngineConfig(grouping=False)
    gmap = build_groups(frames_from(arrays), cfg)
    assert gmap.group_count == 0
    assert np.all(gmap.group_id == UNGROUPED)


def test_build_groups_deterministic():
    frames, _ = three_behavior_scene(n_frames=30, seed=3)
    cfg = EngineConfig()
    g1 = build_groups(frames, cfg)
    g2 = build_groups(frames, cfg)
    assert np.array_equal(g1.group_id, g2.group_id)
    assert np.array_equal(g1.mu, g2.mu)
    assert np.array_equal(g1.var, g2.var)
    assert np.array_equal(g1.weight, g2.weight)
