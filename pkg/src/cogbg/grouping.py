"""Training phase, part 2: spatio-temporal grouping.

Pixels whose mixture adapts alike (similar temporal variability of the
dominant mode's adapted variance and ranked weight) are clustered with
k-means, trimmed to a sigma band around each cluster's feature mean, and
given one shared dominant mode (mu_grp, sigma_grp, omega_grp) per channel.
Grouped pixels test that shared level early in the cascade; one update per
frame serves the whole group.

Clustering features come from channel 0; shared mode parameters are pooled
per channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .errors import ClusteringError, TrainingError
from .frame_io import Frame
from .gmm import init_plane
from .scene_prior import stack_training

UNGROUPED = -1


@dataclass
class AdaptedStats:
    """Per-training-frame series of the dominant mode's state, channel 0."""

    variance_series: np.ndarray  # (N, P) float64
    weight_series: np.ndarray    # (N, P) float64


@dataclass
class GroupMap:
    group_id: np.ndarray      # (P,) int64, UNGROUPED = -1
    mu: np.ndarray            # (G, d) float64 shared mode mean
    var: np.ndarray           # (G, d) float64 shared mode variance
    weight: np.ndarray        # (G,) float64 mean final dominant weight
    member_count: np.ndarray  # (G,) int64

    @property
    def group_count(self) -> int:
        return self.mu.shape[0]

    @staticmethod
    def empty(n_pix: int, depth: int) -> "GroupMap":
        return GroupMap(
            group_id=np.full(n_pix, UNGROUPED, dtype=np.int64),
            mu=np.zeros((0, depth)), var=np.zeros((0, depth)),
            weight=np.zeros(0), member_count=np.zeros(0, dtype=np.int64))


def collect_adapted_stats(frames: list[Frame],
                          config: EngineConfig) -> AdaptedStats:
    """Run the baseline mixture over the training frames, recording the
    dominant (rank-1) mode's variance and weight per pixel per frame."""
    if not (0 < config.learning_rate < 1):
        raise TrainingError("learning_rate must be in (0, 1)")
    values = stack_training(frames)  # raises on < 2 frames
    n = values.shape[0]
    chan0 = values[:, 0].reshape(n, -1)
    n_pix = chan0.shape[1]
    grid = init_plane(chan0[0], config.k_max, config.initial_variance)
    var_series = np.empty((n, n_pix), dtype=np.float64)
    w_series = np.empty((n, n_pix), dtype=np.float64)
    var_series[0] = grid.var[:, 0]
    w_series[0] = grid.w[:, 0]
    from . import kernels_numpy
    out = np.empty(n_pix, dtype=np.uint8)
    for i in range(1, n):
        kernels_numpy.baseline_frame(
            chan0[i], grid.mu, grid.var, grid.w, grid.count,
            config.learning_rate, config.match_lambda,
            config.background_threshold, config.variance_floor,
            config.initial_variance, out)
        var_series[i] = grid.var[:, 0]
        w_series[i] = grid.w[:, 0]
    return AdaptedStats(variance_series=var_series, weight_series=w_series)


def behavior_features(stats: AdaptedStats) -> np.ndarray:
    """(P, 2) features: temporal variance of the adapted-variance series and
    of the weight series."""
    return np.stack([
        stats.variance_series.var(axis=0, ddof=0),
        stats.weight_series.var(axis=0, ddof=0),
    ], axis=1)


def _zscore(features: np.ndarray) -> np.ndarray:
    mean = features.mean(axis=0)
    std = features.std(axis=0, ddof=0)
    return (features - mean) / np.where(std > 0, std, 1.0)


def kmeans(features: np.ndarray, k: int, seed: int,
           max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic k-means: seeded first center, farthest-point spread for
    the rest, lowest-index tie breaks. Returns (assignment, centroids)."""
    n = features.shape[0]
    if n < k:
        raise ClusteringError(f"{n} pixels cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    centers = np.empty((k, features.shape[1]))
    first = int(rng.integers(n))
    centers[0] = features[first]
    d2 = ((features - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        centers[j] = features[int(np.argmax(d2))]
        d2 = np.minimum(d2, ((features - centers[j]) ** 2).sum(axis=1))
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dist = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(dist, axis=1)  # ties -> lowest index
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = features[assign == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
    return assign, centers


def kmeans_objective(features: np.ndarray, assign: np.ndarray,
                     centers: np.ndarray) -> float:
    return float(((features - centers[assign]) ** 2).sum())


def cluster_pixels(stats: AdaptedStats, k: int,
                   seed: int = 0) -> np.ndarray:
    """Raw cluster assignment from z-scored behavior features (the two
    feature scales differ by orders of magnitude)."""
    assign, _ = kmeans(_zscore(behavior_features(stats)), k, seed)
    return assign


def threshold_clusters(assign: np.ndarray, stats: AdaptedStats,
                       c: float) -> np.ndarray:
    """Keep pixels whose both features lie within mean +/- c*stddev of
    their cluster; others (and clusters too small to have a stddev) become
    ungrouped. Returns per-pixel group id with UNGROUPED = -1."""
    features = behavior_features(stats)
    membership = np.full(assign.shape[0], UNGROUPED, dtype=np.int64)
    for j in np.unique(assign):
        sel = assign == j
        if sel.sum() < 2:
            continue
        feats = features[sel]
        mean = feats.mean(axis=0)
        std = feats.std(axis=0, ddof=0)
        dev = np.abs(feats - mean)
        ok = dev <= c * std
        # a spread-free feature column is trivially inside any band
        ok |= np.ptp(feats, axis=0) == 0
        membership[np.where(sel)[0][ok.all(axis=1)]] = j
    return membership


def build_group_params(membership: np.ndarray, frames: list[Frame],
                       stats: AdaptedStats,
                       config: EngineConfig) -> GroupMap:
    """Pool member training intensities into one shared mode per group and
    channel; drop empty groups and renumber densely."""
    values = stack_training(frames)  # (N, d, H, W)
    n, d = values.shape[:2]
    flat = values.reshape(n, d, -1)
    n_pix = flat.shape[2]
    if membership.shape[0] != n_pix:
        raise TrainingError("membership does not match frame geometry")
    # a one-pixel "group" would just shadow that pixel's own mode
    kept = [j for j in np.unique(membership) if j != UNGROUPED
            and (membership == j).sum() >= 2]
    g_count = len(kept)
    group_id = np.full(n_pix, UNGROUPED, dtype=np.int64)
    mu = np.zeros((g_count, d))
    var = np.zeros((g_count, d))
    weight = np.zeros(g_count)
    members = np.zeros(g_count, dtype=np.int64)
    final_w = stats.weight_series[-1]
    for gi, j in enumerate(kept):
        sel = membership == j
        group_id[sel] = gi
        members[gi] = sel.sum()
        pooled = flat[:, :, sel].astype(np.float64)  # (N, d, m)
        mu[gi] = pooled.mean(axis=(0, 2))
        var[gi] = np.maximum(pooled.var(axis=(0, 2), ddof=0),
                             config.variance_floor)
        weight[gi] = final_w[sel].mean()
    return GroupMap(group_id=group_id, mu=mu, var=var, weight=weight,
                    member_count=members)


def build_groups(frames: list[Frame], config: EngineConfig,
                 stats: AdaptedStats | None = None) -> GroupMap:
    """Full grouping pipeline; an all-ungrouped map when grouping is off."""
    values_shape = (frames[0].depth, frames[0].height * frames[0].width)
    if not config.grouping:
        return GroupMap.empty(values_shape[1], values_shape[0])
    if stats is None:
        stats = collect_adapted_stats(frames, config)
    assign = cluster_pixels(stats, config.clusters, config.cluster_seed)
    membership = threshold_clusters(assign, stats, config.cluster_threshold)
    return build_group_params(membership, frames, stats, config)
