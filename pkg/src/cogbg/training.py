"""Training pipeline: frames in, ready-to-run cascade engine out.

One pass builds the scene prior (KDE + dynamics profile), a second runs the
plain mixture over every plane to convergence while recording the channel-0
adaptation series that grouping clusters on. Training always uses the numpy
kernels so the resulting model is identical whatever backend later runs it.
"""

from __future__ import annotations

import numpy as np

from . import kernels_numpy
from .cascade import CascadeEngine
from .config import EngineConfig
from .frame_io import Frame
from .gmm import init_plane
from .grouping import AdaptedStats, GroupMap, build_groups
from .scene_prior import (
    DYN_DYNAMIC,
    DYN_OSCILLATING,
    DYN_STATIC_DRIFT,
    build_scene_prior,
    stack_training,
)


def train_engine(frames: list[Frame], config: EngineConfig) -> CascadeEngine:
    prior = build_scene_prior(frames, config)
    values = stack_training(frames)
    n, d, h, wdt = values.shape
    flat = values.reshape(n, d, -1)
    n_pix = h * wdt
    var_series = np.empty((n, n_pix))
    w_series = np.empty((n, n_pix))
    grids = []
    out = np.empty(n_pix, dtype=np.uint8)
    for c in range(d):
        grid = init_plane(flat[0, c], config.k_max, config.initial_variance)
        if c == 0:
            var_series[0] = grid.var[:, 0]
            w_series[0] = grid.w[:, 0]
        for i in range(1, n):
            kernels_numpy.baseline_frame(
                flat[i, c], grid.mu, grid.var, grid.w, grid.count,
                config.learning_rate, config.match_lambda,
                config.background_threshold, config.variance_floor,
                config.initial_variance, out)
            if c == 0:
                var_series[i] = grid.var[:, 0]
                w_series[i] = grid.w[:, 0]
        grids.append(grid)
    if config.grouping:
        stats = AdaptedStats(variance_series=var_series,
                             weight_series=w_series)
        groups = build_groups(frames, config, stats=stats)
    else:
        groups = GroupMap.empty(n_pix, d)
    return CascadeEngine.build(config, prior, groups, grids, h, wdt,
                               flat[-1].copy())


def training_summary(engine: CascadeEngine) -> dict:
    """Composition figures for the train command's report."""
    n_pix = engine.n_pix
    classes = engine.dynamics
    grouped = int((engine.group_id >= 0).sum())
    return {
        "pixels": n_pix,
        "planes": engine.depth,
        "kde_bandwidth": engine.bandwidth,
        "training_frames": engine.sample_count,
        "static_drift_fraction": float((classes == DYN_STATIC_DRIFT).mean()),
        "oscillating_fraction": float((classes == DYN_OSCILLATING).mean()),
        "dynamic_fraction": float((classes == DYN_DYNAMIC).mean()),
        "group_count": int(engine.group_w.shape[0]),
        "grouped_fraction": grouped / n_pix,
    }
