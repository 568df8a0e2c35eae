"""Runtime engine: an ordered rejection cascade over per-pixel Gaussians.

Each pixel (per channel) descends: CHP (repeat the previous label if the
value is unchanged) -> shared group mode -> dominant mode, mean-only update
-> secondary mode, mean+variance update -> full mixture update. The first
matching level wins and is the only one updated that frame. A per-pixel
confidence (scene-prior fit + temporal stability + top-mode fit) scales the
learning rate and drives spatio-temporal sampling: pixels confident for
`saturation_frames` straight frames sleep for `sleep_frames`, repeating
their label, and off-lattice pixels copy a stride neighbor on wake frames.

Color planes run independent cascades with shared sampling geometry; the
output mask is the union of per-plane foreground.

Compatibility mode strips every shortcut (no CHP, groups, sampling,
confidence scaling, reordering, illumination resets) and updates the full
mixture every frame, which reproduces the plain per-pixel mixture output
byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend as backend_mod
from . import kernels_numpy
from .config import EngineConfig
from .errors import DataError
from .frame_io import Frame, LabelMask
from .gmm import GmmGrid
from .grouping import GroupMap
from .kernels_numba import (
    KIND_COPY,
    KIND_SKIP,
    LEVEL_CHP,
    LEVEL_GMM,
    LEVEL_GROUP,
    LEVEL_MEAN,
    LEVEL_MEANVAR,
)
from .scene_prior import ScenePrior

STATS_FIELDS = ("frame", "n_chp", "n_group", "n_mean", "n_meanvar", "n_gmm",
                "n_skipped", "n_foreground", "unexplained",
                "illumination_fired")


@dataclass
class FrameStats:
    """Per-frame level populations and monitor state, pooled over planes."""

    frame: int
    n_chp: int
    n_group: int
    n_mean: int
    n_meanvar: int
    n_gmm: int
    n_skipped: int
    n_foreground: int
    unexplained: int
    illumination_fired: bool

    def as_row(self) -> list:
        return [self.frame, self.n_chp, self.n_group, self.n_mean,
                self.n_meanvar, self.n_gmm, self.n_skipped,
                self.n_foreground, self.unexplained,
                int(self.illumination_fired)]


def chp_check(previous: int, value: int, epsilon: float = 0.0) -> bool:
    """Consistent-hypothesis probe: unchanged within the tolerance band."""
    return abs(int(value) - int(previous)) <= epsilon


def compute_confidence(value: float, prev_value: float, mu_top: float,
                       sigma_top: float, prior_hat: float,
                       weights: tuple[float, float, float],
                       match_lambda: float = 2.5,
                       prior_floor: float = 1e-3,
                       literal: bool = False) -> float:
    """Scalar reference for the per-pixel confidence.

    prior_hat is the scene-prior density at `value` normalized by the
    pixel's table peak. Below `prior_floor` the prior term is dropped and
    the remaining weights renormalized. The default form turns the two
    difference terms into similarities so every term lies in [0, 1]; the
    literal form keeps raw differences.
    """
    a, b, g = weights
    bterm = abs(value - prev_value) / 255.0
    if not literal:
        bterm = 1.0 - bterm
    gterm = min(abs(value - mu_top) / (match_lambda * sigma_top), 1.0)
    if not literal:
        gterm = 1.0 - gterm
    if prior_hat < prior_floor:
        denom = b + g
        if denom <= 0.0:
            return 0.0
        return (b * bterm + g * gterm) / denom
    return a * prior_hat + b * bterm + g * gterm


def _kernels(backend: str):
    if backend == "numba":
        from . import kernels_numba
        return kernels_numba
    return kernels_numpy


class CascadeEngine:
    """Holds all per-pixel cascade state and processes frames in order."""

    def __init__(self, config: EngineConfig, height: int, width: int,
                 depth: int) -> None:
        self.config = config
        self.height = height
        self.width = width
        self.depth = depth
        self.n_pix = height * width
        self.backend = backend_mod.resolve_backend(config.backend)
        self._kern = _kernels(self.backend)
        self.frame_count = 0
        k = config.k_max
        p = self.n_pix
        d = depth
        self.bandwidth = 0.0
        self.sample_count = 0
        self.dynamics = np.zeros(p, dtype=np.uint8)
        self.wa = np.zeros(p)
        self.wb = np.zeros(p)
        self.wc = np.zeros(p)
        self.tables = np.zeros((d, p, 256), dtype=np.float32)
        self._tables64 = np.zeros((d, p, 256))
        self._peaks = np.ones((d, p))
        self.group_id = np.full(p, -1, dtype=np.int64)
        self.group_mu = np.zeros((d, 0))
        self.group_var = np.zeros((d, 0))
        self.group_w = np.zeros(0)
        self.group_members = np.zeros(0, dtype=np.int64)
        self.mu = np.zeros((d, p, k))
        self.var = np.full((d, p, k), config.initial_variance)
        self.w = np.zeros((d, p, k))
        self.count = np.zeros((d, p), dtype=np.int64)
        self.mid_order = np.full((d, p, 3), -1, dtype=np.int8)
        self.mode_ref = np.zeros((d, p, 2), dtype=np.int8)
        self.chp_prev = np.zeros((d, p), dtype=np.uint8)
        self.last_label = np.zeros((d, p), dtype=np.uint8)
        self.hits = np.zeros((d, p, 5), dtype=np.int64)
        self.streak = np.zeros((d, p), dtype=np.int64)
        self.last_active = np.full((d, p), -1, dtype=np.int8)
        self.clock = np.zeros((d, p), dtype=np.int64)
        self.waking = np.zeros((d, p), dtype=np.uint8)
        ys, xs = np.divmod(np.arange(p), width)
        s = config.stride
        self.on_lattice = ((ys % s == 0) & (xs % s == 0)).astype(np.uint8)
        # diagnostics from the most recent frame (kind / confidence per
        # plane and pixel); populated by process_frame
        self.last_kinds = np.zeros((d, p), dtype=np.uint8)
        self.last_confidence = np.zeros((d, p))

    # ---------------------------------------------------------------- init

    @classmethod
    def build(cls, config: EngineConfig, prior: ScenePrior, groups: GroupMap,
              grids: list[GmmGrid], height: int, width: int,
              last_values: np.ndarray) -> "CascadeEngine":
        """Assemble the runtime cascade from the training artifacts.

        last_values: (d, H*W) uint8, the final training frame (seeds the
        CHP memory). Mode levels are ranked by scene-prior mass at each
        mode mean, ties by weight/sigma.
        """
        depth = len(grids)
        if (prior.kde.height, prior.kde.width) != (height, width):
            raise DataError("scene prior geometry does not match frames")
        if prior.kde.depth != depth:
            raise DataError("scene prior depth does not match frames")
        if groups.group_id.shape[0] != height * width:
            raise DataError("group map geometry does not match frames")
        eng = cls(config, height, width, depth)
        eng.bandwidth = prior.kde.bandwidth
        eng.sample_count = prior.kde.samples.shape[0]
        eng.dynamics = prior.profile.classes.copy()
        weights = prior.profile.weights
        eng.wa = np.ascontiguousarray(weights[:, 0])
        eng.wb = np.ascontiguousarray(weights[:, 1])
        eng.wc = np.ascontiguousarray(weights[:, 2])
        # quantize once so a saved-and-reloaded engine computes identically
        eng.tables = prior.kde.tables.astype(np.float32)
        eng.group_id = groups.group_id.copy()
        eng.group_mu = np.ascontiguousarray(groups.mu.T.copy())
        eng.group_var = np.ascontiguousarray(groups.var.T.copy())
        eng.group_w = groups.weight.copy()
        eng.group_members = groups.member_count.copy()
        for c in range(depth):
            grid = grids[c]
            if grid.mu.shape != (eng.n_pix, config.k_max):
                raise DataError("mixture grid geometry does not match")
            eng.mu[c] = grid.mu
            eng.var[c] = grid.var
            eng.w[c] = grid.w
            eng.count[c] = grid.count
        if last_values.shape != (depth, eng.n_pix):
            raise DataError("last training frame geometry does not match")
        eng.chp_prev[:] = last_values
        eng._finalize_tables()
        eng._seed_level_order()
        return eng

    def _finalize_tables(self) -> None:
        self._tables64 = self.tables.astype(np.float64)
        self._peaks = self._tables64.max(axis=2)
        self._peaks[self._peaks <= 0.0] = 1.0

    def _seed_level_order(self) -> None:
        """Rank each pixel's trained modes by prior mass at the mode mean
        (tie: weight/sigma); the mean level gets rank 1, the mean+variance
        level rank 2 (rank 1 again for single-mode pixels)."""
        p = self.n_pix
        ar = np.arange(p)
        k = self.config.k_max
        for c in range(self.depth):
            mval = np.clip(np.rint(self.mu[c]), 0, 255).astype(np.int64)
            mass = self._tables64[c][ar[:, None], mval]
            tie = self.w[c] / np.sqrt(self.var[c])
            exists = np.arange(k)[None, :] < self.count[c][:, None]
            mass = np.where(exists, mass, -np.inf)
            tie = np.where(exists, tie, -np.inf)
            order = np.lexsort((-tie, -mass), axis=1)
            self.mode_ref[c, :, 0] = order[:, 0]
            self.mode_ref[c, :, 1] = np.where(self.count[c] >= 2,
                                              order[:, 1], order[:, 0])
            grouped = self.group_id >= 0
            self.mid_order[c, grouped] = (LEVEL_GROUP, LEVEL_MEAN,
                                          LEVEL_MEANVAR)
            self.mid_order[c, ~grouped, 0] = LEVEL_MEAN
            self.mid_order[c, ~grouped, 1] = LEVEL_MEANVAR
            self.mid_order[c, ~grouped, 2] = -1

    def clone(self) -> "CascadeEngine":
        """Independent copy of all model state (same config and backend)."""
        twin = CascadeEngine(self.config, self.height, self.width,
                             self.depth)
        twin.frame_count = self.frame_count
        twin.bandwidth = self.bandwidth
        twin.sample_count = self.sample_count
        for name in ("dynamics", "wa", "wb", "wc", "tables", "_tables64",
                     "_peaks", "group_id", "group_mu", "group_var",
                     "group_w", "group_members", "mu", "var", "w", "count",
                     "mid_order", "mode_ref", "chp_prev", "last_label",
                     "hits", "streak", "last_active", "clock", "waking",
                     "last_kinds", "last_confidence"):
            setattr(twin, name, getattr(self, name).copy())
        return twin

    # ------------------------------------------------------------- runtime

    def process_frame(self, frame: Frame) -> tuple[LabelMask, FrameStats]:
        cfg = self.config
        if (frame.height, frame.width) != (self.height, self.width):
            raise DataError(
                f"frame {frame.index} geometry {frame.height}x{frame.width}"
                f" != model {self.height}x{self.width}")
        if frame.depth != self.depth:
            raise DataError(f"frame {frame.index} has {frame.depth} planes,"
                            f" model expects {self.depth}")
        compat = cfg.compat
        sampling_on = cfg.sampling and not compat
        grouping_on = cfg.grouping and not compat
        chp_on = not compat
        rate_on = not compat
        plane_vals = [np.ascontiguousarray(pl.data.ravel())
                      for pl in frame.planes]
        kinds = np.empty((self.depth, self.n_pix), dtype=np.uint8)
        labels = np.empty((self.depth, self.n_pix), dtype=np.uint8)
        confs = np.empty((self.depth, self.n_pix), dtype=np.float64)
        counts = np.empty((self.depth, 7), dtype=np.int64)
        for c in range(self.depth):
            self._kern.cascade_frame(
                plane_vals[c], self.mu[c], self.var[c], self.w[c],
                self.count[c], self.chp_prev[c], self.last_label[c],
                self.mid_order[c], self.mode_ref[c], self.hits[c],
                self.streak[c], self.last_active[c], self.clock[c],
                self.waking[c], self.on_lattice, self.group_id,
                self.group_mu[c], self.group_var[c], self._tables64[c],
                self._peaks[c], self.wa, self.wb, self.wc,
                cfg.learning_rate, cfg.match_lambda,
                cfg.background_threshold, cfg.variance_floor,
                cfg.initial_variance, cfg.chp_epsilon,
                cfg.confidence_threshold, cfg.prior_floor, cfg.rate_floor,
                cfg.saturation_frames, cfg.sleep_frames,
                sampling_on, grouping_on, rate_on, chp_on,
                cfg.confidence_literal, compat,
                labels[c], kinds[c], confs[c], counts[c])
            self._kern.resolve_copies(kinds[c], labels[c],
                                      self.last_label[c], self.width,
                                      cfg.stride)
            if grouping_on and self.group_w.shape[0]:
                self._update_groups(c, plane_vals[c], kinds[c], confs[c])
        fg = np.zeros(self.n_pix, dtype=bool)
        for c in range(self.depth):
            fg |= labels[c] == 1
        self.last_kinds = kinds
        self.last_confidence = confs
        stats = self._collect_stats(counts, fg)
        mask = fg.reshape(self.height, self.width).astype(np.uint8) * 255
        if not compat and stats.unexplained > (
                cfg.illumination_fraction * self.n_pix * self.depth):
            stats.illumination_fired = True
            self._reset_on_illumination(plane_vals)
        self.frame_count += 1
        if (not compat and cfg.reorder_interval > 0
                and self.frame_count % cfg.reorder_interval == 0):
            self.reorder_levels()
        return LabelMask(labels=mask), stats

    def _update_groups(self, c: int, vals: np.ndarray, kinds: np.ndarray,
                       confs: np.ndarray) -> None:
        """One shared update per group from the mean value and confidence of
        the members that hit the group level this frame."""
        cfg = self.config
        sel = kinds == LEVEL_GROUP
        if not sel.any():
            return
        gids = self.group_id[sel]
        g = self.group_w.shape[0]
        cnt = np.bincount(gids, minlength=g)
        act = cnt > 0
        vbar = (np.bincount(gids, weights=vals[sel].astype(np.float64),
                            minlength=g)[act] / cnt[act])
        cbar = (np.bincount(gids, weights=confs[sel], minlength=g)[act]
                / cnt[act])
        if cfg.compat:
            rho = np.full(vbar.shape, cfg.learning_rate)
        else:
            rho = cfg.learning_rate * np.maximum(1.0 - cbar, cfg.rate_floor)
        m = (1.0 - rho) * self.group_mu[c, act] + rho * vbar
        dlt = vbar - m
        s2 = (1.0 - rho) * self.group_var[c, act] + rho * dlt * dlt
        self.group_mu[c, act] = m
        self.group_var[c, act] = np.maximum(s2, cfg.variance_floor)

    def _collect_stats(self, plane_counts: np.ndarray,
                       fg: np.ndarray) -> FrameStats:
        counts = plane_counts.sum(axis=0)
        return FrameStats(
            frame=self.frame_count,
            n_chp=int(counts[LEVEL_CHP]),
            n_group=int(counts[LEVEL_GROUP]),
            n_mean=int(counts[LEVEL_MEAN]),
            n_meanvar=int(counts[LEVEL_MEANVAR]),
            n_gmm=int(counts[LEVEL_GMM]),
            n_skipped=int(counts[KIND_SKIP] + counts[KIND_COPY]),
            n_foreground=int(fg.sum()),
            unexplained=int(counts[LEVEL_GMM]),
            illumination_fired=False)

    def _reset_on_illumination(self, plane_vals: list[np.ndarray]) -> None:
        """Re-center every live mode (and group mode) on the current frame
        at initial variance; weights survive, short-term state does not."""
        cfg = self.config
        k = cfg.k_max
        ar = np.arange(self.n_pix)
        for c in range(self.depth):
            v = plane_vals[c].astype(np.float64)
            exists = np.arange(k)[None, :] < self.count[c][:, None]
            self.mu[c] = np.where(exists, v[:, None], self.mu[c])
            self.var[c] = np.where(exists, cfg.initial_variance, self.var[c])
            # equal variances may upset the weight/sigma ranking: re-sort
            inv = kernels_numpy.sort_subset(self.mu[c], self.var[c],
                                            self.w[c], self.count[c], ar)
            self.mode_ref[c, :, 0] = inv[ar, self.mode_ref[c, :, 0]]
            self.mode_ref[c, :, 1] = inv[ar, self.mode_ref[c, :, 1]]
            if self.group_w.shape[0]:
                g = self.group_w.shape[0]
                grouped = self.group_id >= 0
                cnt = np.bincount(self.group_id[grouped], minlength=g)
                vsum = np.bincount(self.group_id[grouped],
                                   weights=v[grouped], minlength=g)
                act = cnt > 0
                self.group_mu[c, act] = vsum[act] / cnt[act]
                self.group_var[c, act] = cfg.initial_variance
            self.chp_prev[c] = plane_vals[c]
        self.streak[:] = 0
        self.clock[:] = 0
        self.waking[:] = 0
        self.hits[:] = 0
        self.last_active[:] = -1

    def reorder_levels(self) -> None:
        """Re-sort the middle levels by hit count (desc), ties by scene-prior
        mass at the level's current mean; the hit window then restarts."""
        p = self.n_pix
        ar = np.arange(p)
        for c in range(self.depth):
            codes = self.mid_order[c]
            hv = np.where(
                codes >= 0,
                self.hits[c][ar[:, None], np.maximum(codes, 0)], -1)
            mass = np.full(codes.shape, -np.inf)
            gid = np.maximum(self.group_id, 0)
            gmu = (self.group_mu[c][gid] if self.group_mu[c].shape[0]
                   else np.zeros(p))
            for j, level_mu in (
                    (LEVEL_GROUP, gmu),
                    (LEVEL_MEAN, self.mu[c][ar, self.mode_ref[c, :, 0]]),
                    (LEVEL_MEANVAR, self.mu[c][ar, self.mode_ref[c, :, 1]])):
                lv = np.clip(np.rint(level_mu), 0, 255).astype(np.int64)
                pm = self._tables64[c][ar, lv]
                sel = codes == j
                mass[sel] = np.broadcast_to(pm[:, None], codes.shape)[sel]
            order = np.lexsort((-mass, -hv), axis=1)
            self.mid_order[c] = np.take_along_axis(codes, order, axis=1)
        self.hits[:] = 0

    # ------------------------------------------------------------ inspection

    @property
    def sampling_clock(self) -> np.ndarray:
        """(d, H*W) frames each pixel will keep sleeping."""
        return self.clock

    def level_order(self, y: int, x: int, channel: int = 0) -> list[int]:
        """Full cascade order for one pixel, CHP first, mixture last."""
        p = y * self.width + x
        mids = [int(j) for j in self.mid_order[channel, p] if j >= 0]
        return [LEVEL_CHP] + mids + [LEVEL_GMM]


def run_sequence(engine: CascadeEngine, frames) -> tuple[list[LabelMask],
                                                         list[FrameStats]]:
    """Process frames in order, collecting masks and per-frame stats."""
    masks = []
    stats = []
    for frame in frames:
        mask, row = engine.process_frame(frame)
        if engine.config.majority_filter:
            mask = LabelMask(labels=majority_filter(mask.labels))
        masks.append(mask)
        stats.append(row)
    return masks, stats


def majority_filter(labels: np.ndarray) -> np.ndarray:
    """Optional 3x3 majority vote on a 0/255 mask (excluded from the
    equivalence guarantees)."""
    from scipy.ndimage import uniform_filter
    fg = (labels > 0).astype(np.float64)
    return (uniform_filter(fg, size=3, mode="nearest") > 0.5).astype(
        np.uint8) * 255
