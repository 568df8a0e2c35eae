"""Training phase, part 1: per-pixel density prior and pixel dynamics.

Three artifacts come out of the training frames:

* SceneKde — a kernel density estimate of each pixel's intensity history,
  one per channel, with a precomputed 256-entry lookup table.
* ResidueHistogram — 3-bin occupancies of |I_{n+1} - I_n| per pixel.
* PixelDynamicsProfile — a dynamics class per pixel (static/drift,
  oscillating, dynamic) and the (alpha, beta, gamma) confidence weights it
  maps to.

Gaussian kernels are normalized over the integer grid 0..255 rather than
the real line, so the table sums to 1 even for samples at the byte-range
boundary where a real-line kernel would lose tail mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .errors import TrainingError
from .frame_io import Frame

DYN_STATIC_DRIFT = 0
DYN_OSCILLATING = 1
DYN_DYNAMIC = 2

DYNAMICS_NAMES = {
    DYN_STATIC_DRIFT: "static_drift",
    DYN_OSCILLATING: "oscillating",
    DYN_DYNAMIC: "dynamic",
}

_GRID = np.arange(256, dtype=np.float64)


def _kernel_matrix(bandwidth: float) -> np.ndarray:
    """W[s, g] = normalized kernel mass at grid value g for a sample at s;
    each row sums to exactly 1."""
    diff = (_GRID[None, :] - _GRID[:, None]) / bandwidth
    w = np.exp(-0.5 * diff * diff)
    return w / w.sum(axis=1, keepdims=True)


def stack_training(frames: list[Frame]) -> np.ndarray:
    """Training values as (N, d, height, width) uint8."""
    if not frames:
        raise TrainingError("empty training set")
    if len(frames) < 2:
        raise TrainingError("need at least 2 training frames")
    return np.stack([
        np.stack([p.data for p in f.planes]) for f in frames])


def silverman_bandwidth(values: np.ndarray) -> float:
    """Global rule-of-thumb bandwidth: 1.06 * stddev * N^(-1/5), floored
    at 1. Per-pixel adaptive bandwidths are out of scope, so the stddev is
    the median per-pixel temporal stddev across the scene."""
    n = values.shape[0]
    stds = values.astype(np.float64).std(axis=0, ddof=1)
    return max(1.0, 1.06 * float(np.median(stds)) * n ** (-0.2))


@dataclass
class SceneKde:
    """Per-pixel, per-channel density over intensity 0..255."""

    bandwidth: float
    samples: np.ndarray  # (N, d, H, W) uint8 training values
    tables: np.ndarray   # (d, H*W, 256) float64, rows sum to 1

    @property
    def depth(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[2]

    @property
    def width(self) -> int:
        return self.samples.shape[3]

    def peaks(self) -> np.ndarray:
        """(d, H*W) maximum table density per pixel/channel."""
        return self.tables.max(axis=2)


def build_kde(frames: list[Frame], bandwidth: float | None = None,
              auto_bandwidth: bool = False) -> SceneKde:
    values = stack_training(frames)
    if auto_bandwidth:
        sigma = silverman_bandwidth(values)
    else:
        if bandwidth is None or bandwidth <= 0:
            raise TrainingError("bandwidth must be > 0")
        sigma = float(bandwidth)
    n, d, h, w = values.shape
    n_pix = h * w
    kernel = _kernel_matrix(sigma)
    tables = np.empty((d, n_pix, 256), dtype=np.float64)
    flat = values.reshape(n, d, n_pix).astype(np.int64)
    offsets = np.arange(n_pix, dtype=np.int64) * 256
    for c in range(d):
        counts = np.bincount(
            (offsets[None, :] + flat[:, c]).ravel(),
            minlength=n_pix * 256).reshape(n_pix, 256).astype(np.float64)
        tables[c] = (counts @ kernel) / n
    return SceneKde(bandwidth=sigma, samples=values, tables=tables)


def evaluate_prior(kde: SceneKde, pixel: tuple[int, int],
                   value) -> float:
    """Density at `value` (d intensities) for pixel (y, x): product of the
    per-channel table lookups."""
    y, x = pixel
    if not (0 <= y < kde.height and 0 <= x < kde.width):
        raise IndexError(f"pixel {pixel} outside "
                         f"{kde.height}x{kde.width} frame")
    vals = np.atleast_1d(np.asarray(value))
    if vals.shape[0] != kde.depth:
        raise ValueError(f"value needs {kde.depth} channels")
    p = y * kde.width + x
    out = 1.0
    for c in range(kde.depth):
        v = int(vals[c])
        if not (0 <= v <= 255):
            raise ValueError("intensity outside [0, 255]")
        out *= kde.tables[c, p, v]
    return out


def naive_prior(kde: SceneKde, pixel: tuple[int, int], value) -> float:
    """Brute-force density: direct per-sample summation, independent of the
    table path. Test oracle for evaluate_prior."""
    import math

    y, x = pixel
    vals = np.atleast_1d(np.asarray(value))
    sigma = kde.bandwidth
    out = 1.0
    for c in range(kde.depth):
        v = float(int(vals[c]))
        total = 0.0
        for s in kde.samples[:, c, y, x]:
            s = float(s)
            norm = 0.0
            for g in range(256):
                norm += math.exp(-0.5 * ((g - s) / sigma) ** 2)
            total += math.exp(-0.5 * ((v - s) / sigma) ** 2) / norm
        out *= total / kde.samples.shape[0]
    return out


@dataclass
class ResidueHistogram:
    """3-bin occupancies of absolute frame-to-frame differences."""

    edges: tuple[float, float]
    occupancies: np.ndarray  # (H*W, 3) float64, rows sum to 1

    def __post_init__(self) -> None:
        t1, t2 = self.edges
        if not (0 < t1 < t2 <= 255):
            raise TrainingError("edges must satisfy 0 < t1 < t2 <= 255")


def compute_residue_histogram(frames: list[Frame],
                              edges: tuple[float, float]) -> ResidueHistogram:
    """Histogram of |I_{n+1} - I_n| per pixel over the training frames,
    channels pooled, normalized to occupancies."""
    values = stack_training(frames)
    t1, t2 = edges
    if not (0 < t1 < t2 <= 255):
        raise TrainingError("edges must satisfy 0 < t1 < t2 <= 255")
    n, d, h, w = values.shape
    n_pix = h * w
    offsets = np.arange(n_pix, dtype=np.int64) * 3
    wide = values.reshape(n, d, n_pix).astype(np.int16)
    res = np.abs(np.diff(wide, axis=0))  # (n-1, d, n_pix)
    bin_idx = (res >= t1).astype(np.int64) + (res >= t2)
    counts = np.bincount(
        (offsets[None, None, :] + bin_idx).ravel(),
        minlength=n_pix * 3).reshape(n_pix, 3)
    occ = counts / float((n - 1) * d)
    return ResidueHistogram(edges=(t1, t2), occupancies=occ)


def classify_pixel_dynamics(hist: ResidueHistogram,
                            peaky_threshold: float) -> np.ndarray:
    """Per-pixel class: a peaky first bin means static or drifting, a peaky
    second bin means oscillating, anything else is dynamic."""
    occ = hist.occupancies
    classes = np.full(occ.shape[0], DYN_DYNAMIC, dtype=np.uint8)
    oscillating = occ[:, 1] >= peaky_threshold
    classes[oscillating] = DYN_OSCILLATING
    static = occ[:, 0] >= peaky_threshold  # checked first, so applied last
    classes[static] = DYN_STATIC_DRIFT
    return classes


def derive_rate_weights(classes: np.ndarray,
                        config: EngineConfig) -> np.ndarray:
    """(alpha, beta, gamma) per pixel from the per-class weight table."""
    table = np.array([
        config.weights_static,
        config.weights_oscillating,
        config.weights_dynamic,
    ], dtype=np.float64)
    return table[classes]


@dataclass
class PixelDynamicsProfile:
    classes: np.ndarray  # (H*W,) uint8
    weights: np.ndarray  # (H*W, 3) float64 rows summing to 1


@dataclass
class ScenePrior:
    """Bundle of all training-phase-1 artifacts."""

    kde: SceneKde
    histogram: ResidueHistogram
    profile: PixelDynamicsProfile


def build_scene_prior(frames: list[Frame],
                      config: EngineConfig) -> ScenePrior:
    kde = build_kde(frames, bandwidth=config.kde_bandwidth,
                    auto_bandwidth=config.kde_auto_bandwidth)
    hist = compute_residue_histogram(
        frames, (config.residue_t1, config.residue_t2))
    classes = classify_pixel_dynamics(hist, config.peaky_threshold)
    weights = derive_rate_weights(classes, config)
    return ScenePrior(kde=kde, histogram=hist,
                      profile=PixelDynamicsProfile(classes, weights))
