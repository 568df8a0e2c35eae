"""Classic per-pixel mixture-of-Gaussians background model.

Serves three roles: reference implementation, equivalence oracle for the
cascade, and the cascade's own final level (the kernels are shared).

Update semantics per pixel: the first mode in rank order (w/sigma
descending) within lambda*sigma of the value is matched; on a match every
weight decays by (1-alpha), the matched one gains alpha, weights are
renormalized, and the matched mode's mean and variance adapt with rate
rho = alpha using the squared residual against the new mean. On no match
the lowest-ranked mode is replaced (or an empty slot filled) with
(value, initial_variance, weight alpha) and weights renormalize. The label
is background iff the matched rank position falls within the minimal
prefix whose cumulative weight exceeds the background threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels_numpy
from .backend import resolve_backend
from .config import EngineConfig
from .errors import DataError
from .frame_io import Frame, LabelMask

EMPTY_MEAN = 0.0
EMPTY_WEIGHT = 0.0


@dataclass
class GaussianMode:
    mean: float
    variance: float
    weight: float


@dataclass
class PixelGmm:
    """Single-pixel mixture; modes stay sorted by weight/sigma descending."""

    modes: list[GaussianMode]
    learning_rate: float
    k_max: int = 3


@dataclass
class GmmGrid:
    """One plane's mixture state, flattened row-major."""

    mu: np.ndarray     # (P, K) float64
    var: np.ndarray    # (P, K) float64
    w: np.ndarray      # (P, K) float64
    count: np.ndarray  # (P,) int64

    def copy(self) -> "GmmGrid":
        return GmmGrid(self.mu.copy(), self.var.copy(), self.w.copy(),
                       self.count.copy())


@dataclass
class BaselineModel:
    planes: list[GmmGrid]
    height: int
    width: int
    config: EngineConfig
    backend: str = ""
    frame_count: int = field(default=0)

    def __post_init__(self) -> None:
        self.backend = resolve_backend(self.backend or self.config.backend)

    def copy(self) -> "BaselineModel":
        return BaselineModel(planes=[g.copy() for g in self.planes],
                             height=self.height, width=self.width,
                             config=self.config, backend=self.backend,
                             frame_count=self.frame_count)


def _kernels(backend: str):
    if backend == "numba":
        from . import kernels_numba
        return kernels_numba
    return kernels_numpy


def init_plane(values: np.ndarray, k_max: int,
               initial_variance: float) -> GmmGrid:
    """One mode per pixel at the first observed value; other slots empty
    with canonical (0, initial_variance, 0) so state bytes are unambiguous."""
    n_pix = values.size
    mu = np.full((n_pix, k_max), EMPTY_MEAN, dtype=np.float64)
    var = np.full((n_pix, k_max), initial_variance, dtype=np.float64)
    w = np.full((n_pix, k_max), EMPTY_WEIGHT, dtype=np.float64)
    mu[:, 0] = values.ravel().astype(np.float64)
    w[:, 0] = 1.0
    count = np.ones(n_pix, dtype=np.int64)
    return GmmGrid(mu=mu, var=var, w=w, count=count)


def init_model(first_frame: Frame, config: EngineConfig,
               backend: str = "") -> BaselineModel:
    planes = [init_plane(p.data, config.k_max, config.initial_variance)
              for p in first_frame.planes]
    return BaselineModel(planes=planes, height=first_frame.height,
                         width=first_frame.width, config=config,
                         backend=backend)


def classify_frame(model: BaselineModel,
                   frame: Frame) -> tuple[LabelMask, BaselineModel]:
    """Update every pixel of every plane; background iff all channels are
    background. Returns the 0/255 mask; the model is updated in place."""
    if (frame.height, frame.width) != (model.height, model.width) \
            or frame.depth != len(model.planes):
        raise DataError("frame geometry does not match model")
    cfg = model.config
    kern = _kernels(model.backend)
    n_pix = model.height * model.width
    fg = np.zeros(n_pix, dtype=np.uint8)
    out = np.empty(n_pix, dtype=np.uint8)
    for plane, grid in zip(frame.planes, model.planes):
        kern.baseline_frame(
            plane.data.ravel(), grid.mu, grid.var, grid.w, grid.count,
            cfg.learning_rate, cfg.match_lambda, cfg.background_threshold,
            cfg.variance_floor, cfg.initial_variance, out)
        fg |= out
    model.frame_count += 1
    labels = np.where(fg.reshape(model.height, model.width) > 0,
                      np.uint8(255), np.uint8(0))
    return LabelMask(labels), model


def _grid_from_pixel(state: PixelGmm) -> GmmGrid:
    k = state.k_max
    if len(state.modes) > k:
        raise DataError("more modes than k_max")
    grid = init_plane(np.zeros(1, np.uint8), k, 225.0)
    grid.mu[0, :] = EMPTY_MEAN
    grid.w[0, :] = EMPTY_WEIGHT
    for i, m in enumerate(state.modes):
        grid.mu[0, i] = m.mean
        grid.var[0, i] = m.variance
        grid.w[0, i] = m.weight
    grid.count[0] = len(state.modes)
    return grid


def update_pixel(state: PixelGmm, value: float, *,
                 match_lambda: float = 2.5,
                 background_threshold: float = 0.7,
                 variance_floor: float = 4.0,
                 initial_variance: float = 225.0,
                 ) -> tuple[int, PixelGmm]:
    """Single-pixel form of the frame update; returns (label, new state)
    with 0 = background, 1 = foreground."""
    grid = _grid_from_pixel(state)
    labels, _inv = kernels_numpy.gmm_update(
        grid.mu, grid.var, grid.w, grid.count, np.array([0]),
        np.array([float(value)]), state.learning_rate, match_lambda,
        background_threshold, variance_floor, initial_variance)
    n = int(grid.count[0])
    modes = [GaussianMode(float(grid.mu[0, i]), float(grid.var[0, i]),
                          float(grid.w[0, i])) for i in range(n)]
    return int(labels[0]), PixelGmm(modes=modes,
                                    learning_rate=state.learning_rate,
                                    k_max=state.k_max)
