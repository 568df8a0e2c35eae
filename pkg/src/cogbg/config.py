"""Engine configuration: every tunable with its default, file parsing, and
flag merging.

Precedence is flag > file > default. Config files are plain ``key = value``
lines with ``#`` comments; keys match the dataclass field names. Every field
is exposed as a CLI flag of the same name (dashes for underscores).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError

Triple = tuple[float, float, float]


@dataclass(frozen=True)
class EngineConfig:
    # training
    training_frames: int = 100

    # scene prior (KDE)
    kde_bandwidth: float = 5.0
    kde_auto_bandwidth: bool = False

    # residue histogram / pixel dynamics
    residue_t1: float = 4.0
    # 48 would let broad textures (sigma ~30) pile most residues into the
    # middle bin and read as oscillating; 32 keeps two-level flicker in the
    # middle bin while pushing free dynamics into the top one.
    residue_t2: float = 32.0
    peaky_threshold: float = 0.6

    # rate-weight table per dynamics class: (prior, temporal, model) weights
    weights_static: Triple = (0.7, 0.1, 0.2)
    weights_oscillating: Triple = (0.5, 0.2, 0.3)
    weights_dynamic: Triple = (0.2, 0.5, 0.3)

    # spatio-temporal grouping
    clusters: int = 3
    cluster_threshold: float = 0.7
    cluster_seed: int = 0

    # mixture model
    k_max: int = 3
    match_lambda: float = 2.5
    learning_rate: float = 0.05
    background_threshold: float = 0.7
    variance_floor: float = 4.0
    initial_variance: float = 225.0

    # cascade / change hypothesis probe
    chp_epsilon: float = 0.0
    reorder_interval: int = 100
    illumination_fraction: float = 0.7

    # confidence and rate modulation
    confidence_threshold: float = 0.9
    prior_floor: float = 1e-3
    rate_floor: float = 0.1
    confidence_literal: bool = False

    # confidence-gated sampling
    saturation_frames: int = 30
    sleep_frames: int = 8
    stride: int = 2

    # feature switches
    grouping: bool = True
    sampling: bool = True
    compat: bool = False
    majority_filter: bool = False
    color: bool = False

    # execution
    workers: int = 0
    backend: str = ""

    def validate(self) -> "EngineConfig":
        c = self
        checks = [
            (c.training_frames >= 2, "training_frames must be >= 2"),
            (c.kde_bandwidth > 0, "kde_bandwidth must be > 0"),
            (0 < c.residue_t1 < c.residue_t2 <= 255,
             "residue edges must satisfy 0 < t1 < t2 <= 255"),
            (0 < c.peaky_threshold <= 1, "peaky_threshold must be in (0, 1]"),
            (c.clusters >= 1, "clusters must be >= 1"),
            (0 < c.cluster_threshold <= 1,
             "cluster_threshold must be in (0, 1]"),
            (c.k_max >= 1, "k_max must be >= 1"),
            (c.match_lambda > 0, "match_lambda must be > 0"),
            (0 < c.learning_rate < 1, "learning_rate must be in (0, 1)"),
            (0 < c.background_threshold < 1,
             "background_threshold must be in (0, 1)"),
            (c.variance_floor > 0, "variance_floor must be > 0"),
            (c.initial_variance >= c.variance_floor,
             "initial_variance must be >= variance_floor"),
            (c.chp_epsilon >= 0, "chp_epsilon must be >= 0"),
            (c.reorder_interval >= 1, "reorder_interval must be >= 1"),
            (0 < c.illumination_fraction <= 1,
             "illumination_fraction must be in (0, 1]"),
            (0 < c.confidence_threshold <= 1,
             "confidence_threshold must be in (0, 1]"),
            (c.prior_floor >= 0, "prior_floor must be >= 0"),
            (0 < c.rate_floor <= 1, "rate_floor must be in (0, 1]"),
            (c.saturation_frames >= 1, "saturation_frames must be >= 1"),
            (c.sleep_frames >= 0, "sleep_frames must be >= 0"),
            (c.stride >= 1, "stride must be >= 1"),
            (c.workers >= 0, "workers must be >= 0"),
            (c.backend in ("", "numba", "numpy"),
             "backend must be 'numba' or 'numpy'"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for name in ("weights_static", "weights_oscillating", "weights_dynamic"):
            w = getattr(c, name)
            if len(w) != 3 or any(x < 0 for x in w):
                raise ConfigError(f"{name} must be three non-negative values")
            if abs(sum(w) - 1.0) > 1e-6:
                raise ConfigError(f"{name} must sum to 1")
        return c


_FIELDS = {f.name: f for f in dataclasses.fields(EngineConfig)}


def _parse_value(name: str, raw: str) -> Any:
    """Parse a string into the declared type of config field `name`."""
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key: {name}")
    ftype = _FIELDS[name].type
    raw = raw.strip()
    try:
        if ftype == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "Triple":
            parts = [float(p) for p in raw.split(",")]
            if len(parts) != 3:
                raise ValueError(raw)
            return tuple(parts)
        return raw  # str
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config_file(path: str | Path) -> dict[str, Any]:
    """Read `key = value` lines into a {field: parsed value} dict."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip().replace("-", "_")
        values[key] = _parse_value(key, raw)
    return values


def build_config(
    file: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> EngineConfig:
    """Assemble a validated config with flag > file > default precedence.

    `overrides` holds already-typed values (e.g. parsed CLI flags); entries
    that are None are treated as "not given".
    """
    values: dict[str, Any] = {}
    if file is not None:
        values.update(parse_config_file(file))
    if overrides:
        for key, val in overrides.items():
            if val is None:
                continue
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key: {key}")
            values[key] = val
    return EngineConfig(**values).validate()
