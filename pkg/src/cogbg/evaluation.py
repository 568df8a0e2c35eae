"""Accuracy metrics, speedup accounting, and the head-to-head harness.

The analytic speedup model prices a frame as sum(s_i * n_i): n_i is the
fraction of pixel evaluations resolved at cascade level i and s_i the
measured per-pixel cost of that level normalized to the full mixture
update (s_gmm = 1). Costs are profiled on this machine by a
micro-calibration loop rather than hard-coded, since they depend on the
backend and hardware. Wall-clock comparisons run both models on identical
frames from identical training and take the fastest of repeated runs:
scheduler noise only ever adds time, so the minimum is the stable
estimate of the real per-frame cost.

Foreground is the positive class throughout; ground-truth pixels marked
unknown are excluded from the confusion counts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cascade import CascadeEngine, FrameStats
from .config import EngineConfig
from .errors import ConfigError, DataError, InternalError
from .frame_io import (
    LABEL_FG,
    LABEL_BG,
    Frame,
    FramePlane,
    LabelMask,
    SequenceManifest,
    load_ground_truth,
    load_sequence,
)
from .gmm import classify_frame, init_model
from .kernels_numba import (
    KIND_SKIP,
    LEVEL_CHP,
    LEVEL_GMM,
    LEVEL_GROUP,
    LEVEL_MEAN,
    LEVEL_MEANVAR,
)
from .training import train_engine

LEVEL_NAMES = ("chp", "group", "mean", "meanvar", "gmm", "skipped")


# ------------------------------------------------------------------ metrics


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int
    excluded: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn,
                               self.excluded + other.excluded)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn + self.excluded


def confusion_counts(predicted: LabelMask,
                     truth: LabelMask) -> ConfusionCounts:
    """Pixel confusion counts; truth pixels that are neither background nor
    foreground are excluded."""
    if predicted.labels.shape != truth.labels.shape:
        raise DataError(
            f"mask geometry mismatch: predicted {predicted.labels.shape}"
            f" != truth {truth.labels.shape}")
    t = truth.labels
    known = (t == LABEL_BG) | (t == LABEL_FG)
    pf = predicted.labels[known] == LABEL_FG
    tf = t[known] == LABEL_FG
    return ConfusionCounts(
        tp=int(np.count_nonzero(pf & tf)),
        fp=int(np.count_nonzero(pf & ~tf)),
        tn=int(np.count_nonzero(~pf & ~tf)),
        fn=int(np.count_nonzero(~pf & tf)),
        excluded=int(np.count_nonzero(~known)))


def f_measure(c: ConfusionCounts) -> tuple[float, float, float]:
    """(precision, recall, F1); any 0/0 is defined as 0."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    s = precision + recall
    f1 = 2.0 * precision * recall / s if s else 0.0
    return precision, recall, f1


# ----------------------------------------------------------- speedup model


@dataclass(frozen=True)
class CostProfile:
    """Per-level evaluation cost normalized so the full mixture level is 1."""

    chp: float
    group: float
    mean: float
    meanvar: float
    skipped: float
    gmm: float = 1.0

    def __post_init__(self) -> None:
        for name in LEVEL_NAMES:
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"level cost {name} must be > 0")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in LEVEL_NAMES])


@dataclass(frozen=True)
class SpeedupReport:
    levels: tuple[str, ...]
    populations: tuple[float, ...]  # n_i, fraction of evaluations per level
    costs: tuple[float, ...]        # s_i, gmm-normalized
    analytic: float
    wall_clock: float | None = None


def level_totals(stats: list[FrameStats]) -> np.ndarray:
    """Pooled per-level evaluation counts over a run, LEVEL_NAMES order."""
    totals = np.zeros(len(LEVEL_NAMES), dtype=np.int64)
    for row in stats:
        totals += (row.n_chp, row.n_group, row.n_mean, row.n_meanvar,
                   row.n_gmm, row.n_skipped)
    return totals


def speedup_estimate(stats: list[FrameStats],
                     costs: CostProfile) -> SpeedupReport:
    """Analytic speedup 1 / sum(s_i * n_i) from pooled level populations.

    The populations cover every pixel evaluation (per channel); on the
    mostly-background scenes the model targets, this matches restricting to
    background pixels to within the foreground fraction.
    """
    if not stats:
        raise DataError("cannot estimate speedup from zero frames")
    totals = level_totals(stats)
    grand = totals.sum()
    if grand == 0:
        raise DataError("frame stats contain no pixel evaluations")
    n = totals / grand
    s = costs.as_array()
    analytic = 1.0 / float(np.dot(s, n))
    return SpeedupReport(levels=LEVEL_NAMES, populations=tuple(float(x)
                         for x in n), costs=tuple(float(x) for x in s),
                         analytic=analytic)


def write_population_csv(path, stats: list[FrameStats]) -> None:
    """Plot-ready per-frame level-population fractions."""
    with open(path, "w") as f:
        f.write("frame," + ",".join(LEVEL_NAMES) + "\n")
        for row in stats:
            counts = np.array((row.n_chp, row.n_group, row.n_mean,
                               row.n_meanvar, row.n_gmm, row.n_skipped),
                              dtype=np.float64)
            frac = counts / counts.sum()
            f.write(f"{row.frame}," + ",".join(f"{x:.6f}" for x in frac)
                    + "\n")


# ------------------------------------------------------- cost calibration


def _staged_engine(level: int, n_pix: int, backend: str) -> tuple[
        CascadeEngine, Frame, int]:
    """An engine plus one frame arranged so every pixel resolves at `level`.

    Returns (engine, frame, expected stats index) where the index addresses
    LEVEL_NAMES. State is hand-built: one tight mode at 100 (rank 1), one at
    200 (rank 2), optionally a third at 150 for the mixture stage, and a
    shared group mode at 200 for the group stage.
    """
    cfg = EngineConfig(grouping=level == LEVEL_GROUP,
                       sampling=level == KIND_SKIP,
                       illumination_fraction=1.0,
                       reorder_interval=10 ** 9,
                       backend=backend)
    eng = CascadeEngine(cfg, 1, n_pix, 1)
    eng.wa[:] = 0.7
    eng.wb[:] = 0.1
    eng.wc[:] = 0.2
    eng.mu[0, :, 0] = 100.0
    eng.var[0, :, 0] = 4.0
    eng.w[0, :, 0] = 0.6
    eng.mu[0, :, 1] = 200.0
    eng.var[0, :, 1] = 25.0
    eng.w[0, :, 1] = 0.3
    eng.count[0, :] = 2
    eng.mode_ref[0, :, 0] = 0
    eng.mode_ref[0, :, 1] = 1
    eng.mid_order[0, :] = (LEVEL_MEAN, LEVEL_MEANVAR, -1)
    eng.chp_prev[0, :] = 100
    value = {LEVEL_CHP: 100, LEVEL_GROUP: 200, LEVEL_MEAN: 103,
             LEVEL_MEANVAR: 203, LEVEL_GMM: 150, KIND_SKIP: 100}[level]
    if level == LEVEL_GROUP:
        eng.group_id[:] = 0
        eng.group_mu = np.full((1, 1), 200.0)
        eng.group_var = np.full((1, 1), 25.0)
        eng.group_w = np.array([0.5])
        eng.group_members = np.array([n_pix], dtype=np.int64)
        eng.mid_order[0, :] = (LEVEL_GROUP, LEVEL_MEAN, LEVEL_MEANVAR)
    elif level == LEVEL_GMM:
        # third mode keeps the mixture step on its matched-update path
        eng.mu[0, :, 2] = 150.0
        eng.var[0, :, 2] = 25.0
        eng.w[0, :, 2] = 0.1
        eng.count[0, :] = 3
    elif level == KIND_SKIP:
        eng.clock[0, :] = 5
    vals = np.full((1, n_pix), value, dtype=np.uint8)
    frame = Frame(index=1, planes=[FramePlane(channel_id=0, data=vals)])
    stat_index = {LEVEL_CHP: 0, LEVEL_GROUP: 1, LEVEL_MEAN: 2,
                  LEVEL_MEANVAR: 3, LEVEL_GMM: 4, KIND_SKIP: 5}[level]
    return eng, frame, stat_index


_MUTABLE = ("mu", "var", "w", "count", "chp_prev", "last_label", "mid_order",
            "mode_ref", "hits", "streak", "last_active", "clock", "waking",
            "group_mu", "group_var")


def measure_level_costs(backend: str = "", pixels: int = 20_000,
                        reps: int = 50) -> CostProfile:
    """Profile per-level evaluation cost on this machine.

    Each level is timed over `reps` frames of `pixels` pixels staged so the
    whole frame resolves at that level (10^6 evaluations per level at the
    defaults); the medians are normalized by the full-mixture median.
    """
    medians = np.zeros(len(LEVEL_NAMES))
    for level in (LEVEL_CHP, LEVEL_GROUP, LEVEL_MEAN, LEVEL_MEANVAR,
                  LEVEL_GMM, KIND_SKIP):
        eng, frame, idx = _staged_engine(level, pixels, backend)
        snapshot = {n: getattr(eng, n).copy() for n in _MUTABLE}
        frame_count = eng.frame_count

        def restore() -> None:
            for n, arr in snapshot.items():
                getattr(eng, n)[...] = arr
            eng.frame_count = frame_count

        _, stats = eng.process_frame(frame)  # warm up and verify staging
        if stats.as_row()[1 + idx] != pixels:
            raise InternalError(
                f"cost staging failed for level {LEVEL_NAMES[idx]}: {stats}")
        restore()
        samples = np.empty(reps)
        for r in range(reps):
            t0 = time.perf_counter()
            eng.process_frame(frame)
            samples[r] = time.perf_counter() - t0
            restore()
        medians[idx] = np.median(samples)
    scaled = medians / medians[4]
    return CostProfile(chp=float(scaled[0]), group=float(scaled[1]),
                       mean=float(scaled[2]), meanvar=float(scaled[3]),
                       skipped=float(scaled[5]), gmm=1.0)


# ---------------------------------------------------------------- harness


@dataclass
class EvalReport:
    frames: int
    training: int
    cascade_f1: float | None
    baseline_f1: float | None
    per_frame_f1: list[tuple[int, float, float]]  # (frame, cascade, baseline)
    cascade_seconds: float   # best-of-runs seconds per frame
    baseline_seconds: float
    measured_speedup: float
    speedup: SpeedupReport
    stats: list[FrameStats] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "frames": self.frames,
            "training": self.training,
            "cascade_f1": self.cascade_f1,
            "baseline_f1": self.baseline_f1,
            "per_frame_f1": [list(row) for row in self.per_frame_f1],
            "cascade_seconds_per_frame": self.cascade_seconds,
            "baseline_seconds_per_frame": self.baseline_seconds,
            "measured_speedup": self.measured_speedup,
            "analytic_speedup": self.speedup.analytic,
            "level_populations": dict(zip(self.speedup.levels,
                                          self.speedup.populations)),
            "level_costs": dict(zip(self.speedup.levels,
                                    self.speedup.costs)),
        }

    def to_text(self) -> str:
        lines = [
            f"frames evaluated      {self.frames}",
            f"training frames       {self.training}",
            f"cascade s/frame       {self.cascade_seconds:.6f}",
            f"baseline s/frame      {self.baseline_seconds:.6f}",
            f"measured speedup      {self.measured_speedup:.2f}x",
            f"analytic speedup      {self.speedup.analytic:.2f}x",
        ]
        if self.cascade_f1 is not None:
            lines.append(f"cascade F1            {self.cascade_f1:.4f}")
            lines.append(f"baseline F1           {self.baseline_f1:.4f}")
        lines.append("level       population  cost")
        for name, n, s in zip(self.speedup.levels, self.speedup.populations,
                              self.speedup.costs):
            lines.append(f"{name:<10}  {n:>10.4f}  {s:.4f}")
        return "\n".join(lines)


def _timed_runs(make_state, step, frames: list, runs: int) -> tuple[
        float, list, list]:
    """Best per-frame seconds over `runs` repeats from copies of the
    trained state; outputs come from the first run."""
    masks: list = []
    stats: list = []
    seconds = np.empty(runs)
    for r in range(runs):
        state = make_state()
        out_masks = []
        out_stats = []
        t0 = time.perf_counter()
        for f in frames:
            mask, extra = step(state, f)
            out_masks.append(mask)
            out_stats.append(extra)
        seconds[r] = (time.perf_counter() - t0) / len(frames)
        if r == 0:
            masks, stats = out_masks, out_stats
    return float(np.min(seconds)), masks, stats


def compare_sequences(frames: list[Frame],
                      truths: dict[int, LabelMask],
                      config: EngineConfig,
                      runs: int = 5,
                      costs: CostProfile | None = None,
                      warmup: int = 0) -> EvalReport:
    """Train both models on the same prefix, run both on the remainder,
    and report accuracy plus measured and analytic speedup.

    `warmup` frames after the training prefix are processed once to reach
    steady state (sampling clocks saturate, streaks settle) and are excluded
    from timing and scoring."""
    t = config.training_frames
    if len(frames) <= t + warmup:
        raise DataError(f"need more than {t + warmup} frames to evaluate, "
                        f"got {len(frames)}")
    train, evaluate = list(frames[:t]), list(frames[t:])
    engine = train_engine(train, config)
    base = init_model(train[0], config)
    for f in train[1:]:
        classify_frame(base, f)
    for f in evaluate[:warmup]:
        engine.process_frame(f)
        classify_frame(base, f)
    evaluate = evaluate[warmup:]
    if costs is None:
        costs = measure_level_costs(backend=engine.backend)

    cas_sec, cas_masks, cas_stats = _timed_runs(
        engine.clone, lambda eng, f: eng.process_frame(f), evaluate, runs)
    base_sec, base_masks, _ = _timed_runs(
        base.copy, lambda mdl, f: classify_frame(mdl, f), evaluate, runs)

    per_frame: list[tuple[int, float, float]] = []
    cas_total = ConfusionCounts(0, 0, 0, 0)
    base_total = ConfusionCounts(0, 0, 0, 0)
    for f, cm, bm in zip(evaluate, cas_masks, base_masks):
        gt = truths.get(f.index)
        if gt is None:
            continue
        cc = confusion_counts(cm, gt)
        bc = confusion_counts(bm, gt)
        cas_total += cc
        base_total += bc
        per_frame.append((f.index, f_measure(cc)[2], f_measure(bc)[2]))

    report = speedup_estimate(cas_stats, costs)
    measured = base_sec / cas_sec if cas_sec > 0 else float("inf")
    report = replace(report, wall_clock=measured)
    has_truth = bool(per_frame)
    return EvalReport(
        frames=len(evaluate), training=t,
        cascade_f1=f_measure(cas_total)[2] if has_truth else None,
        baseline_f1=f_measure(base_total)[2] if has_truth else None,
        per_frame_f1=per_frame,
        cascade_seconds=cas_sec, baseline_seconds=base_sec,
        measured_speedup=measured, speedup=report, stats=cas_stats)


def compare_models(manifest: SequenceManifest, config: EngineConfig,
                   runs: int = 5,
                   costs: CostProfile | None = None,
                   warmup: int = 0) -> EvalReport:
    """compare_sequences over a dataset manifest; the manifest's declared
    training count wins over the config's."""
    frames = list(load_sequence(manifest, color=config.color))
    truths = {idx: load_ground_truth(path)
              for idx, path in manifest.ground_truth}
    cfg = replace(config, training_frames=manifest.training_count)
    return compare_sequences(frames, truths, cfg, runs=runs, costs=costs,
                             warmup=warmup)
