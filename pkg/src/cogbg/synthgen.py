"""Deterministic synthetic sequence generator.

Produces frames with known per-pixel dynamics (static, drifting,
oscillating, dynamic texture), square foreground blobs on linear
trajectories, and persistent global illumination shifts, plus exact
ground-truth masks. Every random draw comes from a counter-based generator
keyed by (seed, frame, pixel, stream), so output is independent of
evaluation order and identical across runs and worker counts.

Spec files are sectioned key = value text:

    [sequence]
    width = 64
    height = 64
    frames = 300
    seed = 7
    training = 100

    [region]
    rect = 0,0,32,64        # x, y, w, h; regions must tile the frame
    kind = static           # static | drift | oscillating | dynamic
    level = 120
    noise = 0.5             # static/drift/dynamic sigma
    slope = 0.02            # drift only, intensity per frame
    amplitude = 30          # oscillating only
    period = 2              # oscillating only, even frame count per cycle

    [blob]
    start = 10,10           # top-left at entry frame
    velocity = 0.5,0.0      # pixels per frame
    size = 8
    offset = 60             # added to background intensity
    entry = 120
    duration = 100

    [event]
    frame = 200
    shift = 80              # persistent global intensity shift
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .frame_io import (
    Frame,
    FramePlane,
    LabelMask,
    SequenceManifest,
    write_manifest,
    write_mask,
)

DYN_STATIC_DRIFT = 0
DYN_OSCILLATING = 1
DYN_DYNAMIC = 2

_KINDS = ("static", "drift", "oscillating", "dynamic")

_M = np.uint64(0xFFFFFFFFFFFFFFFF)
_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)
_FRAME_TAG = np.uint64(0xA24BAED4963EE407)
_PIXEL_TAG = np.uint64(0x9FB21C651E98DF25)


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z + _C1) & _M
        z = ((z ^ (z >> np.uint64(30))) * _C2) & _M
        z = ((z ^ (z >> np.uint64(27))) * _C3) & _M
        return z ^ (z >> np.uint64(31))


def _counter_normal(seed: int, frame: int, n_pixels: int) -> np.ndarray:
    """One standard-normal draw per pixel via Box-Muller on hashed counters."""
    pix = np.arange(n_pixels, dtype=np.uint64)
    base = np.uint64(
        ((seed & 0xFFFFFFFFFFFFFFFF) * int(_C3)
         + frame * int(_FRAME_TAG)) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        h1 = _mix64((base + (pix * np.uint64(2)) * _PIXEL_TAG) & _M)
        h2 = _mix64(
            (base + (pix * np.uint64(2) + np.uint64(1)) * _PIXEL_TAG) & _M)
    # 53-bit mantissa uniforms; u1 shifted into (0, 1] so log stays finite
    u1 = ((h1 >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
    u2 = (h2 >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class SynthRegion:
    rect: tuple[int, int, int, int]  # x, y, w, h
    kind: str
    level: float
    noise: float = 0.0
    slope: float = 0.0
    amplitude: float = 0.0
    period: int = 2


@dataclass(frozen=True)
class SynthBlob:
    start: tuple[float, float]  # top-left x, y at entry frame
    velocity: tuple[float, float]
    size: int
    offset: float
    entry: int
    duration: int


@dataclass(frozen=True)
class SynthSpec:
    width: int
    height: int
    frame_count: int
    seed: int
    training_count: int = 2
    regions: tuple[SynthRegion, ...] = ()
    blobs: tuple[SynthBlob, ...] = ()
    illumination_events: tuple[tuple[int, float], ...] = ()


def validate_spec(spec: SynthSpec) -> None:
    if spec.width < 1 or spec.height < 1 or spec.frame_count < 1:
        raise DataError("spec geometry/frame_count must be positive")
    if not (2 <= spec.training_count <= spec.frame_count):
        raise DataError("training count must be in [2, frame_count]")
    cover = np.zeros((spec.height, spec.width), dtype=np.int32)
    for r in spec.regions:
        x, y, w, h = r.rect
        if w < 1 or h < 1 or x < 0 or y < 0 or x + w > spec.width \
                or y + h > spec.height:
            raise DataError(f"region rect out of bounds: {r.rect}")
        if r.kind not in _KINDS:
            raise DataError(f"unknown region kind: {r.kind}")
        if r.kind == "static" and r.noise > 1.0:
            raise DataError("static region noise must be <= 1")
        if r.kind == "drift" and abs(r.slope) > 0.05:
            raise DataError("drift slope must be <= 0.05 per frame")
        if r.kind == "oscillating" and (r.period < 2 or r.period % 2):
            raise DataError("oscillation period must be even and >= 2")
        if r.noise < 0:
            raise DataError("region noise must be >= 0")
        cover[y:y + h, x:x + w] += 1
    if not np.all(cover == 1):
        raise DataError("regions must tile the frame exactly once")
    for b in spec.blobs:
        if b.size < 1 or b.duration < 1 or b.entry < 0:
            raise DataError("blob size/duration/entry invalid")
        for t in (0, b.duration - 1):
            bx = int(round(b.start[0] + b.velocity[0] * t))
            by = int(round(b.start[1] + b.velocity[1] * t))
            if bx < 0 or by < 0 or bx + b.size > spec.width \
                    or by + b.size > spec.height:
                raise DataError("blob trajectory leaves the frame")
    for fr, _shift in spec.illumination_events:
        if not (0 <= fr < spec.frame_count):
            raise DataError("illumination event frame out of range")


def _region_base(r: SynthRegion, t: int) -> float:
    if r.kind == "static" or r.kind == "dynamic":
        return r.level
    if r.kind == "drift":
        return r.level + r.slope * t
    # oscillating: high for the first half of each cycle
    high = (t % r.period) < (r.period // 2)
    return r.level + (r.amplitude if high else 0.0)


def _region_sigma(r: SynthRegion) -> float:
    return r.noise


def generate(spec: SynthSpec):
    """Yield (Frame, LabelMask ground truth) pairs; see dynamics_map for
    the per-pixel true class grid."""
    validate_spec(spec)
    h, w = spec.height, spec.width
    n_pix = h * w
    base_grid = np.zeros((h, w), dtype=np.float64)
    sigma_grid = np.zeros((h, w), dtype=np.float64)
    shift = 0.0
    events = dict(spec.illumination_events)
    for t in range(spec.frame_count):
        if t in events:
            shift += events[t]
        for r in spec.regions:
            x, y, rw, rh = r.rect
            base_grid[y:y + rh, x:x + rw] = _region_base(r, t)
            sigma_grid[y:y + rh, x:x + rw] = _region_sigma(r)
        z = _counter_normal(spec.seed, t, n_pix).reshape(h, w)
        values = base_grid + sigma_grid * z + shift
        truth = np.zeros((h, w), dtype=np.uint8)
        for b in spec.blobs:
            if not (b.entry <= t < b.entry + b.duration):
                continue
            dt = t - b.entry
            bx = int(round(b.start[0] + b.velocity[0] * dt))
            by = int(round(b.start[1] + b.velocity[1] * dt))
            values[by:by + b.size, bx:bx + b.size] += b.offset
            truth[by:by + b.size, bx:bx + b.size] = 255
        data = np.clip(np.rint(values), 0, 255).astype(np.uint8)
        yield Frame(index=t, planes=[FramePlane(0, data)]), LabelMask(truth)


def dynamics_map(spec: SynthSpec) -> np.ndarray:
    """Per-pixel true dynamics class of the background process."""
    grid = np.zeros((spec.height, spec.width), dtype=np.uint8)
    for r in spec.regions:
        x, y, w, h = r.rect
        if r.kind in ("static", "drift"):
            cls = DYN_STATIC_DRIFT
        elif r.kind == "oscillating":
            cls = DYN_OSCILLATING
        else:
            cls = DYN_DYNAMIC
        grid[y:y + h, x:x + w] = cls
    return grid


def parse_spec_file(path: str | Path) -> SynthSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read spec file {path}: {exc}") from exc
    sections: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = {}
            sections.append((line[1:-1].strip().lower(), current))
            continue
        if current is None or "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected section or key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        current[key.lower()] = raw

    def need(d: dict[str, str], key: str, where: str) -> str:
        if key not in d:
            raise FormatError(f"{path}: [{where}] missing key {key!r}")
        return d[key]

    def pair(raw: str) -> tuple[float, float]:
        parts = [float(p) for p in raw.split(",")]
        if len(parts) != 2:
            raise FormatError(f"{path}: expected two comma-separated values")
        return parts[0], parts[1]

    seq = None
    regions: list[SynthRegion] = []
    blobs: list[SynthBlob] = []
    events: list[tuple[int, float]] = []
    try:
        for name, d in sections:
            if name == "sequence":
                seq = d
            elif name == "region":
                rect = tuple(int(p) for p in need(d, "rect", name).split(","))
                if len(rect) != 4:
                    raise FormatError(f"{path}: region rect needs x,y,w,h")
                regions.append(SynthRegion(
                    rect=rect,  # type: ignore[arg-type]
                    kind=need(d, "kind", name).lower(),
                    level=float(need(d, "level", name)),
                    noise=float(d.get("noise", "0")),
                    slope=float(d.get("slope", "0")),
                    amplitude=float(d.get("amplitude", "0")),
                    period=int(d.get("period", "2")),
                ))
            elif name == "blob":
                blobs.append(SynthBlob(
                    start=pair(need(d, "start", name)),
                    velocity=pair(d.get("velocity", "0,0")),
                    size=int(need(d, "size", name)),
                    offset=float(need(d, "offset", name)),
                    entry=int(d.get("entry", "0")),
                    duration=int(need(d, "duration", name)),
                ))
            elif name == "event":
                events.append((int(need(d, "frame", name)),
                               float(need(d, "shift", name))))
            else:
                raise FormatError(f"{path}: unknown section [{name}]")
    except ValueError as exc:
        raise FormatError(f"{path}: bad numeric value: {exc}") from exc
    if seq is None:
        raise FormatError(f"{path}: missing [sequence] section")
    try:
        spec = SynthSpec(
            width=int(need(seq, "width", "sequence")),
            height=int(need(seq, "height", "sequence")),
            frame_count=int(need(seq, "frames", "sequence")),
            seed=int(need(seq, "seed", "sequence")),
            training_count=int(seq.get("training", "2")),
            regions=tuple(regions),
            blobs=tuple(blobs),
            illumination_events=tuple(events),
        )
    except ValueError as exc:
        raise FormatError(f"{path}: bad numeric value: {exc}") from exc
    validate_spec(spec)
    return spec


def materialize(spec: SynthSpec, outdir: str | Path) -> Path:
    """Write frames, ground-truth masks, dynamics map, and manifest.

    Returns the manifest path. Ground truth is written for every frame.
    """
    outdir = Path(outdir)
    frames_dir = outdir / "frames"
    truth_dir = outdir / "truth"
    frames_dir.mkdir(parents=True, exist_ok=True)
    truth_dir.mkdir(parents=True, exist_ok=True)
    truth_entries: list[tuple[int, Path]] = []
    from PIL import Image

    for frame, truth in generate(spec):
        Image.fromarray(frame.planes[0].data, mode="L").save(
            frames_dir / (f"frame_{frame.index:06d}.png"))
        gt_path = truth_dir / f"mask_{frame.index:06d}.png"
        write_mask(truth, gt_path)
        truth_entries.append((frame.index, gt_path))
    Image.fromarray(dynamics_map(spec), mode="L").save(
        outdir / "dynamics.png")
    manifest = SequenceManifest(
        frames_dir=frames_dir,
        frame_pattern="frame_%06d.png",
        training_count=spec.training_count,
        ground_truth=truth_entries,
        frame_count=spec.frame_count,
    )
    manifest_path = outdir / "manifest.txt"
    write_manifest(manifest_path, manifest)
    return manifest_path
