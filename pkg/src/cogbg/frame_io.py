"""Frame, mask, and manifest I/O.

A dataset is a directory of lossless 8-bit raster stills plus a manifest
text file:

    frames_dir = frames
    frame_pattern = frame_%06d.png
    training_count = 100
    ground_truth = 120=truth/mask_000120.png
    ground_truth = 121=truth/mask_000121.png

Relative paths resolve against the manifest's directory. Frames are indexed
0..n-1 with no gaps. Masks encode foreground=255, background=0, unknown=128;
unknown marks unannotated ground truth and is excluded from scoring.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .errors import FormatError, SequenceError

LABEL_BG = 0
LABEL_FG = 255
LABEL_UNKNOWN = 128


@dataclass
class FramePlane:
    """One channel of one frame; row-major uint8 intensities."""

    channel_id: int
    data: np.ndarray  # (height, width) uint8

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.ndim != 2:
            raise FormatError("plane data must be 2-D")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class Frame:
    """A frame: index plus d planes (1 grayscale, 3 color)."""

    index: int
    planes: list[FramePlane]

    def __post_init__(self) -> None:
        if not self.planes:
            raise FormatError("frame needs at least one plane")
        shape = self.planes[0].data.shape
        for i, p in enumerate(self.planes):
            if p.data.shape != shape:
                raise FormatError("planes disagree on geometry")
            if p.channel_id != i:
                raise FormatError("plane channel_ids must be 0..d-1 in order")

    @property
    def height(self) -> int:
        return self.planes[0].height

    @property
    def width(self) -> int:
        return self.planes[0].width

    @property
    def depth(self) -> int:
        return len(self.planes)


@dataclass
class LabelMask:
    """Per-pixel labels using the 0/255/128 encoding above."""

    labels: np.ndarray  # (height, width) uint8

    def __post_init__(self) -> None:
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.labels.ndim != 2:
            raise FormatError("mask labels must be 2-D")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass
class SequenceManifest:
    frames_dir: Path
    frame_pattern: str
    training_count: int
    ground_truth: list[tuple[int, Path]] = field(default_factory=list)
    frame_count: int | None = None  # optional cap/check on sequence length

    def frame_path(self, index: int) -> Path:
        return self.frames_dir / (self.frame_pattern % index)


_KNOWN_KEYS = {"frames_dir", "frame_pattern", "training_count",
               "ground_truth", "frame_count"}


def parse_manifest(path: str | Path) -> SequenceManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SequenceError(f"cannot read manifest {path}: {exc}") from exc
    root = path.parent
    values: dict[str, str] = {}
    truth: list[tuple[int, Path]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise FormatError(f"{path}:{lineno}: unknown manifest key {key!r}")
        if key == "ground_truth":
            if "=" not in raw:
                raise FormatError(
                    f"{path}:{lineno}: ground_truth needs 'index=path'")
            idx_s, rel = (s.strip() for s in raw.split("=", 1))
            try:
                idx = int(idx_s)
            except ValueError as exc:
                raise FormatError(
                    f"{path}:{lineno}: bad ground_truth index") from exc
            truth.append((idx, root / rel))
        else:
            values[key] = raw
    for required in ("frames_dir", "frame_pattern", "training_count"):
        if required not in values:
            raise FormatError(f"{path}: missing manifest key {required!r}")
    try:
        training_count = int(values["training_count"])
    except ValueError as exc:
        raise FormatError(f"{path}: bad training_count") from exc
    if training_count < 2:
        raise FormatError(f"{path}: training_count must be >= 2")
    frame_count = None
    if "frame_count" in values:
        try:
            frame_count = int(values["frame_count"])
        except ValueError as exc:
            raise FormatError(f"{path}: bad frame_count") from exc
    pattern = values["frame_pattern"]
    if "%" not in pattern:
        raise FormatError(f"{path}: frame_pattern needs a %d placeholder")
    truth.sort(key=lambda t: t[0])
    return SequenceManifest(
        frames_dir=root / values["frames_dir"],
        frame_pattern=pattern,
        training_count=training_count,
        ground_truth=truth,
        frame_count=frame_count,
    )


def write_manifest(path: str | Path, manifest: SequenceManifest) -> None:
    path = Path(path)
    root = path.parent
    lines = [
        f"frames_dir = {manifest.frames_dir.relative_to(root)}",
        f"frame_pattern = {manifest.frame_pattern}",
        f"training_count = {manifest.training_count}",
    ]
    if manifest.frame_count is not None:
        lines.append(f"frame_count = {manifest.frame_count}")
    for idx, gt in manifest.ground_truth:
        lines.append(f"ground_truth = {idx}={gt.relative_to(root)}")
    path.write_text("\n".join(lines) + "\n")


def discover_frame_count(manifest: SequenceManifest) -> int:
    """Count contiguous frames 0..n-1; reject gaps, naming the missing index."""
    directory = manifest.frames_dir
    if not directory.is_dir():
        raise SequenceError(f"frames_dir does not exist: {directory}")
    rx = re.compile(
        "^" + re.escape(manifest.frame_pattern)
        .replace(re.escape("%06d"), r"(\d{6,})")
        .replace(re.escape("%d"), r"(\d+)") + "$")
    indices = set()
    for entry in directory.iterdir():
        m = rx.match(entry.name)
        if m:
            indices.add(int(m.group(1)))
    if not indices:
        raise SequenceError(
            f"pattern {manifest.frame_pattern!r} matches no files "
            f"in {directory}")
    top = max(indices)
    for i in range(top + 1):
        if i not in indices:
            raise SequenceError(f"missing frame index {i} in {directory}")
    count = top + 1
    if manifest.frame_count is not None:
        if count < manifest.frame_count:
            raise SequenceError(
                f"manifest declares {manifest.frame_count} frames, "
                f"found {count}")
        count = manifest.frame_count
    if count < manifest.training_count:
        raise SequenceError(
            f"found {count} frames but training_count is "
            f"{manifest.training_count}")
    return count


def load_frame(path: str | Path, index: int, color: bool = False) -> Frame:
    try:
        with Image.open(path) as img:
            if color and img.mode not in ("L", "I;16", "1"):
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
                planes = [FramePlane(c, arr[:, :, c]) for c in range(3)]
            else:
                arr = np.asarray(img.convert("L"), dtype=np.uint8)
                planes = [FramePlane(0, arr)]
    except FileNotFoundError as exc:
        raise SequenceError(f"missing frame index {index}: {path}") from exc
    except OSError as exc:
        raise FormatError(f"cannot decode frame {index} ({path}): {exc}") from exc
    return Frame(index=index, planes=planes)


def load_sequence(
    manifest: SequenceManifest,
    color: bool = False,
    start: int = 0,
    stop: int | None = None,
) -> Iterator[Frame]:
    """Yield frames [start, stop) in index order, checking geometry."""
    total = discover_frame_count(manifest)
    if stop is None or stop > total:
        stop = total
    first_shape: tuple[int, int, int] | None = None
    for i in range(start, stop):
        frame = load_frame(manifest.frame_path(i), i, color=color)
        shape = (frame.height, frame.width, frame.depth)
        if first_shape is None:
            first_shape = shape
        elif shape != first_shape:
            raise FormatError(
                f"frame {i} geometry {shape} != first frame {first_shape}")
        yield frame


def write_mask(mask: LabelMask, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        Image.fromarray(mask.labels, mode="L").save(path)
    except OSError as exc:
        raise FormatError(f"cannot write mask {path}: {exc}") from exc


def load_ground_truth(path: str | Path) -> LabelMask:
    """Load a mask image; values other than 0/255 become unknown."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.uint8)
    except OSError as exc:
        raise FormatError(f"cannot read ground truth {path}: {exc}") from exc
    labels = np.full_like(arr, LABEL_UNKNOWN)
    labels[arr == 0] = LABEL_BG
    labels[arr == 255] = LABEL_FG
    return LabelMask(labels)
