"""Binary model-file serialization for a trained cascade engine.

Layout (little-endian), sections in fixed order:

  header   magic "COGP", version u32=1, width, height, depth, N (training
           samples) as u32, kde bandwidth / residue t1 / residue t2 as f32,
           flags u32 (reserved), frame counter u64
  "PRIO"   per pixel: dynamics class u8, rate weights (3 x f32), then one
           256-entry f32 density table per channel
  "GRUP"   group count u32; per pixel u16 group id (0xFFFF = ungrouped);
           per group: member count u32, weight f32, per channel mean and
           variance f32
  "GMMS"   k_max u32; per pixel per channel: mode count u8 plus k_max
           (mean, variance, weight) f32 triples
  "CASC"   per pixel per channel: level order 3 x i8, mode refs 2 x i8,
           CHP memory u8, last label u8, last active level i8, waking u8,
           streak i64, sleep clock i64, per-level hit counters 5 x i64

Continuous state is quantized to f32 on disk, so save -> load -> save is
byte-identical but a loaded engine can differ from the in-memory one in the
last float bits. Multi-pixel records are pixel-major with channels inner.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .cascade import CascadeEngine
from .config import EngineConfig
from .errors import ConfigError, FormatError

MAGIC = b"COGP"
VERSION = 1
_UNGROUPED_ID = 0xFFFF
_HEADER = struct.Struct("<4sIIIIIfffIQ")


def _prior_dtype(depth: int) -> np.dtype:
    return np.dtype([("dyn", "u1"), ("wa", "<f4"), ("wb", "<f4"),
                     ("wc", "<f4"), ("table", "<f4", (depth, 256))])


def _group_dtype(depth: int) -> np.dtype:
    return np.dtype([("members", "<u4"), ("weight", "<f4"),
                     ("mu", "<f4", (depth,)), ("var", "<f4", (depth,))])


def _mode_dtype(k: int) -> np.dtype:
    return np.dtype([("count", "u1"), ("modes", "<f4", (k, 3))])


_CASC_DTYPE = np.dtype([("mid", "i1", (3,)), ("ref", "i1", (2,)),
                        ("chp", "u1"), ("label", "u1"), ("last", "i1"),
                        ("waking", "u1"), ("streak", "<i8"),
                        ("clock", "<i8"), ("hits", "<i8", (5,))])


def save_model(engine: CascadeEngine, path: str | Path) -> None:
    """Write the full engine state; deterministic byte-for-byte."""
    p, d, k = engine.n_pix, engine.depth, engine.config.k_max
    g = engine.group_w.shape[0]
    if g >= _UNGROUPED_ID:
        raise FormatError(f"too many groups to serialize ({g})")
    parts = [_HEADER.pack(
        MAGIC, VERSION, engine.width, engine.height, d,
        engine.sample_count, engine.bandwidth,
        engine.config.residue_t1, engine.config.residue_t2, 0,
        engine.frame_count)]

    prio = np.zeros(p, dtype=_prior_dtype(d))
    prio["dyn"] = engine.dynamics
    prio["wa"] = engine.wa
    prio["wb"] = engine.wb
    prio["wc"] = engine.wc
    prio["table"] = engine.tables.transpose(1, 0, 2)
    parts += [b"PRIO", prio.tobytes()]

    ids = np.where(engine.group_id < 0, _UNGROUPED_ID,
                   engine.group_id).astype("<u2")
    grp = np.zeros(g, dtype=_group_dtype(d))
    grp["members"] = engine.group_members
    grp["weight"] = engine.group_w
    grp["mu"] = engine.group_mu.T
    grp["var"] = engine.group_var.T
    parts += [b"GRUP", struct.pack("<I", g), ids.tobytes(), grp.tobytes()]

    gmms = np.zeros(p * d, dtype=_mode_dtype(k))
    gmms["count"] = engine.count.T.reshape(-1)
    modes = np.stack([engine.mu, engine.var, engine.w], axis=-1)
    gmms["modes"] = modes.transpose(1, 0, 2, 3).reshape(p * d, k, 3)
    parts += [b"GMMS", struct.pack("<I", k), gmms.tobytes()]

    casc = np.zeros(p * d, dtype=_CASC_DTYPE)
    casc["mid"] = engine.mid_order.transpose(1, 0, 2).reshape(p * d, 3)
    casc["ref"] = engine.mode_ref.transpose(1, 0, 2).reshape(p * d, 2)
    casc["chp"] = engine.chp_prev.T.reshape(-1)
    casc["label"] = engine.last_label.T.reshape(-1)
    casc["last"] = engine.last_active.T.reshape(-1)
    casc["waking"] = engine.waking.T.reshape(-1)
    casc["streak"] = engine.streak.T.reshape(-1)
    casc["clock"] = engine.clock.T.reshape(-1)
    casc["hits"] = engine.hits.transpose(1, 0, 2).reshape(p * d, 5)
    parts += [b"CASC", casc.tobytes()]

    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes, path: Path) -> None:
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated model file")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def expect(self, tag: bytes) -> None:
        got = self.take(4)
        if got != tag:
            raise FormatError(
                f"{self.path}: expected section {tag!r}, found {got!r}")

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def records(self, dtype: np.dtype, count: int) -> np.ndarray:
        raw = self.take(dtype.itemsize * count)
        return np.frombuffer(raw, dtype=dtype, count=count)


def load_model(path: str | Path, config: EngineConfig) -> CascadeEngine:
    """Rebuild an engine from a model file; the runtime config is supplied
    by the caller and must agree with the file's mode capacity."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read model file {path}: {exc}") from exc
    r = _Reader(buf, path)
    try:
        (magic, version, width, height, depth, samples, bandwidth,
         t1, t2, _flags, frame_count) = _HEADER.unpack(r.take(_HEADER.size))
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if magic != MAGIC:
        raise FormatError(f"{path}: not a model file (magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    if width < 1 or height < 1 or depth not in (1, 3):
        raise FormatError(f"{path}: invalid geometry "
                          f"{width}x{height}x{depth}")
    p = width * height

    r.expect(b"PRIO")
    prio = r.records(_prior_dtype(depth), p)

    r.expect(b"GRUP")
    g = r.u32()
    if g >= _UNGROUPED_ID:
        raise FormatError(f"{path}: group count {g} out of range")
    ids = r.records(np.dtype("<u2"), p)
    bad = (ids != _UNGROUPED_ID) & (ids >= g)
    if bad.any():
        raise FormatError(f"{path}: group id out of range")
    grp = r.records(_group_dtype(depth), g)

    r.expect(b"GMMS")
    k = r.u32()
    if k != config.k_max:
        raise ConfigError(
            f"model file has {k} mode slots, config expects "
            f"{config.k_max}")
    gmms = r.records(_mode_dtype(k), p * depth)
    if (gmms["count"] > k).any():
        raise FormatError(f"{path}: mode count exceeds capacity")

    r.expect(b"CASC")
    casc = r.records(_CASC_DTYPE, p * depth)
    if (casc["mid"] > 3).any() or (casc["mid"] < -1).any():
        raise FormatError(f"{path}: invalid cascade level code")
    if (casc["ref"] < 0).any() or (casc["ref"] >= k).any():
        raise FormatError(f"{path}: mode reference out of range")
    if r.off != len(buf):
        raise FormatError(f"{path}: {len(buf) - r.off} trailing bytes")

    eng = CascadeEngine(config, height, width, depth)
    eng.bandwidth = float(bandwidth)
    eng.sample_count = samples
    eng.frame_count = frame_count
    eng.dynamics = prio["dyn"].copy()
    eng.wa = prio["wa"].astype(np.float64)
    eng.wb = prio["wb"].astype(np.float64)
    eng.wc = prio["wc"].astype(np.float64)
    eng.tables = np.ascontiguousarray(prio["table"].transpose(1, 0, 2))
    eng._finalize_tables()
    ids64 = ids.astype(np.int64)
    eng.group_id = np.where(ids64 == _UNGROUPED_ID, -1, ids64)
    eng.group_members = grp["members"].astype(np.int64)
    eng.group_w = grp["weight"].astype(np.float64)
    eng.group_mu = np.ascontiguousarray(grp["mu"].T.astype(np.float64))
    eng.group_var = np.ascontiguousarray(grp["var"].T.astype(np.float64))
    modes = gmms["modes"].astype(np.float64).reshape(p, depth, k, 3)
    eng.mu = np.ascontiguousarray(modes[..., 0].transpose(1, 0, 2))
    eng.var = np.ascontiguousarray(modes[..., 1].transpose(1, 0, 2))
    eng.w = np.ascontiguousarray(modes[..., 2].transpose(1, 0, 2))
    eng.count = np.ascontiguousarray(
        gmms["count"].reshape(p, depth).T.astype(np.int64))
    eng.mid_order = np.ascontiguousarray(
        casc["mid"].reshape(p, depth, 3).transpose(1, 0, 2))
    eng.mode_ref = np.ascontiguousarray(
        casc["ref"].reshape(p, depth, 2).transpose(1, 0, 2))
    eng.chp_prev = np.ascontiguousarray(casc["chp"].reshape(p, depth).T)
    eng.last_label = np.ascontiguousarray(casc["label"].reshape(p, depth).T)
    eng.last_active = np.ascontiguousarray(casc["last"].reshape(p, depth).T)
    eng.waking = np.ascontiguousarray(casc["waking"].reshape(p, depth).T)
    eng.streak = np.ascontiguousarray(casc["streak"].reshape(p, depth).T)
    eng.clock = np.ascontiguousarray(casc["clock"].reshape(p, depth).T)
    eng.hits = np.ascontiguousarray(
        casc["hits"].reshape(p, depth, 5).transpose(1, 0, 2))
    return eng
