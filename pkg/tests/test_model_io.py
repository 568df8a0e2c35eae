"""Model-file round trips, validation, and checkpoint-resume behavior."""

import struct

import numpy as np
import pytest

from cogbg.config import EngineConfig
from cogbg.errors import ConfigError, FormatError
from cogbg.model_io import load_model, save_model
from cogbg.synthgen import SynthRegion, SynthSpec, generate
from cogbg.training import train_engine


def scene(seed=0, n=40, osc=True):
    regions = [SynthRegion(rect=(0, 0, 16, 12), kind="static", level=90.0,
                           noise=0.5)]
    if osc:
        regions.append(SynthRegion(rect=(0, 12, 16, 4), kind="oscillating",
                                   level=60.0, amplitude=80.0, period=4))
    else:
        regions.append(SynthRegion(rect=(0, 12, 16, 4), kind="static",
                                   level=60.0, noise=0.5))
    return SynthSpec(width=16, height=16, frame_count=n, seed=seed,
                     regions=tuple(regions))


@pytest.fixture(scope="module")
def trained():
    frames = [f for f, _ in generate(scene())]
    cfg = EngineConfig(training_frames=24, backend="numpy")
    return train_engine(frames[:24], cfg), frames, cfg


def test_save_load_save_is_byte_identical(tmp_path, trained):
    eng, _, cfg = trained
    p1, p2 = tmp_path / "a.cog", tmp_path / "b.cog"
    save_model(eng, p1)
    save_model(load_model(p1, cfg), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_saving_twice_is_deterministic(tmp_path, trained):
    eng, _, cfg = trained
    p1, p2 = tmp_path / "a.cog", tmp_path / "b.cog"
    save_model(eng, p1)
    save_model(eng, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_loaded_state_matches_saved_engine(tmp_path, trained):
    eng, _, cfg = trained
    path = tmp_path / "m.cog"
    save_model(eng, path)
    out = load_model(path, cfg)
    assert (out.height, out.width, out.depth) == (16, 16, 1)
    assert out.sample_count == eng.sample_count
    assert out.frame_count == eng.frame_count
    np.testing.assert_array_equal(out.dynamics, eng.dynamics)
    np.testing.assert_array_equal(out.group_id, eng.group_id)
    np.testing.assert_array_equal(out.count, eng.count)
    np.testing.assert_array_equal(out.mid_order, eng.mid_order)
    np.testing.assert_array_equal(out.mode_ref, eng.mode_ref)
    np.testing.assert_array_equal(out.chp_prev, eng.chp_prev)
    np.testing.assert_array_equal(out.tables, eng.tables)
    # continuous state survives at f32 precision
    np.testing.assert_allclose(out.mu, eng.mu, rtol=1e-6, atol=1e-4)
    np.testing.assert_allclose(out.var, eng.var, rtol=1e-6, atol=1e-4)
    np.testing.assert_allclose(out.w, eng.w, rtol=1e-6)
    np.testing.assert_allclose(out.wa, eng.wa, rtol=1e-6)


def test_loaded_engine_produces_same_masks(tmp_path, trained):
    eng, frames, cfg = trained
    path = tmp_path / "m.cog"
    save_model(eng, path)
    a = eng.clone()
    b = load_model(path, cfg)
    for f in frames[24:]:
        ma, _ = a.process_frame(f)
        mb, _ = b.process_frame(f)
        np.testing.assert_array_equal(ma.labels, mb.labels)


def test_checkpoint_mid_run_resumes(tmp_path, trained):
    eng, frames, cfg = trained
    live = eng.clone()
    for f in frames[24:32]:
        live.process_frame(f)
    path = tmp_path / "ckpt.cog"
    save_model(live, path)
    resumed = load_model(path, cfg)
    assert resumed.frame_count == live.frame_count
    np.testing.assert_array_equal(resumed.streak, live.streak)
    np.testing.assert_array_equal(resumed.clock, live.clock)
    np.testing.assert_array_equal(resumed.hits, live.hits)
    for f in frames[32:40]:
        ma, sa = live.process_frame(f)
        mb, sb = resumed.process_frame(f)
        np.testing.assert_array_equal(ma.labels, mb.labels)
        assert sa.as_row() == sb.as_row()


def test_truncated_file_rejected(tmp_path, trained):
    eng, _, cfg = trained
    path = tmp_path / "m.cog"
    save_model(eng, path)
    clipped = tmp_path / "clip.cog"
    clipped.write_bytes(path.read_bytes()[:200])
    with pytest.raises(FormatError):
        load_model(clipped, cfg)


def test_bad_magic_rejected(tmp_path, trained):
    eng, _, cfg = trained
    path = tmp_path / "m.cog"
    save_model(eng, path)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        load_model(path, cfg)


def test_unsupported_version_rejected(tmp_path, trained):
    eng, _, cfg = trained
    path = tmp_path / "m.cog"
    save_model(eng, path)
    data = bytearray(path.read_bytes())
    struct.pack_into("<I", data, 4, 99)
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        load_model(path, cfg)


def test_trailing_bytes_rejected(tmp_path, trained):
    eng, _, cfg = trained
    path = tmp_path / "m.cog"
    save_model(eng, path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(FormatError):
        load_model(path, cfg)


def test_mode_capacity_mismatch_rejected(tmp_path, trained):
    eng, _, cfg = trained
    path = tmp_path / "m.cog"
    save_model(eng, path)
    with pytest.raises(ConfigError):
        load_model(path, EngineConfig(k_max=5, backend="numpy"))


def test_ungrouped_model_round_trips(tmp_path):
    frames = [f for f, _ in generate(scene(seed=3, osc=False))]
    cfg = EngineConfig(training_frames=24, grouping=False, backend="numpy")
    eng = train_engine(frames[:24], cfg)
    assert eng.group_w.shape[0] == 0
    path = tmp_path / "m.cog"
    save_model(eng, path)
    out = load_model(path, cfg)
    assert out.group_w.shape[0] == 0
    assert (out.group_id == -1).all()
