import numpy as np
import pytest

from cogbg.errors import DataError, FormatError
from cogbg.frame_io import load_sequence, parse_manifest
from cogbg.synthgen import (
    DYN_DYNAMIC,
    DYN_OSCILLATING,
    DYN_STATIC_DRIFT,
    SynthBlob,
    SynthRegion,
    SynthSpec,
    dynamics_map,
    generate,
    materialize,
    parse_spec_file,
    validate_spec,
)


def _simple_spec(**kw):
    base = dict(
        width=16, height=8, frame_count=10, seed=1, training_count=3,
        regions=(SynthRegion((0, 0, 16, 8), "static", 100.0),),
    )
    base.update(kw)
    return SynthSpec(**base)


def test_noiseless_static_frames_identical():
    frames = [f.planes[0].data for f, _ in generate(_simple_spec())]
    assert all(np.array_equal(frames[0], f) for f in frames)
    assert frames[0][0, 0] == 100


def test_determinism_same_seed():
    spec = _simple_spec(regions=(
        SynthRegion((0, 0, 16, 8), "dynamic", 100.0, noise=20.0),))
    a = [f.planes[0].data for f, _ in generate(spec)]
    b = [f.planes[0].data for f, _ in generate(spec)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_different_seed_differs():
    r = (SynthRegion((0, 0, 16, 8), "dynamic", 100.0, noise=20.0),)
    a = [f.planes[0].data for f, _ in generate(_simple_spec(seed=1, regions=r))]
    b = [f.planes[0].data for f, _ in generate(_simple_spec(seed=2, regions=r))]
    assert any(not np.array_equal(x, y) for x, y in zip(a, b))


def test_oscillator_residue_is_constant_amplitude():
    spec = _simple_spec(regions=(
        SynthRegion((0, 0, 16, 8), "oscillating", 100.0,
                    amplitude=30.0, period=2),))
    vals = [int(f.planes[0].data[3, 3]) for f, _ in generate(spec)]
    residues = [abs(b - a) for a, b in zip(vals, vals[1:])]
    assert residues == [30] * (len(vals) - 1)


def test_drift_ramp():
    spec = _simple_spec(regions=(
        SynthRegion((0, 0, 16, 8), "drift", 100.0, slope=0.05),),
        frame_count=100)
    vals = [int(f.planes[0].data[0, 0]) for f, _ in generate(spec)]
    assert vals[0] == 100
    assert vals[-1] == round(100 + 0.05 * 99)
    assert all(b - a in (0, 1) for a, b in zip(vals, vals[1:]))


def test_blob_ground_truth_exact_coverage():
    spec = _simple_spec(blobs=(
        SynthBlob((2.0, 2.0), (1.0, 0.0), 3, 50.0, 2, 5),))
    for t, (frame, truth) in enumerate(generate(spec)):
        fg = np.argwhere(truth.labels == 255)
        if 2 <= t < 7:
            x0 = 2 + (t - 2)
            expect = {(y, x) for y in range(2, 5) for x in range(x0, x0 + 3)}
            assert {tuple(p) for p in fg} == expect
            # blob adds offset on top of the background
            assert frame.planes[0].data[3, x0] == 150
        else:
            assert fg.size == 0


def test_illumination_shift_persists():
    spec = _simple_spec(illumination_events=((4, 30.0),))
    vals = [int(f.planes[0].data[0, 0]) for f, _ in generate(spec)]
    assert vals[:4] == [100] * 4
    assert vals[4:] == [130] * 6


def test_values_clipped_to_byte_range():
    spec = _simple_spec(
        regions=(SynthRegion((0, 0, 16, 8), "static", 250.0),),
        illumination_events=((2, 40.0),))
    for _, (frame, _t) in zip(range(10), generate(spec)):
        assert frame.planes[0].data.max() <= 255


def test_dynamics_map_classes():
    spec = SynthSpec(
        width=9, height=3, frame_count=5, seed=0, training_count=2,
        regions=(
            SynthRegion((0, 0, 3, 3), "static", 100.0),
            SynthRegion((3, 0, 3, 3), "oscillating", 100.0,
                        amplitude=20.0, period=2),
            SynthRegion((6, 0, 3, 3), "dynamic", 100.0, noise=25.0),
        ))
    m = dynamics_map(spec)
    assert (m[:, :3] == DYN_STATIC_DRIFT).all()
    assert (m[:, 3:6] == DYN_OSCILLATING).all()
    assert (m[:, 6:] == DYN_DYNAMIC).all()


@pytest.mark.parametrize("bad", [
    dict(regions=(SynthRegion((0, 0, 8, 8), "static", 100.0),)),  # hole
    dict(regions=(SynthRegion((0, 0, 16, 8), "static", 100.0),
                  SynthRegion((0, 0, 2, 2), "static", 50.0))),  # overlap
    dict(regions=(SynthRegion((0, 0, 16, 8), "static", 100.0, noise=2.0),)),
    dict(regions=(SynthRegion((0, 0, 16, 8), "drift", 100.0, slope=0.2),)),
    dict(regions=(SynthRegion((0, 0, 16, 8), "oscillating", 100.0,
                              amplitude=10.0, period=3),)),
    dict(blobs=(SynthBlob((14.0, 2.0), (1.0, 0.0), 3, 50.0, 0, 5),)),
    dict(illumination_events=((99, 10.0),)),
])
def test_invalid_specs_rejected(bad):
    base = dict(
        width=16, height=8, frame_count=10, seed=1, training_count=3,
        regions=(SynthRegion((0, 0, 16, 8), "static", 100.0),),
    )
    base.update(bad)
    with pytest.raises(DataError):
        validate_spec(SynthSpec(**base))


def test_spec_file_round_trip(tmp_path):
    text = """
[sequence]
width = 16
height = 8
frames = 12
seed = 9
training = 4

[region]
rect = 0,0,8,8
kind = static
level = 120
noise = 0.5

[region]
rect = 8,0,8,8
kind = oscillating
level = 100
amplitude = 30
period = 2

[blob]
start = 2,2
velocity = 0.5,0
size = 3
offset = 60
entry = 5
duration = 4

[event]
frame = 8
shift = 20
"""
    p = tmp_path / "scene.synth"
    p.write_text(text)
    spec = parse_spec_file(p)
    assert spec.width == 16 and spec.frame_count == 12
    assert spec.training_count == 4
    assert len(spec.regions) == 2
    assert spec.blobs[0].entry == 5
    assert spec.illumination_events == ((8, 20.0),)


def test_spec_file_errors(tmp_path):
    p = tmp_path / "bad.synth"
    p.write_text("[region]\nrect = 0,0,4,4\nkind = static\nlevel = 10\n")
    with pytest.raises(FormatError):
        parse_spec_file(p)  # missing [sequence]
    p.write_text("[sequence]\nwidth = x\n")
    with pytest.raises(FormatError):
        parse_spec_file(p)


def test_materialize_round_trip(tmp_path):
    spec = _simple_spec(blobs=(
        SynthBlob((2.0, 2.0), (0.5, 0.0), 3, 60.0, 2, 3),))
    manifest_path = materialize(spec, tmp_path / "scene")
    man = parse_manifest(manifest_path)
    assert man.training_count == 3
    frames = list(load_sequence(man))
    raw = [f.planes[0].data for f, _ in generate(spec)]
    assert len(frames) == len(raw)
    assert all(np.array_equal(a.planes[0].data, b)
               for a, b in zip(frames, raw))
    assert len(man.ground_truth) == spec.frame_count
