import numpy as np
import pytest
from PIL import Image

from cogbg.errors import FormatError, SequenceError
from cogbg.frame_io import (
    LABEL_BG,
    LABEL_FG,
    LABEL_UNKNOWN,
    LabelMask,
    SequenceManifest,
    discover_frame_count,
    load_ground_truth,
    load_sequence,
    parse_manifest,
    write_manifest,
    write_mask,
)


def _write_frames(tmp_path, count, size=(8, 8), skip=()):
    d = tmp_path / "frames"
    d.mkdir()
    for i in range(count):
        if i in skip:
            continue
        arr = np.full(size, i, dtype=np.uint8)
        Image.fromarray(arr, mode="L").save(d / f"frame_{i:06d}.png")
    return d


def _manifest(tmp_path, training=2, **kw):
    return SequenceManifest(
        frames_dir=tmp_path / "frames",
        frame_pattern="frame_%06d.png",
        training_count=training,
        **kw,
    )


def test_load_sequence_orders_frames(tmp_path):
    _write_frames(tmp_path, 3)
    frames = list(load_sequence(_manifest(tmp_path)))
    assert [f.index for f in frames] == [0, 1, 2]
    assert all(f.width == 8 and f.height == 8 and f.depth == 1
               for f in frames)
    assert frames[2].planes[0].data[0, 0] == 2


def test_empty_sequence_rejected(tmp_path):
    (tmp_path / "frames").mkdir()
    with pytest.raises(SequenceError):
        list(load_sequence(_manifest(tmp_path)))


def test_gap_names_missing_index(tmp_path):
    _write_frames(tmp_path, 4, skip=(2,))
    with pytest.raises(SequenceError, match="index 2"):
        discover_frame_count(_manifest(tmp_path))


def test_dimension_mismatch_names_frame(tmp_path):
    d = _write_frames(tmp_path, 2)
    Image.fromarray(np.zeros((4, 4), np.uint8), mode="L").save(
        d / "frame_000001.png")
    with pytest.raises(FormatError, match="frame 1"):
        list(load_sequence(_manifest(tmp_path)))


def test_color_split(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    arr = np.zeros((4, 4, 3), np.uint8)
    arr[..., 0] = 10
    arr[..., 1] = 20
    arr[..., 2] = 30
    Image.fromarray(arr, mode="RGB").save(d / "frame_000000.png")
    Image.fromarray(arr, mode="RGB").save(d / "frame_000001.png")
    frames = list(load_sequence(_manifest(tmp_path), color=True))
    assert frames[0].depth == 3
    assert [p.data[0, 0] for p in frames[0].planes] == [10, 20, 30]
    # grayscale default collapses to one plane
    frames = list(load_sequence(_manifest(tmp_path)))
    assert frames[0].depth == 1


@pytest.mark.parametrize("value", [LABEL_BG, LABEL_FG, LABEL_UNKNOWN])
def test_mask_round_trip(tmp_path, value):
    mask = LabelMask(np.full((5, 7), value, np.uint8))
    p = tmp_path / "m.png"
    write_mask(mask, p)
    back = load_ground_truth(p)
    assert np.array_equal(back.labels, mask.labels)


def test_mask_round_trip_mixed(tmp_path):
    rng = np.random.default_rng(0)
    labels = rng.choice([LABEL_BG, LABEL_FG, LABEL_UNKNOWN],
                        size=(16, 16)).astype(np.uint8)
    p = tmp_path / "m.png"
    write_mask(LabelMask(labels), p)
    assert np.array_equal(load_ground_truth(p).labels, labels)


def test_ground_truth_other_values_unknown(tmp_path):
    arr = np.array([[0, 255], [7, 200]], np.uint8)
    p = tmp_path / "gt.png"
    Image.fromarray(arr, mode="L").save(p)
    gt = load_ground_truth(p)
    assert gt.labels[0, 0] == LABEL_BG
    assert gt.labels[0, 1] == LABEL_FG
    assert gt.labels[1, 0] == LABEL_UNKNOWN
    assert gt.labels[1, 1] == LABEL_UNKNOWN


def test_manifest_round_trip(tmp_path):
    _write_frames(tmp_path, 3)
    gt_dir = tmp_path / "truth"
    gt_dir.mkdir()
    man = _manifest(tmp_path, training=2,
                    ground_truth=[(1, gt_dir / "m1.png")],
                    frame_count=3)
    path = tmp_path / "manifest.txt"
    write_manifest(path, man)
    back = parse_manifest(path)
    assert back.frames_dir == man.frames_dir
    assert back.frame_pattern == man.frame_pattern
    assert back.training_count == 2
    assert back.frame_count == 3
    assert back.ground_truth == [(1, gt_dir / "m1.png")]


def test_manifest_rejects_unknown_key(tmp_path):
    p = tmp_path / "manifest.txt"
    p.write_text("frames_dir = frames\nframe_pattern = f_%d.png\n"
                 "training_count = 2\nbogus = 1\n")
    with pytest.raises(FormatError, match="bogus"):
        parse_manifest(p)


def test_manifest_requires_keys(tmp_path):
    p = tmp_path / "manifest.txt"
    p.write_text("frames_dir = frames\n")
    with pytest.raises(FormatError):
        parse_manifest(p)


def test_training_count_exceeds_frames(tmp_path):
    _write_frames(tmp_path, 2)
    with pytest.raises(SequenceError):
        discover_frame_count(_manifest(tmp_path, training=5))
