import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogbg.config import EngineConfig
from cogbg.errors import TrainingError
from cogbg.frame_io import Frame, FramePlane
from cogbg.scene_prior import (
    DYN_DYNAMIC,
    DYN_OSCILLATING,
    DYN_STATIC_DRIFT,
    ResidueHistogram,
    build_kde,
    build_scene_prior,
    classify_pixel_dynamics,
    compute_residue_histogram,
    derive_rate_weights,
    evaluate_prior,
    naive_prior,
    silverman_bandwidth,
    stack_training,
)


def frames_from(values):
    """values: (N, H, W) or (N, d, H, W) -> list of Frame."""
    values = np.asarray(values, dtype=np.uint8)
    if values.ndim == 3:
        values = values[:, None]
    return [
        Frame(index=i, planes=[FramePlane(c, values[i, c])
                               for c in range(values.shape[1])])
        for i in range(values.shape[0])
    ]


def test_single_sample_peak_and_symmetry():
    frames = frames_from(np.full((2, 1, 1), 100))
    kde = build_kde(frames, bandwidth=5.0)
    dens = [evaluate_prior(kde, (0, 0), v) for v in range(256)]
    assert int(np.argmax(dens)) == 100
    for delta in (1, 5, 20):
        assert dens[100 - delta] == pytest.approx(dens[100 + delta],
                                                  rel=1e-12)


def test_two_sample_symmetry():
    frames = frames_from(np.array([[[50]], [[150]]]))
    kde = build_kde(frames, bandwidth=5.0)
    d50 = evaluate_prior(kde, (0, 0), 50)
    d150 = evaluate_prior(kde, (0, 0), 150)
    assert abs(d50 - d150) <= 1e-12


def test_table_sums_to_one_random_samples():
    rng = np.random.default_rng(7)
    vals = rng.integers(0, 256, size=(20, 4, 4), dtype=np.uint8)
    # force boundary samples where an untruncated kernel would lose mass
    vals[0, 0, 0] = 0
    vals[1, 0, 0] = 255
    kde = build_kde(frames_from(vals), bandwidth=5.0)
    sums = kde.tables.sum(axis=2)
    assert np.all(np.abs(sums - 1.0) <= 1e-3)
    assert np.all(kde.tables >= 0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 255), min_size=2, max_size=12),
       st.floats(0.5, 40.0))
def test_table_normalization_property(samples, bandwidth):
    vals = np.array(samples, dtype=np.uint8).reshape(-1, 1, 1)
    kde = build_kde(frames_from(vals), bandwidth=bandwidth)
    assert kde.tables.sum() == pytest.approx(1.0, abs=1e-9)


def test_fast_matches_naive():
    rng = np.random.default_rng(3)
    vals = rng.integers(0, 256, size=(8, 2, 3), dtype=np.uint8)
    kde = build_kde(frames_from(vals), bandwidth=5.0)
    for y in range(2):
        for x in range(3):
            for v in (0, 17, 100, 255):
                fast = evaluate_prior(kde, (y, x), v)
                naive = naive_prior(kde, (y, x), v)
                assert abs(fast - naive) <= 1e-9 * max(naive, 1e-300)


def test_far_value_density_negligible():
    frames = frames_from(np.full((5, 1, 1), 100))
    kde = build_kde(frames, bandwidth=5.0)
    peak = evaluate_prior(kde, (0, 0), 100)
    far = evaluate_prior(kde, (0, 0), 150)  # 10 bandwidths away
    assert far < 1e-6 * peak
    assert abs(far - naive_prior(kde, (0, 0), 150)) <= 1e-9 * max(far, 1e-300)


def test_product_form_two_channels():
    vals = np.full((4, 2, 1, 1), 80, dtype=np.uint8)  # identical channels
    kde = build_kde(frames_from(vals), bandwidth=5.0)
    combined = evaluate_prior(kde, (0, 0), (90, 90))
    single = kde.tables[0, 0, 90]
    assert combined == pytest.approx(single * single, rel=1e-12)


def test_bounds_checking():
    kde = build_kde(frames_from(np.full((2, 2, 2), 10)), bandwidth=5.0)
    with pytest.raises(IndexError):
        evaluate_prior(kde, (2, 0), 10)
    with pytest.raises(ValueError):
        evaluate_prior(kde, (0, 0), (10, 10))  # wrong channel count


def test_build_kde_rejects_bad_input():
    with pytest.raises(TrainingError):
        build_kde([], bandwidth=5.0)
    with pytest.raises(TrainingError):
        build_kde(frames_from(np.full((1, 2, 2), 10)), bandwidth=5.0)
    with pytest.raises(TrainingError):
        build_kde(frames_from(np.full((3, 2, 2), 10)), bandwidth=0.0)


def test_silverman_floor_and_scale():
    flat = np.full((10, 1, 2, 2), 100, dtype=np.uint8)
    assert silverman_bandwidth(flat) == 1.0
    rng = np.random.default_rng(0)
    noisy = np.clip(rng.normal(100, 20, size=(50, 1, 4, 4)), 0, 255
                    ).astype(np.uint8)
    bw = silverman_bandwidth(noisy)
    assert 1.0 < bw < 40.0


def test_constant_pixel_residues():
    frames = frames_from(np.full((10, 2, 2), 70))
    hist = compute_residue_histogram(frames, (4.0, 48.0))
    assert np.allclose(hist.occupancies, [[1.0, 0.0, 0.0]] * 4)
    assert np.allclose(hist.occupancies.sum(axis=1), 1.0, atol=1e-9)


def test_alternating_pixel_lands_in_middle_bin():
    seq = np.array([100, 130, 100, 130]).reshape(4, 1, 1)
    hist = compute_residue_histogram(frames_from(seq), (4.0, 48.0))
    assert np.allclose(hist.occupancies[0], [0.0, 1.0, 0.0])


def test_uniform_noise_fills_top_bin():
    rng = np.random.default_rng(11)
    vals = rng.integers(0, 256, size=(200, 2, 2), dtype=np.uint8)
    hist = compute_residue_histogram(frames_from(vals), (4.0, 48.0))
    assert np.all(hist.occupancies[:, 2] > 0.5)


def test_residue_pools_channels():
    # channel 0 constant, channel 1 alternating by 30: pooled occupancies
    # split evenly between the first and middle bins
    vals = np.zeros((4, 2, 1, 1), dtype=np.uint8)
    vals[:, 0] = 100
    vals[:, 1] = np.array([100, 130, 100, 130]).reshape(4, 1, 1)
    hist = compute_residue_histogram(frames_from(vals), (4.0, 48.0))
    assert np.allclose(hist.occupancies[0], [0.5, 0.5, 0.0])


def test_residue_requires_two_frames():
    with pytest.raises(TrainingError):
        compute_residue_histogram(frames_from(np.full((1, 2, 2), 7)),
                                  (4.0, 48.0))


@pytest.mark.parametrize("occ,expect", [
    ((0.9, 0.05, 0.05), DYN_STATIC_DRIFT),
    ((0.2, 0.7, 0.1), DYN_OSCILLATING),
    ((0.4, 0.4, 0.2), DYN_DYNAMIC),
])
def test_classification_rule(occ, expect):
    hist = ResidueHistogram(edges=(4.0, 48.0),
                            occupancies=np.array([occ]))
    assert classify_pixel_dynamics(hist, 0.6)[0] == expect


def test_classification_checks_first_bin_first():
    hist = ResidueHistogram(edges=(4.0, 48.0),
                            occupancies=np.array([[0.5, 0.5, 0.0]]))
    assert classify_pixel_dynamics(hist, 0.5)[0] == DYN_STATIC_DRIFT


def test_rate_weight_table():
    cfg = EngineConfig()
    classes = np.array([DYN_STATIC_DRIFT, DYN_OSCILLATING, DYN_DYNAMIC],
                       dtype=np.uint8)
    w = derive_rate_weights(classes, cfg)
    assert np.allclose(w[0], (0.7, 0.1, 0.2))
    assert np.allclose(w[1], (0.5, 0.2, 0.3))
    assert np.allclose(w[2], (0.2, 0.5, 0.3))
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-9)
    assert np.all((w >= 0) & (w <= 1))


def test_scene_prior_integration():
    from cogbg.synthgen import SynthRegion, SynthSpec, dynamics_map, generate

    spec = SynthSpec(
        width=12, height=4, frame_count=60, seed=5, training_count=60,
        regions=(
            SynthRegion((0, 0, 4, 4), "static", 120.0, noise=0.5),
            SynthRegion((4, 0, 4, 4), "oscillating", 100.0,
                        amplitude=30.0, period=2),
            SynthRegion((8, 0, 4, 4), "dynamic", 128.0, noise=30.0),
        ))
    frames = [f for f, _ in generate(spec)]
    prior = build_scene_prior(frames, EngineConfig())
    truth = dynamics_map(spec).ravel()
    agree = np.mean(prior.profile.classes == truth)
    assert agree >= 0.95
    assert np.allclose(prior.profile.weights.sum(axis=1), 1.0, atol=1e-9)
    assert np.allclose(prior.histogram.occupancies.sum(axis=1), 1.0,
                       atol=1e-9)


def test_stack_training_shape():
    frames = frames_from(np.zeros((3, 2, 5, 4)))
    assert stack_training(frames).shape == (3, 2, 5, 4)
