import numpy as np
import pytest

from nirscope.motion import (
    ArtifactSegment,
    detect_artifacts,
    spline_correct,
    wavelet_correct,
)

FS = 3.9


def _threshold_oracle(x, amp=5.0, window_s=1.0, std_thr=3.0):
    """Direct evaluation of the detection conditions, loop form."""
    x = np.asarray(x, dtype=float)
    std = x.std()
    if std == 0:
        return np.zeros(x.size, dtype=bool)
    med = np.median(x)
    flags = np.abs(x - med) > amp * std
    w = max(2, int(round(window_s * FS)))
    half = w // 2
    mstd = np.array(
        [x[max(0, i - half) : min(x.size, i + (w - half))].std() for i in range(x.size)]
    )
    flags |= mstd > std_thr * np.median(mstd)
    return flags


def test_clean_sinusoid_yields_no_segments():
    t = np.arange(int(200 * FS)) / FS
    x = np.sin(2 * np.pi * 0.1 * t)
    assert not _threshold_oracle(x).any()  # oracle agrees the signal is clean
    assert detect_artifacts(x, FS) == []


def test_single_spike_yields_one_segment_containing_it():
    t = np.arange(int(200 * FS)) / FS
    x = np.sin(2 * np.pi * 0.1 * t)
    spike_at = 400
    x[spike_at] += 10 * x.std()
    assert _threshold_oracle(x)[spike_at]
    segs = detect_artifacts(x, FS)
    assert len(segs) == 1
    assert segs[0].start <= spike_at < segs[0].end


def test_constant_series_yields_no_segments():
    assert detect_artifacts(np.full(100, 3.0), FS) == []


def test_segments_are_padded_and_merged():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 0.1, size=800)
    x[300] += 50
    x[303] += 50  # within the 0.5 s padding of the first
    segs = detect_artifacts(x, FS)
    assert len(segs) == 1
    pad = int(round(0.5 * FS))
    assert segs[0].start <= 300 - pad + 1
    assert segs[0].end >= 303 + pad - 1


def test_detection_validation():
    with pytest.raises(ValueError, match="exceed"):
        detect_artifacts(np.ones(3), FS)
    with pytest.raises(ValueError):
        ArtifactSegment(5, 5)
    with pytest.raises(ValueError):
        ArtifactSegment(0, 3, trigger="other")


# --- spline correction ---


def test_empty_segment_list_is_identity():
    rng = np.random.default_rng(1)
    x = rng.normal(size=200)
    out = spline_correct(x, [], fs=FS)
    assert np.array_equal(out, x)


def test_step_inside_segment_is_flattened():
    x = np.zeros(400)
    x[180:215] += 10.0  # boxcar artifact wholly inside the flagged segment
    segs = [ArtifactSegment(150, 240)]
    out = spline_correct(x, segs, fs=FS)
    assert np.abs(out).max() < 0.5


def test_spline_reanchors_to_presegment_baseline():
    x = np.full(300, 2.0)
    x[100:140] += 8.0
    out = spline_correct(x, [ArtifactSegment(90, 150)], fs=FS)
    # no step discontinuity beyond the pre-segment spread at the boundaries
    assert abs(out[90] - out[89]) < 0.5
    assert abs(out[150] - out[149]) < 0.5
    assert out[110] == pytest.approx(2.0, abs=0.5)


def test_segment_covering_entire_series():
    t = np.arange(200) / FS
    x = 3.0 + 0.5 * t  # pure trend
    out = spline_correct(x, [ArtifactSegment(0, 200)], fs=FS)
    assert out.shape == x.shape
    assert abs(out.mean()) < 1e-8  # demeaned, trend removed
    assert out.std() < x.std()


def test_spline_never_touches_outside_segments():
    rng = np.random.default_rng(2)
    x = rng.normal(size=500)
    segs = [ArtifactSegment(100, 150), ArtifactSegment(300, 320)]
    out = spline_correct(x, segs, fs=FS)
    mask = np.ones(500, dtype=bool)
    mask[100:150] = False
    mask[300:320] = False
    assert np.array_equal(out[mask], x[mask])


def test_segment_at_series_start_uses_post_baseline():
    x = np.full(200, 5.0)
    x[0:30] += 7.0
    out = spline_correct(x, [ArtifactSegment(0, 40)], fs=FS)
    assert out[10] == pytest.approx(5.0, abs=0.5)


def test_segment_outside_bounds_rejected():
    with pytest.raises(ValueError, match="outside series"):
        spline_correct(np.zeros(10), [ArtifactSegment(5, 20)], fs=FS)


# --- wavelet correction ---


def test_all_zero_series_stays_zero():
    out = wavelet_correct(np.zeros(100))
    assert np.abs(out).max() == 0.0


def test_smooth_sinusoid_passes_through():
    t = np.arange(400) / FS
    x = np.sin(2 * np.pi * 0.05 * t)
    out = wavelet_correct(x)
    dev = np.sqrt(np.mean((out - x) ** 2))
    assert dev < 0.05 * np.sqrt(np.mean(x**2))


def test_spike_amplitude_reduced_80_percent():
    t = np.arange(400) / FS
    x = np.sin(2 * np.pi * 0.05 * t)
    spiked = x.copy()
    spiked[200] += 20 * x.std()
    out = wavelet_correct(spiked)
    before = abs(spiked[200] - x[200])
    after = abs(out[200] - x[200])
    assert after <= 0.2 * before


def test_infinite_threshold_is_identity():
    rng = np.random.default_rng(3)
    for n in (64, 100, 333, 1024):
        x = rng.normal(size=n)
        out = wavelet_correct(x, iqr_multiplier=np.inf)
        assert np.abs(out - x).max() < 1e-10


def test_short_series_rejected():
    with pytest.raises(ValueError, match="too short"):
        wavelet_correct(np.zeros(15))


def test_negative_multiplier_rejected():
    with pytest.raises(ValueError, match="iqr_multiplier"):
        wavelet_correct(np.zeros(100), iqr_multiplier=-1.0)


def test_output_length_preserved():
    rng = np.random.default_rng(4)
    for n in (16, 57, 400):
        assert wavelet_correct(rng.normal(size=n)).shape == (n,)
