"""Metric tests: brute-force formula oracles, detector behaviour on
synthetic ECG with known R times, and vitals arithmetic."""

import numpy as np
import pytest

from liftecg import data as dp
from liftecg import metrics as mt


def pearson_oracle(a, b):
    """Direct two-pass textbook formula."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    ac, bc = a - a.mean(), b - b.mean()
    return float((ac * bc).sum() / np.sqrt((ac * ac).sum() * (bc * bc).sum()))


class TestPearson:
    def test_self_correlation(self):
        x = np.random.default_rng(0).normal(size=50)
        assert mt.pearson(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_anti_correlation(self):
        x = np.random.default_rng(1).normal(size=50)
        assert mt.pearson(x, -x) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_bruteforce_oracle(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        b = np.array([2.0, 4.0, 5.0, 9.0])
        assert abs(mt.pearson(a, b) - pearson_oracle(a, b)) < 1e-9

    def test_thousand_random_pairs(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            n = rng.integers(2, 60)
            a = rng.normal(size=n)
            b = rng.normal(size=n)
            assert abs(mt.pearson(a, b) - pearson_oracle(a, b)) < 1e-9

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a = rng.normal(size=40)
            b = rng.normal(size=40)
            alpha = rng.uniform(0.1, 10)
            beta = rng.uniform(-5, 5)
            assert abs(mt.pearson(a, alpha * b + beta) - mt.pearson(a, b)) < 1e-9

    def test_constant_guarded_to_zero(self):
        assert mt.pearson(np.zeros(10), np.arange(10.0)) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mt.pearson(np.zeros(5), np.zeros(6))


class TestMre:
    def test_zero_on_equal(self):
        x = np.random.default_rng(4).normal(size=30)
        assert mt.mre(x, x) == 0.0

    def test_zero_prediction_gives_one(self):
        x = np.random.default_rng(5).normal(size=30)
        assert mt.mre(x, np.zeros(30)) == pytest.approx(1.0, abs=1e-12)

    def test_double_prediction_gives_one(self):
        x = np.random.default_rng(6).normal(size=30)
        assert mt.mre(x, 2 * x) == pytest.approx(1.0, abs=1e-12)

    def test_all_zero_gt_missing(self):
        assert mt.mre(np.zeros(10), np.ones(10)) is None

    def test_scale_sensitivity(self):
        rng = np.random.default_rng(7)
        gt = rng.normal(size=40)
        delta = rng.normal(size=40)
        full = mt.mre(gt, gt + delta)
        half = mt.mre(gt, gt + 0.5 * delta)
        assert half == pytest.approx(0.5 * full, rel=1e-9)

    def test_bruteforce_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            n = rng.integers(2, 60)
            gt = rng.normal(size=n)
            pred = rng.normal(size=n)
            ref = np.abs(gt - pred).sum() / np.abs(gt).sum()
            assert abs(mt.mre(gt, pred) - ref) < 1e-9


class TestDetector:
    def test_clean_ecg_counts_and_timing(self):
        rec = dp.synthesize_pair(dp.SynthParams(heart_rate_bpm=60, seed=9), 10.24)
        peaks = mt.detect_r_peaks(rec.ecg, 200)
        assert abs(peaks.count - len(rec.r_peak_times)) <= 1
        det_t = peaks.indices / 200.0
        for tb in rec.r_peak_times:
            assert np.abs(det_t - tb).min() <= 0.020

    def test_flat_signal_no_peaks(self):
        peaks = mt.detect_r_peaks(np.zeros(2000), 200)
        assert peaks.count == 0 and not peaks.too_short

    def test_short_signal_flagged(self):
        peaks = mt.detect_r_peaks(np.zeros(300), 200)
        assert peaks.count == 0 and peaks.too_short

    def test_inverted_ecg_same_count(self):
        rec = dp.synthesize_pair(dp.SynthParams(heart_rate_bpm=72, seed=10), 30.0)
        up = mt.detect_r_peaks(rec.ecg, 200)
        down = mt.detect_r_peaks(-rec.ecg, 200)
        assert up.count == down.count

    def test_low_rate_rejected(self):
        with pytest.raises(ValueError, match="100"):
            mt.detect_r_peaks(np.zeros(500), 50)

    def test_monotonic_and_refractory_on_noise(self):
        rng = np.random.default_rng(11)
        refractory = int(0.2 * 200)
        for _ in range(20):
            sig = rng.normal(size=rng.integers(400, 4000))
            peaks = mt.detect_r_peaks(sig, 200)
            idx = peaks.indices
            assert np.all(np.diff(idx) > 0)
            assert np.all(np.diff(idx) >= refractory)

    def test_chunk_level_detection(self):
        # one 5.12 s chunk (the per-chunk evaluation granularity)
        rec = dp.synthesize_pair(dp.SynthParams(heart_rate_bpm=75, seed=12), 10.24)
        chunk = rec.ecg[:1024]
        peaks = mt.detect_r_peaks(chunk, 200)
        in_window = [t for t in rec.r_peak_times if t < 1024 / 200.0 - 0.05]
        assert abs(peaks.count - len(in_window)) <= 1


class TestVitalsArithmetic:
    def test_hr_examples(self):
        assert mt.heart_rate([1.0, 1.0, 1.0]) == pytest.approx(60.0)
        assert mt.heart_rate([0.5]) == pytest.approx(120.0)
        assert mt.heart_rate([0.8, 1.2]) == pytest.approx(60.0)

    def test_hr_missing(self):
        assert mt.heart_rate([]) is None

    def test_rmssd_examples(self):
        assert mt.rmssd([1.0, 1.0, 1.0]) == pytest.approx(0.0)
        assert mt.rmssd([0.8, 1.0]) == pytest.approx(200.0)
        assert mt.rmssd([1.0, 0.9, 1.1]) == pytest.approx(
            np.sqrt((0.01 + 0.04) / 2) * 1000)

    def test_rmssd_missing(self):
        assert mt.rmssd([1.0]) is None

    def test_bruteforce_recomputation(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            m = rng.integers(3, 30)
            idx = np.cumsum(rng.integers(40, 300, size=m))
            series = mt.RPeakSeries(indices=idx, fs=200.0)
            rr = np.diff(idx) / 200.0
            hr_ref = 60.0 * len(rr) / rr.sum()
            d = np.diff(rr)
            rm_ref = np.sqrt((d ** 2).sum() / len(d)) * 1000
            assert abs(mt.heart_rate(series.rr) - hr_ref) < 1e-9
            assert abs(mt.rmssd(series.rr) - rm_ref) < 1e-9


class TestVitalsMae:
    def test_identical_pairs_zero(self):
        pairs = [mt.VitalsPair(60.0, 60.0, 20.0, 20.0)] * 3
        agg = mt.vitals_mae(pairs)
        assert agg["mae_hr_bpm"] == 0.0 and agg["mae_rmssd_ms"] == 0.0

    def test_hr_example(self):
        pairs = [mt.VitalsPair(hr_gt=60, hr_pred=62),
                 mt.VitalsPair(hr_gt=70, hr_pred=67)]
        assert mt.vitals_mae(pairs)["mae_hr_bpm"] == pytest.approx(2.5)

    def test_missing_side_excluded_and_counted(self):
        pairs = [mt.VitalsPair(60, 61, 20, 25),
                 mt.VitalsPair(60, 59, None, 30)]
        agg = mt.vitals_mae(pairs)
        assert agg["mae_rmssd_ms"] == pytest.approx(5.0)
        assert agg["n_rmssd"] == 1 and agg["n_missing_rmssd"] == 1

    def test_no_valid_pairs(self):
        agg = mt.vitals_mae([mt.VitalsPair()])
        assert agg["mae_hr_bpm"] is None and agg["mae_rmssd_ms"] is None
