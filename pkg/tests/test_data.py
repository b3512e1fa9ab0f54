"""Ingestion tests: resampling against analytic oracles, segmentation
bookkeeping, normalization, the synthetic generator and manifest loading."""

import json

import numpy as np
import pytest
from scipy.signal import butter, filtfilt

from liftecg import data as dp


class TestResample:
    def test_identity_when_rates_match(self):
        x = np.random.default_rng(0).normal(size=500)
        np.testing.assert_array_equal(dp.resample(x, 200, 200), x)

    def test_output_length(self):
        x = np.zeros(10000)
        assert dp.resample(x, 1000, 200).size == 2000
        assert dp.resample(np.zeros(777), 1000, 200).size == round(777 * 0.2)

    def test_sine_survives_downsampling(self):
        # analytic oracle; the first/last few samples carry the residual
        # filter transient of any finite windowed-sinc kernel, so the
        # contract is checked on the interior
        x = np.sin(2 * np.pi * 5 * np.arange(10000) / 1000)
        y = dp.resample(x, 1000, 200)
        truth = np.sin(2 * np.pi * 5 * np.arange(2000) / 200)
        guard = 25
        assert np.abs(y - truth)[guard:-guard].max() < 0.01
        assert np.abs(y - truth).max() < 0.05

    def test_upsampling_sine(self):
        x = np.sin(2 * np.pi * 3 * np.arange(2000) / 200)
        y = dp.resample(x, 200, 1000)
        truth = np.sin(2 * np.pi * 3 * np.arange(10000) / 1000)
        guard = 125
        assert np.abs(y - truth)[guard:-guard].max() < 0.01

    def test_round_trip_band_limited(self):
        # 200 -> 1000 -> 200 Hz on a tapered band-limited signal
        rng = np.random.default_rng(7)
        n = 2000
        sig = np.zeros(n)
        for f in (0.3, 1.1, 4.7, 9.3, 20.1):
            sig += rng.normal() * np.sin(2 * np.pi * f * np.arange(n) / 200
                                         + rng.uniform(0, 6))
        sig *= np.hanning(n)
        back = dp.resample(dp.resample(sig, 200, 1000), 1000, 200)
        rel = np.sqrt(np.mean((back - sig) ** 2) / np.mean(sig ** 2))
        assert rel < 0.01

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError, match="positive"):
            dp.resample(np.zeros(10), 0, 200)
        with pytest.raises(ValueError, match="non-finite"):
            dp.resample(np.array([1.0, np.nan]), 100, 200)


class TestNormalize:
    def test_basic_range(self):
        np.testing.assert_allclose(dp.normalize_chunk(np.array([0.0, 5.0, 10.0])),
                                   [-1.0, 0.0, 1.0])

    def test_constant_maps_to_zeros(self):
        np.testing.assert_array_equal(dp.normalize_chunk(np.full(8, 3.7)),
                                      np.zeros(8))

    def test_extremes_hit_exactly(self):
        x = np.random.default_rng(1).normal(size=100)
        y = dp.normalize_chunk(x)
        assert y.min() == -1.0 and y.max() == 1.0

    def test_idempotent_on_normalized(self):
        x = dp.normalize_chunk(np.random.default_rng(2).normal(size=64))
        np.testing.assert_allclose(dp.normalize_chunk(x), x, atol=1e-6)


class TestSegment:
    def _rec(self, n, seed=0):
        rng = np.random.default_rng(seed)
        return dp.Recording(radar=rng.normal(size=n), radar_hz=200,
                            ecg=rng.normal(size=n), ecg_hz=200, subject="s")

    def test_counts_and_tail_drop(self):
        chunks = dp.segment(self._rec(3000))
        assert len(chunks) == 2          # 3000 // 1024; 952 samples dropped

    def test_exact_single_chunk(self):
        assert len(dp.segment(self._rec(1024))) == 1

    def test_chunks_disjoint_and_ordered(self):
        chunks = dp.segment(self._rec(5000))
        offsets = [c.offset for c in chunks]
        assert offsets == sorted(offsets)
        assert all(b - a == 1024 for a, b in zip(offsets, offsets[1:]))

    def test_short_recording_warns_empty(self):
        with pytest.warns(UserWarning, match="shorter than one chunk"):
            assert dp.segment(self._rec(500)) == []

    def test_offsets_reconstruct_source(self):
        rec = self._rec(4096)
        for c in dp.segment(rec):
            np.testing.assert_allclose(
                c.radar, dp.normalize_chunk(rec.radar[c.offset:c.offset + 1024]))

    def test_wrong_rate_rejected(self):
        rec = dp.Recording(radar=np.zeros(2048), radar_hz=100)
        with pytest.raises(ValueError, match="resample"):
            dp.segment(rec)


class TestSynthesize:
    def test_fixed_hr_beat_spacing(self):
        rec = dp.synthesize_pair(dp.SynthParams(heart_rate_bpm=60, seed=1), 30.0)
        rr = np.diff(rec.r_peak_times)
        np.testing.assert_allclose(rr, 1.0, atol=1e-9)
        d = np.diff(rr)
        assert np.sqrt(np.mean(d * d)) * 1000 < 1e-6   # RMSSD ~ 0 ms

    def test_same_seed_bitwise_identical(self):
        a = dp.synthesize_pair(dp.SynthParams(seed=5, noise_std=0.05), 10.0)
        b = dp.synthesize_pair(dp.SynthParams(seed=5, noise_std=0.05), 10.0)
        assert np.array_equal(a.radar, b.radar)
        assert np.array_equal(a.ecg, b.ecg)
        assert np.array_equal(a.r_peak_times, b.r_peak_times)

    def test_expected_beat_count(self):
        rec = dp.synthesize_pair(dp.SynthParams(heart_rate_bpm=72, seed=2), 60.0)
        # simple threshold oracle on the clean ECG
        ecg = rec.ecg
        above = ecg > 0.5
        crossings = int(np.sum(~above[:-1] & above[1:]))
        assert abs(crossings - 72) <= 1
        assert abs(len(rec.r_peak_times) - 72) <= 1

    def test_param_bounds(self):
        with pytest.raises(ValueError, match="heart rate"):
            dp.SynthParams(heart_rate_bpm=300)
        with pytest.raises(ValueError, match="respiration"):
            dp.SynthParams(resp_rate_bpm=2)

    def test_components_recoverable_by_bandpass(self):
        # noise-free: low-pass recovers respiration, band-pass the cardiac
        # pulse train; 2 s guards skip the zero-phase filter transients
        p = dp.SynthParams(heart_rate_bpm=60, resp_rate_bpm=15, seed=3)
        parts = dp._synth_components(p, 40.0)
        radar = parts["cardiac"] + parts["respiration"]
        b, a = butter(4, 0.7, btype="low", fs=200)
        resp_est = filtfilt(b, a, radar)
        b2, a2 = butter(4, [0.7, 30], btype="band", fs=200)
        card_est = filtfilt(b2, a2, radar)
        g = 400

        def rel(est, true):
            return np.sqrt(np.mean((est[g:-g] - true[g:-g]) ** 2)
                           / np.mean(true[g:-g] ** 2))

        assert rel(resp_est, parts["respiration"]) < 0.05
        assert rel(card_est, parts["cardiac"]) < 0.05

    def test_too_short_duration_rejected(self):
        with pytest.raises(ValueError, match="below one chunk"):
            dp.synthesize_pair(dp.SynthParams(), 2.0)


class TestSignalFiles:
    def test_csv_round_trip(self, tmp_path):
        x = np.random.default_rng(3).normal(size=200)
        dp.save_signal(tmp_path / "a.csv", x, 200, "csv")
        back = dp.load_signal(tmp_path / "a.csv", "csv", expected_hz=200)
        np.testing.assert_allclose(back, x, atol=1e-7)

    def test_f32_round_trip(self, tmp_path):
        x = np.random.default_rng(4).normal(size=200)
        dp.save_signal(tmp_path / "a.f32", x, 200, "f32")
        back = dp.load_signal(tmp_path / "a.f32", "f32")
        np.testing.assert_allclose(back, x, atol=1e-6)

    def test_rate_mismatch_detected(self, tmp_path):
        dp.save_signal(tmp_path / "a.csv", np.zeros(100), 100, "csv")
        with pytest.raises(ValueError, match="rate mismatch"):
            dp.load_signal(tmp_path / "a.csv", "csv", expected_hz=200)

    def test_missing_file_named(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.csv"):
            dp.load_signal(tmp_path / "nope.csv", "csv")


class TestLoadDataset:
    def _write_pair(self, out, seconds, rate=200.0, name="rec0", fmt="csv"):
        p = dp.SynthParams(heart_rate_bpm=66, seed=8)
        rec = dp.synthesize_pair(p, seconds)
        radar, ecg = rec.radar, rec.ecg
        if rate != 200.0:
            radar = dp.resample(radar, 200.0, rate)
            ecg = dp.resample(ecg, 200.0, rate)
        dp.save_signal(out / f"{name}_radar.{fmt}", radar, rate, fmt)
        dp.save_signal(out / f"{name}_ecg.{fmt}", ecg, rate, fmt)
        return {"radar_path": f"{name}_radar.{fmt}", "ecg_path": f"{name}_ecg.{fmt}",
                "rate_hz": rate, "subject": name, "split": "train", "format": fmt}

    def test_two_chunks_from_10s(self, tmp_path):
        entry = self._write_pair(tmp_path, 10.24)
        dp.write_manifest(tmp_path / "manifest.json", [entry])
        chunks = dp.load_dataset(tmp_path / "manifest.json")
        assert len(chunks) == 2
        assert all(c.radar.size == 1024 for c in chunks)
        assert all(np.abs(c.radar).max() <= 1.0 for c in chunks)

    def test_resamples_other_rates(self, tmp_path):
        entry = self._write_pair(tmp_path, 10.24, rate=1000.0)
        dp.write_manifest(tmp_path / "manifest.json", [entry])
        chunks = dp.load_dataset(tmp_path / "manifest.json")
        assert len(chunks) == 2

    def test_empty_manifest_warns(self, tmp_path):
        dp.write_manifest(tmp_path / "manifest.json", [])
        with pytest.warns(UserWarning, match="empty"):
            assert dp.load_dataset(tmp_path / "manifest.json") == []

    def test_missing_file_error_names_entry(self, tmp_path):
        dp.write_manifest(tmp_path / "manifest.json",
                          [{"radar_path": "ghost.csv", "rate_hz": 200}])
        with pytest.raises(FileNotFoundError, match="ghost.csv"):
            dp.load_dataset(tmp_path / "manifest.json")

    def test_corrupt_entry_error_names_path(self, tmp_path):
        (tmp_path / "bad.csv").write_text("not,a\nnumber,either\n")
        dp.write_manifest(tmp_path / "manifest.json",
                          [{"radar_path": "bad.csv", "rate_hz": 200}])
        with pytest.raises(ValueError, match="bad.csv"):
            dp.load_dataset(tmp_path / "manifest.json")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="manifest"):
            dp.load_dataset(tmp_path / "none.json")

    def test_f32_format(self, tmp_path):
        entry = self._write_pair(tmp_path, 10.24, fmt="f32")
        dp.write_manifest(tmp_path / "manifest.json", [entry])
        assert len(dp.load_dataset(tmp_path / "manifest.json")) == 2
