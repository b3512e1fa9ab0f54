"""Spectral-path tests: window formula, frame geometry, the naive-DFT
oracle, loss properties and gradients."""

import numpy as np
import pytest

from liftecg import autodiff as ad
from liftecg import stft as sp


def naive_spectrogram(x, width, hop, window):
    """Direct-summation DFT oracle, independent of the production path."""
    x = np.asarray(x, dtype=np.float64)
    nf = (len(x) - width) // hop + 1
    bins = width // 2 + 1
    out = np.zeros((nf, bins), dtype=complex)
    for t in range(nf):
        for k in range(bins):
            acc = 0.0 + 0.0j
            for n in range(width):
                acc += (x[t * hop + n] * window[n]
                        * np.exp(-2j * np.pi * k * n / width))
            out[t, k] = acc
    return out


class TestHanning:
    def test_w4_values(self):
        np.testing.assert_allclose(sp.hanning(4), [0.0, 0.75, 0.75, 0.0],
                                   atol=1e-12)

    @pytest.mark.parametrize("w", [2, 5, 16, 101, 800])
    def test_endpoints_zero_and_symmetry(self, w):
        win = sp.hanning(w)
        assert win[0] == 0.0 and win[-1] == 0.0
        np.testing.assert_allclose(win, win[::-1], atol=1e-12)

    @pytest.mark.parametrize("w", [5, 33, 201])
    def test_odd_window_peaks_at_one(self, w):
        assert sp.hanning(w).max() == 1.0

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            sp.hanning(1)


class TestStft:
    def test_zero_signal(self):
        spec = sp.stft_complex(np.zeros(256), 64, 16)
        assert np.all(spec == 0)

    def test_pure_tone_concentrates(self):
        # on-grid cosine with a rectangular window: all energy in bin k0
        width, k0 = 64, 7
        x = np.cos(2 * np.pi * k0 * np.arange(width) / width)
        spec = sp.stft_complex(x, width, width, window=np.ones(width))
        mags = np.abs(spec[0])
        assert mags.argmax() == k0
        others = np.delete(mags, k0)
        assert others.max() < 1e-6

    def test_frame_counts(self):
        assert sp.frame_count(1024, 800, 200) == 2
        assert sp.frame_count(1024, 400, 100) == 7
        assert sp.frame_count(1024, 200, 50) == 17
        cfg = sp.LossConfig()
        for w in cfg.windows:
            hop = cfg.hop(w)
            r, _ = sp.stft(ad.Tensor(np.zeros(1024, np.float32)), w, hop)
            assert r.data.shape[0] == (1024 - w) // hop + 1

    def test_window_longer_than_signal_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            sp.stft(ad.Tensor(np.zeros(100, np.float32)), 128, 32)

    def test_matches_naive_dft_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=200)
        width, hop = 32, 8
        win = sp.hanning(width)
        spec = sp.stft_complex(x, width, hop, win)
        oracle = naive_spectrogram(x, width, hop, win)
        assert np.abs(spec - oracle).max() < 1e-5

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=300), rng.normal(size=300)
        a, b = 0.6, -2.3
        lhs = sp.stft_complex(a * x + b * y, 64, 16)
        rhs = a * sp.stft_complex(x, 64, 16) + b * sp.stft_complex(y, 64, 16)
        assert np.abs(lhs - rhs).max() < 1e-6

    def test_invocation_counter(self):
        sp.reset_stft_counter()
        sp.stft(ad.Tensor(np.zeros(128, np.float32)), 32, 8)
        sp.stft(ad.Tensor(np.zeros(128, np.float32)), 32, 8)
        assert sp.stft_invocation_count() == 2


class TestLossConfig:
    def test_defaults(self):
        cfg = sp.LossConfig()
        assert cfg.windows == (800, 400, 200)
        assert cfg.alpha == 0.1
        assert [cfg.hop(w) for w in cfg.windows] == [200, 100, 50]

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            sp.LossConfig(alpha=-1.0)
        with pytest.raises(ValueError):
            sp.LossConfig(windows=(801, 400, 200))
        with pytest.raises(ValueError):
            sp.LossConfig(variant="nonsense")


class TestMrStftLoss:
    CFG = sp.LossConfig(windows=(64, 32, 16))

    def test_zero_on_equal(self):
        x = np.random.default_rng(2).normal(size=200).astype(np.float32)
        loss = sp.mr_stft_loss(ad.Tensor(x), x, self.CFG)
        assert float(loss.data) == 0.0

    def test_nonnegative_and_zero_iff_equal_spectra(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=200).astype(np.float32)
        y = x.copy()
        y[50] += 0.5
        loss = sp.mr_stft_loss(ad.Tensor(x), y, self.CFG)
        assert float(loss.data) > 0.0

    def test_constant_offset_matches_bruteforce(self):
        # brute-force oracle: rebuild each spectrogram difference directly
        rng = np.random.default_rng(4)
        x = rng.normal(size=200)
        c = 0.37
        pred = (x + c).astype(np.float64)
        loss = sp.mr_stft_loss(ad.Tensor(pred), x, self.CFG)
        expected = 0.0
        for w in self.CFG.windows:
            hop = self.CFG.hop(w)
            win = sp.hanning(w)
            sp_p = naive_spectrogram(pred, w, hop, win)
            sp_t = naive_spectrogram(x, w, hop, win)
            d = sp_p - sp_t
            expected += np.abs(d.real).mean() + np.abs(d.imag).mean()
        expected /= 3.0
        np.testing.assert_allclose(float(loss.data), expected, rtol=1e-5)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            sp.mr_stft_loss(ad.Tensor(np.zeros(128, np.float32)),
                            np.zeros(100, np.float32), self.CFG)

    @pytest.mark.parametrize("variant", ["complex", "magnitude"])
    def test_gradient_matches_finite_differences(self, variant):
        cfg = sp.LossConfig(windows=(64, 32, 16), variant=variant)
        rng = np.random.default_rng(5)
        tgt = rng.normal(size=150)

        def build(ts):
            return sp.mr_stft_loss(ts["p"], tgt, cfg)

        err = ad.check_gradients(build, {"p": rng.normal(size=150)}, eps=1e-6)
        assert err < 1e-4

    def test_target_carries_no_gradient(self):
        rng = np.random.default_rng(6)
        tgt = ad.Tensor(rng.normal(size=100).astype(np.float32),
                        requires_grad=True)
        pred = ad.Tensor(rng.normal(size=100).astype(np.float32),
                         requires_grad=True)
        sp.mr_stft_loss(pred, tgt, self.CFG).backward()
        assert pred.grad is not None
        assert tgt.grad is None


class TestSpectrogramExport:
    def test_set_shapes_and_magnitude_file(self, tmp_path):
        cfg = sp.LossConfig(windows=(64, 32, 16))
        x = np.random.default_rng(7).normal(size=256)
        ss = sp.spectrogram_set(x, cfg)
        for w, h, spec in zip(ss.windows, ss.hops, ss.specs):
            assert spec.shape == ((256 - w) // h + 1, w // 2 + 1)
        path = tmp_path / "mag.txt"
        sp.save_magnitude_matrix(path, ss.specs[0])
        loaded = np.loadtxt(path, delimiter="\t")
        np.testing.assert_allclose(loaded, np.abs(ss.specs[0]), rtol=1e-6)
