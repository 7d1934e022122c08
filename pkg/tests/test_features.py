import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfgcn.features import audio, saliency as sal_mod
from mfgcn.features.emotion import EMOTIONS, EmotionRowError, load_emotion_features
from mfgcn.features.saliency import SaliencyPair, saliency_metrics
from mfgcn.features.wav import read_wav, write_wav
from oracles import mann_whitney_auc, mfcc_loops, naive_dft

SR = 16000


def sine(freq, n=4096, sr=SR, amp=1.0):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / sr)


def sparse_fixations(shape=(16, 16), points=((3, 3), (3, 11), (11, 6), (12, 13))):
    f = np.zeros(shape)
    for p in points:
        f[p] = 1.0
    return f


class TestFFT:
    @pytest.mark.parametrize("n", [1, 2, 8, 64])
    def test_matches_naive_dft(self, n):
        x = np.random.default_rng(n).normal(size=n)
        ref = naive_dft(x)
        got = audio.fft_radix2(x)
        assert np.max(np.abs(got - ref)) <= 1e-9 * max(np.max(np.abs(ref)), 1.0)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            audio.fft_radix2(np.zeros(12))


class TestSTFT:
    def test_zero_signal(self):
        assert np.all(audio.stft(np.zeros(2048)).magnitude == 0)

    def test_shape(self):
        s = audio.stft(np.zeros(2048), window=512, hop=256)
        assert s.frames.shape == (7, 257)

    def test_too_short(self):
        with pytest.raises(ValueError, match="shorter"):
            audio.stft(np.zeros(100))

    def test_bad_window_and_hop(self):
        with pytest.raises(ValueError):
            audio.stft(np.zeros(2048), window=500)
        with pytest.raises(ValueError):
            audio.stft(np.zeros(2048), window=512, hop=600)

    def test_bin_sine_vs_naive_dft(self):
        window = 256
        k = 12
        x = sine(k * SR / window, n=1024)
        s = audio.stft(x, SR, window, 128)
        frames = audio.frame_signal(x, window, 128) * audio.hann(window)
        for t in range(s.frames.shape[0]):
            ref = naive_dft(frames[t])[: window // 2 + 1]
            assert np.max(np.abs(s.frames[t] - ref)) <= 1e-9 * np.max(np.abs(ref))
            assert np.argmax(s.magnitude[t]) == k

    def test_parseval(self):
        window = 512
        x = np.random.default_rng(0).normal(size=4096)
        s = audio.stft(x, SR, window, 256)
        frames = audio.frame_signal(x, window, 256) * audio.hann(window)
        p = s.power
        freq_energy = (p[:, 0] + p[:, -1] + 2 * p[:, 1:-1].sum(axis=1)) / window
        time_energy = (frames ** 2).sum(axis=1)
        np.testing.assert_allclose(freq_energy, time_energy, rtol=1e-9)


class TestMel:
    def test_zero(self):
        assert np.all(audio.mel_spectrogram(audio.stft(np.zeros(2048)), 32) == 0)

    def test_impulse_spectrum_touches_two_bands(self):
        fb = audio.mel_filterbank(40, 512, SR)
        for b in (10, 50, 120, 200):
            assert 1 <= np.count_nonzero(fb[:, b]) <= 2

    def test_quadratic_scaling(self):
        x = np.random.default_rng(1).normal(size=2048)
        a = audio.mel_spectrogram(audio.stft(x), 32)
        b = audio.mel_spectrogram(audio.stft(3 * x), 32)
        np.testing.assert_allclose(b, 9 * a, rtol=1e-12)

    def test_htk_scale(self):
        assert audio.hz_to_mel(700.0) == pytest.approx(2595 * np.log10(2))
        np.testing.assert_allclose(audio.mel_to_hz(audio.hz_to_mel([0, 100, 4000])), [0, 100, 4000], atol=1e-9)


class TestChroma:
    def test_zero(self):
        assert np.all(audio.chroma(audio.stft(np.zeros(2048))) == 0)

    def test_a440(self):
        c = audio.chroma(audio.stft(sine(440.0, 8192), window=4096, hop=2048))
        assert np.all(np.argmax(c, axis=1) == audio.PITCH_CLASSES.index("A"))

    def test_octave_invariance(self):
        spec = lambda f: audio.stft(sine(f, 8192), window=4096, hop=2048)
        a = np.argmax(audio.chroma(spec(220.0)), axis=1)
        b = np.argmax(audio.chroma(spec(440.0)), axis=1)
        assert np.array_equal(a, b)

    def test_pitch_class_mapping(self):
        assert audio.pitch_class(440.0) == 9
        assert audio.pitch_class(261.63) == 0
        assert audio.pitch_class(880.0) == audio.pitch_class(110.0) == 9

    def test_below_cutoff_ignored(self):
        s = audio.stft(sine(20.0, 8192), window=4096, hop=2048)
        c = audio.chroma(s, fmin=30.0)
        assert np.all(c >= 0)
        assert c.sum() < audio.chroma(s, fmin=0.0).sum()


class TestMFCC:
    def test_constant_row(self):
        out = audio.mfcc(np.full((1, 26), 2.5), 13)[0]
        assert out[0] == pytest.approx(26 * np.log(2.5), abs=1e-10)
        assert np.max(np.abs(out[1:])) < 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_double_loop_oracle(self, seed):
        row = np.random.default_rng(seed).uniform(0, 5, 40)
        assert np.max(np.abs(audio.mfcc(row[None], 20)[0] - mfcc_loops(row, 20))) < 1e-12

    def test_floor_prevents_inf(self):
        out = audio.mfcc(np.zeros((2, 10)), 5)
        assert np.all(np.isfinite(out))

    def test_too_many_coeffs(self):
        with pytest.raises(ValueError):
            audio.mfcc(np.ones((1, 4)), 5)


class TestAudioFeatures:
    def test_columns(self):
        mat, names = audio.audio_features(sine(300.0, 4096), n_mels=16, n_mfcc=8)
        assert mat.shape[1] == len(names) == 12 + 16 + 8
        assert names[0] == "chroma_C" and names[12] == "mel_0" and names[-1] == "mfcc_7"

    def test_deterministic_and_nonnegative(self):
        x = np.random.default_rng(0).normal(size=4096)
        a, _ = audio.audio_features(x)
        b, _ = audio.audio_features(x)
        assert a.tobytes() == b.tobytes()
        assert np.all(a[:, :12 + 64] >= 0) and np.all(np.isfinite(a))

    def test_wav_roundtrip(self, tmp_path):
        x = 0.5 * sine(440.0, 1600)
        write_wav(tmp_path / "a.wav", x, 8000)
        y, sr = read_wav(tmp_path / "a.wav")
        assert sr == 8000
        np.testing.assert_allclose(y, x, atol=1 / 32767)
        z, sr2 = read_wav(tmp_path / "a.wav", 16000)
        assert sr2 == 16000 and len(z) == 3200


class TestSaliency:
    def test_self_comparison(self):
        fix = sparse_fixations()
        pair = SaliencyPair(fix, sal_mod.fixation_density(fix))
        m = saliency_metrics(pair)
        assert m["cc"] == pytest.approx(1.0, abs=1e-12)
        assert m["sim"] == pytest.approx(1.0, abs=1e-12)
        assert abs(m["kldiv"]) < 1e-9
        assert m["auc_judd"] == 1.0

    def test_perfect_ranking(self):
        fix = sparse_fixations()
        sal = np.where(fix > 0, 2.0, np.random.default_rng(0).uniform(0, 1, fix.shape))
        assert sal_mod.auc_judd(sal, fix) == 1.0

    def test_nss_oracle(self):
        rng = np.random.default_rng(3)
        fix = (rng.random((8, 8)) < 0.2).astype(float)
        fix[0, 0] = 1
        sal = rng.random((8, 8))
        z = (sal - sal.mean()) / np.sqrt(np.mean((sal - sal.mean()) ** 2))
        want = np.mean([z[i, j] for i in range(8) for j in range(8) if fix[i, j]])
        assert sal_mod.nss(sal, fix) == pytest.approx(want, abs=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_judd_equals_mann_whitney(self, seed):
        rng = np.random.default_rng(seed)
        fix = (rng.random((10, 10)) < 0.15).astype(float)
        fix[5, 5] = 1
        sal = rng.permutation(100).reshape(10, 10) / 100.0  # no ties
        want = mann_whitney_auc(sal[fix > 0], sal[fix == 0])
        assert sal_mod.auc_judd(sal, fix) == pytest.approx(want, abs=1e-12)

    def test_roc_area_ties_count_half(self):
        assert sal_mod.roc_area(np.array([1.0, 1.0]), np.array([1.0])) == pytest.approx(0.5)

    def test_missing_auxiliary(self):
        fix = sparse_fixations()
        m = saliency_metrics(SaliencyPair(fix, np.ones_like(fix) + fix))
        assert m["missing"] == ["auc_shuffled", "info_gain"]
        assert m["auc_shuffled"] is None and m["info_gain"] is None
        v = sal_mod.metric_vector(m)
        assert v.shape == (8,) and v[6] == 0 and v[7] == 0

    def test_all_eight(self):
        rng = np.random.default_rng(5)
        fix = sparse_fixations()
        other = sparse_fixations(points=((1, 1), (8, 8), (14, 2)))
        m = saliency_metrics(SaliencyPair(fix, rng.random(fix.shape)), [other], rng.random(fix.shape) + 0.1)
        assert m["missing"] == []
        assert list(k for k in m if k != "missing") == list(sal_mod.METRIC_NAMES)

    def test_seeded_auc_reproducible(self):
        rng = np.random.default_rng(1)
        fix, sal = sparse_fixations(), rng.random((16, 16))
        assert sal_mod.auc_borji(sal, fix, seed=4) == sal_mod.auc_borji(sal, fix, seed=4)

    @pytest.mark.parametrize("bad", ["shape", "nonbinary", "empty_fix", "negative", "zero_sal"])
    def test_pair_validation(self, bad):
        fix, sal = sparse_fixations(), np.ones((16, 16))
        if bad == "shape":
            sal = np.ones((4, 4))
        elif bad == "nonbinary":
            fix = fix * 0.5
        elif bad == "empty_fix":
            fix = np.zeros((16, 16))
        elif bad == "negative":
            sal = -sal
        else:
            sal = np.zeros((16, 16))
        with pytest.raises(ValueError):
            SaliencyPair(fix, sal)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (6, 6), elements=st.floats(0, 10, allow_nan=False)),
           arrays(np.bool_, (6, 6)), st.integers(0, 1000))
    def test_metric_ranges(self, sal, fixb, seed):
        fixb[seed % 6, (seed // 6) % 6] = True
        fixb[(seed + 3) % 6, 0] = False
        sal = sal + 1e-3
        fix = fixb.astype(float)
        m = saliency_metrics(SaliencyPair(fix, sal), [np.roll(fix, 2, axis=1)], np.ones((6, 6)), n_splits=5, seed=seed)
        for k in ("auc_borji", "auc_judd", "auc_shuffled"):
            assert m[k] is None or np.isnan(m[k]) or 0 <= m[k] <= 1
        assert -1 - 1e-12 <= m["cc"] <= 1 + 1e-12
        assert 0 <= m["sim"] <= 1 + 1e-12
        # q + eps in the log lets KL dip below zero by at most log(1 + N eps)
        assert m["kldiv"] >= -np.log1p(36 * sal_mod.EPS)


class TestEmotion:
    def test_zeros_accepted(self):
        assert load_emotion_features([[0.0] * 7]).shape == (1, 7)

    def test_out_of_range(self):
        with pytest.raises(EmotionRowError) as e:
            load_emotion_features([[0.1] * 7, [0.0, 0.0, 1.2, 0, 0, 0, 0]])
        assert e.value.row == 1
        assert "fear" in str(e.value)

    def test_arity(self):
        with pytest.raises(EmotionRowError, match="row 0"):
            load_emotion_features([[0.1] * 6])

    def test_no_depression_means(self):
        row = [0.031, 0.000, 0.039, 0.080, 0.055, 0.018, 0.777]
        out = load_emotion_features([row])
        assert EMOTIONS[int(np.argmax(out[0]))] == "neutral"
