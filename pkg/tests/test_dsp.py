import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gsep.dsp import (
    STD_FLOOR,
    ComplexSpectrogram,
    NormStats,
    StftConfig,
    Waveform,
    compress_magnitude,
    denormalize,
    fit_norm_stats,
    istft,
    n_frames_for,
    normalize,
    stft,
)
from gsep.errors import GsepError

CFG = StftConfig()
finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


def direct_dft(frame):
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    m = np.arange(n)[None, :]
    return (frame[None, :] * np.exp(-2j * np.pi * k * m / n)).sum(axis=1)


def hamming_periodic(n):
    return np.array([0.54 - 0.46 * np.cos(2 * np.pi * i / n) for i in range(n)])


def test_defaults_match_8k_framing():
    assert (CFG.window_len, CFG.hop, CFG.fft_size, CFG.n_bins) == (256, 128, 256, 129)


def test_silence_gives_zero_spectrogram():
    spec = stft(Waveform(np.zeros(8000), 8000))
    assert spec.frames.shape[1] == 129
    assert np.all(spec.frames == 0)


@pytest.mark.parametrize("n", [1, 7, 255, 256, 257, 4000, 12345])
def test_bin_count_independent_of_length(n, rng):
    spec = stft(rng.standard_normal(n))
    assert spec.frames.shape == (n_frames_for(n, CFG), 129)
    assert spec.original_len == n


@pytest.mark.parametrize("n", [100, 128, 129, 8000, 8001])
def test_frame_count_formula(n):
    # reflect W/2 on both sides plus tail zero-fill up to a hop multiple
    pad = CFG.window_len + (-n) % CFG.hop
    expected = 1 + (n + pad - CFG.window_len) // CFG.hop
    assert stft(np.ones(n)).n_frames == expected


@pytest.mark.parametrize("k", [5, 16, 40])
def test_bin_centred_sinusoid_matches_direct_dft(k):
    sr = 8000
    f = k * sr / 256
    x = np.sin(2 * np.pi * f * np.arange(sr) / sr)
    spec = stft(Waveform(x, sr))
    win = hamming_periodic(256)
    for n in (10, 20, 40):
        # interior frame n covers original samples [n*hop - W/2, n*hop + W/2)
        frame = x[n * 128 - 128 : n * 128 + 128] * win
        oracle = direct_dft(frame)
        np.testing.assert_allclose(spec.frames[n], oracle, atol=1e-9)
        mag = np.abs(spec.frames[n])
        assert np.argmax(mag) == k
        # Hamming leakage stays within the main lobe (+-1 bin for a bin-centred tone)
        assert mag[[k - 1, k + 1]].max() < mag[k]
        far = np.delete(mag, [k - 1, k, k + 1])
        assert far.max() < 0.01 * mag[k]


def test_stft_rejects_empty_and_nonfinite():
    with pytest.raises(GsepError, match="empty input"):
        stft(np.array([]))
    with pytest.raises(GsepError, match="invalid sample"):
        stft(np.array([0.0, np.nan, 1.0]))
    with pytest.raises(GsepError, match="invalid sample"):
        Waveform(np.array([np.inf]))


def test_istft_roundtrip_random(rng):
    x = rng.uniform(-1, 1, 12000)
    y = istft(stft(Waveform(x))).samples
    assert y.shape == x.shape
    assert np.max(np.abs(y - x)) <= 1e-6


def test_istft_zero_spectrogram():
    spec = stft(np.zeros(5000))
    out = istft(ComplexSpectrogram(np.zeros_like(spec.frames), CFG, 5000))
    assert len(out) == 5000 and np.all(out.samples == 0)


def test_istft_roundtrip_sinusoid():
    x = 0.7 * np.sin(2 * np.pi * 440 * np.arange(12000) / 8000)
    y = istft(stft(x)).samples
    assert np.linalg.norm(y - x) / np.linalg.norm(x) <= 1e-6


def test_istft_rejects_inconsistent_shape():
    spec = stft(np.ones(1000))
    bad = ComplexSpectrogram(spec.frames[:-1], CFG, 1000)
    with pytest.raises(GsepError):
        istft(bad)
    with pytest.raises(GsepError):
        ComplexSpectrogram(np.zeros((3, 100)), CFG, 10)


@pytest.mark.parametrize("cfg", [StftConfig(256, 64, 256), StftConfig(200, 100, 256, "hann"), StftConfig(128, 64, 512)])
def test_roundtrip_other_configs(cfg, rng):
    x = rng.standard_normal(3001)
    assert np.max(np.abs(istft(stft(x, cfg)).samples - x)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(1, 3000), elements=finite))
def test_roundtrip_property(x):
    assert np.max(np.abs(istft(stft(x)).samples - x)) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, 700, elements=finite),
    arrays(np.float64, 700, elements=finite),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_stft_linearity(w1, w2, a, b):
    lhs = stft(a * w1 + b * w2).frames
    rhs = a * stft(w1).frames + b * stft(w2).frames
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_parseval_per_frame(rng):
    x = rng.standard_normal(4000)
    spec = stft(x).frames
    win = hamming_periodic(256)
    for n in range(2, 28, 5):
        frame = x[n * 128 - 128 : n * 128 + 128] * win
        X = spec[n]
        # one-sided unnormalized rfft: interior bins count twice
        energy = (abs(X[0]) ** 2 + 2 * np.sum(np.abs(X[1:-1]) ** 2) + abs(X[-1]) ** 2) / 256
        assert energy == pytest.approx(np.sum(frame**2), rel=1e-10)


def _bisect_cbrt(v, lo=0.0, hi=10.0):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid**3 < v:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_compress_magnitude_values():
    frames = np.array([[8.0, 0.0, 2.0, -8.0, 8j]])
    out = compress_magnitude(frames)
    assert out[0, 0] == pytest.approx(2.0, abs=1e-12)
    assert out[0, 1] == 0.0
    assert out[0, 2] == pytest.approx(_bisect_cbrt(2.0), abs=1e-9)
    assert out[0, 2] == pytest.approx(1.25992104989, abs=1e-9)
    assert out[0, 3] == pytest.approx(2.0) and out[0, 4] == pytest.approx(2.0)


@given(st.lists(st.floats(0, 1e6), min_size=2, max_size=50))
def test_compress_monotone(values):
    mags = np.sort(np.array(values))
    out = compress_magnitude(mags.astype(complex))
    assert np.all(np.diff(out) >= 0)
    assert np.all(out >= 0)


def test_fit_norm_stats_constant_floors_std():
    stats = fit_norm_stats([np.full((10, 4), 3.0)])
    np.testing.assert_array_equal(stats.mean, 3.0)
    np.testing.assert_array_equal(stats.std, STD_FLOOR)


def test_fit_norm_stats_population_convention():
    stats = fit_norm_stats([np.array([[1.0, 1.0]]), np.array([[3.0, 3.0]])])
    np.testing.assert_allclose(stats.mean, 2.0)
    np.testing.assert_allclose(stats.std, 1.0)


def test_fit_norm_stats_empty():
    with pytest.raises(GsepError):
        fit_norm_stats([])
    with pytest.raises(GsepError):
        fit_norm_stats([np.zeros((0, 129))])


def test_normalization_is_standardizing(rng):
    mats = [rng.gamma(2.0, 1.5, size=(rng.integers(20, 60), 129)) for _ in range(5)]
    stats = fit_norm_stats(mats)
    normed = np.concatenate([normalize(m, stats).frames for m in mats])
    np.testing.assert_allclose(normed.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(normed.var(axis=0), 1.0, atol=1e-6)


def test_normalize_examples():
    stats = NormStats(np.array([2.0, 2.0]), np.array([1.5, 1.5]))
    np.testing.assert_allclose(normalize(np.array([[2.0, 3.5]]), stats).frames, [[0.0, 1.0]])
    assert normalize(np.array([[5.0, 5.0]]), stats).frames[0, 0] == pytest.approx(2.0)
    with pytest.raises(GsepError):
        normalize(np.zeros((3, 5)), stats)


@given(arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3)))
def test_denormalize_inverts(x):
    stats = NormStats(np.array([0.5, -2.0, 10.0]), np.array([0.1, 3.0, 7.5]))
    back = denormalize(normalize(x, stats), stats)
    np.testing.assert_allclose(back, x, atol=1e-9)


def test_stft_config_validation():
    with pytest.raises(GsepError):
        StftConfig(window_len=128, hop=256)
    with pytest.raises(GsepError):
        StftConfig(window_len=512, hop=128, fft_size=256)
    with pytest.raises(GsepError):
        StftConfig(window_kind="kaiser")
