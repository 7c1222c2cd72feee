import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gsep.dsp import ComplexSpectrogram, StftConfig, Waveform, stft
from gsep.errors import GsepError
from gsep.masking import MaskSequence, apply_mask_resynth, psm

CFG = StftConfig()


def _spec(frames):
    frames = np.asarray(frames, dtype=complex)
    return ComplexSpectrogram(frames, StftConfig(4, 2, 4), 2 * (frames.shape[0] - 1))


def _psm_by_angles(S, Y):
    # textbook form, evaluated with explicit phases
    out = np.abs(S) * np.cos(np.angle(Y) - np.angle(S)) / np.abs(Y)
    return out


def test_half_target_single_bin():
    # s_t = 1, s_i = 1 (in phase) -> Y = 2, mask 0.5
    m = psm(_spec([[1.0, 0, 0]]), _spec([[2.0, 1e-12, 1.0]]))
    assert m.kind == "psm_target"
    assert m.frames[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert m.frames[0, 1] == 0.0
    assert m.frames[0, 2] == 0.0


def test_quadrature_interference_single_bin():
    # S_t = 1, S_i = j: Y = 1 + j, |S| cos(pi/4) / sqrt(2) = 0.5
    m = psm(_spec([[1.0, 0.0, 0.0]]), _spec([[1 + 1j, 1j, 0.0]]))
    assert abs(m.frames[0, 0] - 0.5) <= 1e-12
    assert m.frames[0, 1] == 0.0


def test_target_equals_mixture_gives_one():
    Y = np.array([[1 + 1j, -2.0, 0.3j]])
    np.testing.assert_allclose(psm(_spec(Y), _spec(Y)).frames, 1.0, atol=1e-12)


def test_clamping_bounds():
    # opposing phase -> negative raw value; larger target -> above one
    S = np.array([[-1.0, 3.0, 1j]])
    Y = np.array([[1.0, 1.0, 1.0]])
    raw = psm(_spec(S), _spec(Y), clamp=False).frames
    np.testing.assert_allclose(raw, [[-1.0, 3.0, 0.0]], atol=1e-12)
    np.testing.assert_allclose(psm(_spec(S), _spec(Y)).frames, [[0.0, 1.0, 0.0]], atol=1e-12)


@settings(max_examples=50)
@given(
    arrays(np.float64, (5, 3, 2), elements=st.floats(-10, 10)),
    arrays(np.float64, (5, 3, 2), elements=st.floats(-10, 10)),
)
def test_psm_matches_angle_form(s, y):
    S = s[..., 0] + 1j * s[..., 1]
    Y = y[..., 0] + 1j * y[..., 1]
    out = psm(_spec(S), _spec(Y), clamp=False).frames
    live = np.abs(Y) >= 1e-8
    with np.errstate(all="ignore"):
        oracle = _psm_by_angles(S, Y)
    np.testing.assert_allclose(out[live], oracle[live], atol=1e-9, rtol=1e-9)
    assert np.all(out[~live] == 0)
    clamped = psm(_spec(S), _spec(Y)).frames
    assert np.all(np.isfinite(clamped))
    assert clamped.min() >= 0 and clamped.max() <= 1


def test_psm_shape_mismatch():
    with pytest.raises(GsepError):
        psm(_spec(np.ones((3, 3))), _spec(np.ones((4, 3))))


def test_resynth_identity_and_zero(rng):
    x = rng.uniform(-0.5, 0.5, 6000)
    Y = stft(Waveform(x))
    out = apply_mask_resynth(np.ones(Y.frames.shape), Y)
    assert np.max(np.abs(out.samples - x)) <= 1e-6
    zero = apply_mask_resynth(MaskSequence(np.zeros(Y.frames.shape)), Y)
    assert np.all(np.abs(zero.samples) <= 1e-12)
    assert len(zero) == len(x)


def test_resynth_linear_in_mask(rng):
    Y = stft(rng.standard_normal(3000))
    m1 = rng.uniform(0, 1, Y.frames.shape)
    m2 = rng.uniform(0, 1, Y.frames.shape)
    a, b = 0.3, 1.7
    lhs = apply_mask_resynth(a * m1 + b * m2, Y).samples
    rhs = a * apply_mask_resynth(m1, Y).samples + b * apply_mask_resynth(m2, Y).samples
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_resynth_shape_check():
    Y = stft(np.ones(1000))
    with pytest.raises(GsepError):
        apply_mask_resynth(np.ones((2, 129)), Y)


def test_oracle_mask_beats_mixture(rng):
    # harmonic "target" plus broadband noise: the oracle PSM must help
    n = 16000
    t = np.arange(n) / 8000
    s = 0.3 * sum(np.sin(2 * np.pi * 150 * k * t) / k for k in range(1, 15))
    noise = 0.2 * rng.standard_normal(n)
    y = s + noise
    Y, S = stft(y), stft(s)
    est = apply_mask_resynth(psm(S, Y), Y).samples
    err_mix = np.sum((y - s) ** 2)
    err_est = np.sum((est - s) ** 2)
    assert 10 * np.log10(err_mix / err_est) > 6.0
