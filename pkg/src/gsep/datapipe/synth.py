"""Harmonic speech surrogates for desk-scale experiments.

A synthetic speaker is an f0 range plus a vocal-tract formant pattern. Each
utterance is a run of voiced "syllables" (a harmonic series whose partials
are weighted by the formant envelope) separated by short pauses. Speaker
identity therefore lives in pitch and spectral envelope, the same cues a
recurrent model would pick up from a real enrollment utterance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace, field

import numpy as np

from gsep.dsp import Waveform
from gsep.errors import GsepError

PEAK = 0.5


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    gender: str
    f0_range: tuple[float, float]
    formants: tuple[tuple[float, float], ...] = ((500.0, 90.0), (1500.0, 120.0), (2500.0, 180.0))
    jitter: float = 0.02
    vibrato_rate: float = 5.0
    vibrato_depth: float = 0.01
    tilt_db_per_octave: float = -6.0
    breathiness: float = 0.02
    vowel_spread: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "f0_range", tuple(float(v) for v in self.f0_range))
        object.__setattr__(self, "formants", tuple((float(f), float(b)) for f, b in self.formants))
        lo, hi = self.f0_range
        if not 50.0 < lo <= hi < 400.0:
            raise GsepError(f"{self.speaker_id}: f0 range {self.f0_range} outside (50, 400) Hz")
        if self.gender not in ("F", "M"):
            raise GsepError(f"{self.speaker_id}: gender must be F or M, got {self.gender!r}")
        if not self.formants or any(b <= 0 or f <= 0 for f, b in self.formants):
            raise GsepError(f"{self.speaker_id}: formants need positive frequencies and bandwidths")

    def validate_for_rate(self, sample_rate: int) -> None:
        nyq = sample_rate / 2
        if any(f >= nyq for f, _ in self.formants):
            raise GsepError(f"{self.speaker_id}: formant above Nyquist ({nyq} Hz)")

    def perturbed(self, pitch: float, tract: float, sample_rate: int = 8000) -> "SpeakerProfile":
        """Same voice with f0 scaled by ``pitch`` and formants by ``tract``."""
        if pitch == 1.0 and tract == 1.0:
            return self
        lo, hi = (min(max(f * pitch, 51.0), 399.0) for f in self.f0_range)
        top = sample_rate / 2 - 150.0
        formants = tuple((min(f * tract, top), b * tract) for f, b in self.formants)
        return replace(self, f0_range=(lo, hi), formants=formants)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["f0_range"] = list(self.f0_range)
        d["formants"] = [list(p) for p in self.formants]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpeakerProfile":
        d = dict(d)
        d["formants"] = tuple(tuple(p) for p in d.get("formants", cls.formants))
        return cls(**d)


def sample_profiles(n_female: int, n_male: int, seed: int = 0, prefix: str = "spk") -> list[SpeakerProfile]:
    """Draw speakers with gender-typical pitch ranges and vocal-tract scales."""
    rng = np.random.default_rng(seed)
    out = []
    genders = ["F"] * n_female + ["M"] * n_male
    for k, gender in enumerate(genders):
        if gender == "F":
            lo = rng.uniform(160.0, 215.0)
            hi = lo + rng.uniform(45.0, 80.0)
            tract = rng.uniform(1.08, 1.25)
        else:
            lo = rng.uniform(80.0, 120.0)
            hi = lo + rng.uniform(30.0, 55.0)
            tract = rng.uniform(0.88, 1.02)
        base = np.array([500.0, 1500.0, 2500.0, 3300.0]) * tract
        base *= rng.uniform(0.92, 1.08, size=4)
        base[3] = min(base[3], 3800.0)
        bws = np.array([80.0, 110.0, 160.0, 220.0]) * rng.uniform(0.8, 1.3, size=4)
        out.append(
            SpeakerProfile(
                speaker_id=f"{prefix}{k:02d}{gender}",
                gender=gender,
                f0_range=(round(lo, 2), round(min(hi, 390.0), 2)),
                formants=tuple((round(f, 1), round(b, 1)) for f, b in zip(base, bws)),
                jitter=round(rng.uniform(0.01, 0.03), 4),
                vibrato_rate=round(rng.uniform(4.0, 6.5), 3),
                vibrato_depth=round(rng.uniform(0.005, 0.02), 4),
                tilt_db_per_octave=round(rng.uniform(-8.0, -4.0), 2),
                breathiness=round(rng.uniform(0.005, 0.03), 4),
            )
        )
    return out


def _envelope(freqs: np.ndarray, formants: np.ndarray, tilt_db: float) -> np.ndarray:
    env = np.full(freqs.shape, 0.02)
    for f, bw in formants:
        env += 1.0 / (1.0 + ((freqs - f) / bw) ** 2)
    octaves = np.log2(np.maximum(freqs, 50.0) / 100.0)
    return env * 10.0 ** (tilt_db * octaves / 20.0)


def _segments(n: int, sr: int, rng: np.random.Generator):
    """(start, length) of voiced stretches; the utterance opens with voicing."""
    segs = []
    pos = 0
    while pos < n:
        length = int(rng.uniform(0.12, 0.35) * sr)
        length = min(length, n - pos)
        if length < int(0.03 * sr):
            break
        segs.append((pos, length))
        pos += length
        if rng.random() < 0.75:
            pos += int(rng.uniform(0.03, 0.12) * sr)
    return segs


def synth_utterance(
    profile: SpeakerProfile,
    duration: float,
    seed: int,
    sample_rate: int = 8000,
) -> Waveform:
    if duration <= 0.2:
        raise GsepError(f"utterance duration must exceed 0.2 s, got {duration}")
    profile.validate_for_rate(sample_rate)
    rng = np.random.default_rng(seed)
    sr = sample_rate
    n = int(round(duration * sr))
    out = np.zeros(n)
    nyq = sr / 2
    lo, hi = profile.f0_range
    base_formants = np.array(profile.formants)

    for start, length in _segments(n, sr, rng):
        t = np.arange(length) / sr
        # f0 contour: random walk on 20 ms control points, interpolated
        n_ctrl = max(2, int(length / (0.02 * sr)) + 2)
        walk = np.cumsum(rng.normal(0.0, profile.jitter, n_ctrl))
        f0_ctrl = rng.uniform(lo, hi) * np.exp(walk - walk[0])
        f0 = np.interp(t, np.linspace(0.0, t[-1] if length > 1 else 0.0, n_ctrl), f0_ctrl)
        f0 *= 1.0 + profile.vibrato_depth * np.sin(2 * np.pi * profile.vibrato_rate * t + rng.uniform(0, 2 * np.pi))
        f0 = np.clip(f0, lo, hi)

        formants = base_formants.copy()
        formants[:2, 0] *= rng.uniform(1 - profile.vowel_spread, 1 + profile.vowel_spread, size=2)
        formants[:, 0] = np.minimum(formants[:, 0], nyq - 100.0)

        k_max = int(nyq / lo)
        k = np.arange(1, k_max + 1)
        freqs = f0[:, None] * k[None, :]
        amps = _envelope(freqs, formants, profile.tilt_db_per_octave)
        amps[freqs >= 0.95 * nyq] = 0.0
        phase = 2 * np.pi * np.cumsum(f0) / sr
        phase = phase[:, None] * k[None, :] + rng.uniform(0, 2 * np.pi, size=k.shape)
        voiced = np.sum(amps * np.sin(phase), axis=1)

        ramp = min(int(0.02 * sr), length // 2)
        shape = np.ones(length)
        if ramp > 0:
            edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
            shape[:ramp] = edge
            shape[length - ramp:] = edge[::-1]
        loud = rng.uniform(0.5, 1.0)
        seg = loud * shape * voiced
        seg += profile.breathiness * np.std(seg) * shape * rng.standard_normal(length)
        out[start : start + length] += seg

    peak = np.max(np.abs(out))
    if peak > 0:
        out *= PEAK / peak
    return Waveform(out, sr)


def spectral_centroid(w: Waveform) -> float:
    """Power-weighted mean frequency of the whole signal, in Hz."""
    spec = np.abs(np.fft.rfft(w.samples)) ** 2
    freqs = np.fft.rfftfreq(len(w), 1.0 / w.sample_rate)
    return float(np.sum(freqs * spec) / max(np.sum(spec), 1e-300))
