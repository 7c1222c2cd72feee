"""Anchor-prefixed two-talker mixtures and the (features, PSM) training pairs built from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gsep.dsp import (
    FeatureSequence,
    NormStats,
    StftConfig,
    Waveform,
    compress_magnitude,
    frame_of_sample,
    normalize,
    stft,
)
from gsep.errors import DegenerateSourceError, GsepError
from gsep.masking import MaskSequence, psm

HEADROOM_PEAK = 0.9
CROSSFADE_S = 0.02


@dataclass(frozen=True)
class UtteranceRef:
    """Pointer to one utterance: a WAV path, or a (speaker, seed, duration) synthesis recipe.

    ``pitch`` and ``tract`` are voice perturbation factors for synthetic
    speakers (1.0 = the speaker's own voice).
    """

    speaker_id: str
    seed: int = 0
    duration: float = 0.0
    path: str | None = None
    pitch: float = 1.0
    tract: float = 1.0

    def to_dict(self) -> dict:
        if self.path is not None:
            return {"speaker_id": self.speaker_id, "path": self.path}
        d = {"speaker_id": self.speaker_id, "seed": self.seed, "duration": self.duration}
        if self.pitch != 1.0 or self.tract != 1.0:
            d.update(pitch=self.pitch, tract=self.tract)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UtteranceRef":
        return cls(d["speaker_id"], int(d.get("seed", 0)), float(d.get("duration", 0.0)), d.get("path"),
                   float(d.get("pitch", 1.0)), float(d.get("tract", 1.0)))


@dataclass(frozen=True)
class MixtureSpec:
    target: UtteranceRef
    anchor: UtteranceRef
    interference: UtteranceRef
    snr_db: float
    anchor_len: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.anchor.speaker_id != self.target.speaker_id:
            raise GsepError("anchor must come from the target speaker")
        if self.anchor == self.target:
            raise GsepError("anchor utterance must differ from the target utterance")
        if self.interference.speaker_id == self.target.speaker_id:
            raise GsepError("interference must come from a different speaker")
        if self.anchor_len <= 0:
            raise GsepError(f"anchor length must be positive, got {self.anchor_len}")


@dataclass
class Mixture:
    mixture: Waveform
    target: Waveform        # anchor followed by the target utterance
    interference: Waveform  # zeros over the anchor, then scaled interferer
    anchor_samples: int
    gain: float             # amplitude scale applied to the interferer

    def as_tuple(self) -> tuple[Waveform, Waveform, Waveform]:
        return self.mixture, self.target, self.interference


@dataclass
class TrainingExample:
    mixture: Waveform
    target_reference: Waveform
    features: FeatureSequence
    psm_target: MaskSequence
    anchor_frames: int
    mix_magnitude: np.ndarray | None = None


def fit_length(x: np.ndarray, n: int, sample_rate: int = 8000) -> np.ndarray:
    """Truncate, or loop with a short raised-cosine crossfade, to exactly ``n`` samples."""
    if len(x) >= n:
        return x[:n].copy()
    fade = min(int(CROSSFADE_S * sample_rate), len(x) // 2)
    out = x.copy()
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / max(fade, 1))
    while len(out) < n:
        head = x.copy()
        if fade > 0:
            out[-fade:] = out[-fade:] * ramp[::-1] + head[:fade] * ramp
            head = head[fade:]
        out = np.concatenate([out, head])
    return out[:n]


def snr_gain(target: np.ndarray, interference: np.ndarray, snr_db: float) -> float:
    """Amplitude scale for ``interference`` giving ``snr_db`` relative to ``target``."""
    e_t = float(np.dot(target, target))
    e_i = float(np.dot(interference, interference))
    if e_t <= 0.0 or e_i <= 0.0:
        raise DegenerateSourceError("degenerate source: zero-energy target or interference")
    return float(np.sqrt(e_t / (e_i * 10.0 ** (snr_db / 10.0))))


def mix_waveforms(
    target: Waveform,
    anchor: Waveform,
    interference: Waveform,
    snr_db: float,
    anchor_len: float,
) -> Mixture:
    """Prefix the anchor and add the interferer at ``snr_db`` after it.

    The anchor is cut to ``anchor_len`` seconds and peak-matched to the target.
    The SNR is measured between the target utterance and the fitted interferer,
    i.e. over the post-anchor overlap. The triple is then scaled jointly for
    16-bit headroom, and ``interference`` is defined as ``mixture - target`` so
    the three signals add up exactly.
    """
    sr = target.sample_rate
    if anchor.sample_rate != sr or interference.sample_rate != sr:
        raise GsepError("sample rate mismatch between mixture sources")
    t = target.samples
    if len(t) == 0 or len(interference) == 0:
        raise DegenerateSourceError("degenerate source: empty utterance")
    n_anchor = int(round(anchor_len * sr))
    a = fit_length(anchor.samples, n_anchor, sr)
    peak_a, peak_t = np.max(np.abs(a)), np.max(np.abs(t))
    if peak_a <= 0.0 or peak_t <= 0.0:
        raise DegenerateSourceError("degenerate source: silent anchor or target")
    a = a * (peak_t / peak_a)

    i = fit_length(interference.samples, len(t), sr)
    gain = snr_gain(t, i, snr_db)
    s_t = np.concatenate([a, t])
    s_i = np.concatenate([np.zeros(n_anchor), gain * i])
    y = s_t + s_i
    peak = np.max(np.abs(y))
    if peak > HEADROOM_PEAK:
        scale = HEADROOM_PEAK / peak
        s_t = s_t * scale
        y = s_t + s_i * scale
    s_i = y - s_t
    return Mixture(Waveform(y, sr), Waveform(s_t, sr), Waveform(s_i, sr), n_anchor, gain)


def build_mixture(spec: MixtureSpec, resolve) -> Mixture:
    """Materialize a :class:`MixtureSpec`; ``resolve`` maps an UtteranceRef to a Waveform."""
    return mix_waveforms(
        resolve(spec.target),
        resolve(spec.anchor),
        resolve(spec.interference),
        spec.snr_db,
        spec.anchor_len,
    )


def achieved_snr_db(mix: Mixture) -> float:
    a = mix.anchor_samples
    t = mix.target.samples[a:]
    i = mix.interference.samples[a:]
    return float(10.0 * np.log10(np.dot(t, t) / np.dot(i, i)))


def make_training_example(
    y: Waveform,
    s_t: Waveform,
    cfg: StftConfig,
    stats: NormStats | None,
    anchor_len: float,
    clamp: bool = True,
) -> TrainingExample:
    """Features from the mixture and the PSM target of the anchor-prefixed target.

    With ``stats=None`` the features are left as compressed magnitudes; this is
    what the normalization statistics are fitted on.
    """
    if len(y) != len(s_t):
        raise GsepError(f"mixture/target length mismatch: {len(y)} vs {len(s_t)}")
    Y = stft(y, cfg)
    S = stft(s_t, cfg)
    comp = compress_magnitude(Y)
    feats = normalize(comp, stats) if stats is not None else FeatureSequence(comp, None)
    mask = psm(S, Y, clamp=clamp)
    anchor_frames = min(frame_of_sample(int(round(anchor_len * y.sample_rate)), cfg), Y.n_frames - 1)
    return TrainingExample(y, s_t, feats, mask, anchor_frames, Y.magnitude)
