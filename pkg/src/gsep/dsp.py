"""Framing, STFT/ISTFT and the compressed-magnitude feature pipeline.

Everything here runs in float64. Frames are stored as an ``(n_frames, n_bins)``
complex matrix with ``n_bins = fft_size // 2 + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gsep.errors import GsepError

STD_FLOOR = 1e-8

_WINDOW_KINDS = ("hamming", "hann", "rect")


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 8000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) <= 0:
            raise GsepError(f"sample rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise GsepError("invalid sample: waveform contains NaN or Inf")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters. Defaults give 32 ms / 16 ms framing at 8 kHz."""

    window_len: int = 256
    hop: int = 128
    fft_size: int = 256
    window_kind: str = "hamming"

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_size:
            raise GsepError(
                "need 0 < hop <= window_len <= fft_size, got "
                f"hop={self.hop} window_len={self.window_len} fft_size={self.fft_size}"
            )
        if self.fft_size % 2:
            raise GsepError("fft_size must be even")
        if self.window_kind not in _WINDOW_KINDS:
            raise GsepError(f"unknown window kind {self.window_kind!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window(self) -> np.ndarray:
        return analysis_window(self.window_len, self.window_kind)

    def to_dict(self) -> dict:
        return {
            "window_len": self.window_len,
            "hop": self.hop,
            "fft_size": self.fft_size,
            "window_kind": self.window_kind,
        }


def analysis_window(length: int, kind: str = "hamming") -> np.ndarray:
    """Periodic (DFT-even) window; hamming and hann are COLA at 50% hop."""
    n = np.arange(length)
    if kind == "hamming":
        return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / length)
    if kind == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)
    if kind == "rect":
        return np.ones(length)
    raise GsepError(f"unknown window kind {kind!r}")


@dataclass
class ComplexSpectrogram:
    frames: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    original_len: int = 0
    sample_rate: int = 8000

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.complex128)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.n_bins:
            raise GsepError(
                f"spectrogram shape {self.frames.shape} inconsistent with "
                f"{self.config.n_bins} bins"
            )

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.frames)


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.std.shape:
            raise GsepError("mean/std length mismatch")


@dataclass
class FeatureSequence:
    frames: np.ndarray
    stats: NormStats | None = None

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def _pad_amounts(n: int, cfg: StftConfig) -> tuple[int, int]:
    # reflect half a window at both ends, then zero-fill the tail so the
    # last original sample still sits under two overlapping frames
    half = cfg.window_len // 2
    tail = (-n) % cfg.hop
    return half, half + tail


def n_frames_for(n_samples: int, cfg: StftConfig) -> int:
    """Frame count produced by :func:`stft` for a signal of ``n_samples``."""
    left, right = _pad_amounts(n_samples, cfg)
    return 1 + (n_samples + left + right - cfg.window_len) // cfg.hop


def frame_of_sample(sample_index: int, cfg: StftConfig) -> int:
    """Index of the first frame whose window is centred at or after ``sample_index``."""
    return -(-sample_index // cfg.hop)


def _check_signal(x: np.ndarray) -> None:
    if x.size == 0:
        raise GsepError("empty input")
    if not np.all(np.isfinite(x)):
        raise GsepError("invalid sample: non-finite value in waveform")


def stft(w: Waveform | np.ndarray, cfg: StftConfig | None = None) -> ComplexSpectrogram:
    """Short-time Fourier transform with unnormalized forward FFT."""
    cfg = cfg or StftConfig()
    if isinstance(w, Waveform):
        x, sr = w.samples, w.sample_rate
    else:
        x, sr = np.asarray(w, dtype=np.float64).reshape(-1), 8000
    _check_signal(x)

    n = x.shape[0]
    left, right = _pad_amounts(n, cfg)
    padded = np.pad(x, (left, left), mode="reflect" if n > 1 else "edge")
    padded = np.pad(padded, (0, right - left))
    frames = sliding_window_view(padded, cfg.window_len)[:: cfg.hop]
    spec = np.fft.rfft(frames * cfg.window(), n=cfg.fft_size, axis=1)
    return ComplexSpectrogram(spec, cfg, original_len=n, sample_rate=sr)


def _overlap_add(chunks: np.ndarray, hop: int, total: int) -> np.ndarray:
    n_frames, width = chunks.shape
    idx = (np.arange(n_frames) * hop)[:, None] + np.arange(width)
    return np.bincount(idx.ravel(), weights=np.ravel(chunks), minlength=total)


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Plain overlap-add resynthesis, normalized by the summed analysis window."""
    cfg = spec.config
    if spec.frames.ndim != 2 or spec.frames.shape[1] != cfg.n_bins:
        raise GsepError("spectrogram shape does not match its StftConfig")
    if not np.all(np.isfinite(spec.frames)):
        raise GsepError("invalid spectrogram: non-finite entries")
    n = spec.original_len
    expected = n_frames_for(n, cfg) if n > 0 else spec.n_frames
    if spec.n_frames != expected:
        raise GsepError(
            f"spectrogram has {spec.n_frames} frames, expected {expected} "
            f"for original length {n}"
        )

    chunks = np.fft.irfft(spec.frames, n=cfg.fft_size, axis=1)[:, : cfg.window_len]
    total = (spec.n_frames - 1) * cfg.hop + cfg.window_len
    signal = _overlap_add(chunks, cfg.hop, total)
    win_sum = _overlap_add(np.broadcast_to(cfg.window(), chunks.shape), cfg.hop, total)

    left, _ = _pad_amounts(n, cfg)
    signal = signal[left : left + n]
    win_sum = win_sum[left : left + n]
    out = np.divide(signal, win_sum, out=np.zeros_like(signal), where=win_sum > 1e-12)
    return Waveform(out, spec.sample_rate)


def compress_magnitude(spec: ComplexSpectrogram | np.ndarray) -> np.ndarray:
    frames = spec.frames if isinstance(spec, ComplexSpectrogram) else np.asarray(spec)
    return np.cbrt(np.abs(frames))


def fit_norm_stats(training_features) -> NormStats:
    """Per-bin mean and population std over every frame of every utterance."""
    mats = [np.asarray(m, dtype=np.float64) for m in training_features]
    mats = [m for m in mats if m.size]
    if not mats:
        raise GsepError("cannot fit normalization statistics on an empty collection")
    stacked = np.concatenate(mats, axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    return NormStats(mean, std)


def normalize(features: np.ndarray, stats: NormStats) -> FeatureSequence:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != stats.mean.shape[0]:
        raise GsepError(
            f"feature shape {x.shape} does not match {stats.mean.shape[0]}-bin stats"
        )
    return FeatureSequence((x - stats.mean) / stats.std, stats)


def denormalize(features: FeatureSequence | np.ndarray, stats: NormStats) -> np.ndarray:
    x = features.frames if isinstance(features, FeatureSequence) else np.asarray(features)
    return x * stats.std + stats.mean


def features_from_waveform(w: Waveform, cfg: StftConfig, stats: NormStats) -> FeatureSequence:
    return normalize(compress_magnitude(stft(w, cfg)), stats)
