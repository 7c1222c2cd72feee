"""Phase-sensitive mask targets and mask-based resynthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gsep.dsp import ComplexSpectrogram, Waveform, istft
from gsep.errors import GsepError

MAG_FLOOR = 1e-8

MASK_KINDS = ("psm_target", "estimate")


@dataclass
class MaskSequence:
    frames: np.ndarray
    kind: str = "estimate"

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.kind not in MASK_KINDS:
            raise GsepError(f"unknown mask kind {self.kind!r}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.frames.shape


def _check_pair(a: ComplexSpectrogram, b: ComplexSpectrogram) -> None:
    if a.frames.shape != b.frames.shape or a.config != b.config:
        raise GsepError(
            f"spectrogram mismatch: {a.frames.shape}/{a.config} vs {b.frames.shape}/{b.config}"
        )


def psm(
    target_spec: ComplexSpectrogram,
    mix_spec: ComplexSpectrogram,
    clamp: bool = True,
    eps: float = MAG_FLOOR,
) -> MaskSequence:
    """Phase-sensitive mask of the target relative to the mixture.

    ``|S| cos(angle(Y) - angle(S)) / |Y|`` is evaluated as ``Re(S conj(Y)) / |Y|^2``,
    which is the same quantity without going through ``angle``. Bins with
    ``|Y| < eps`` are set to 0; with ``clamp`` the result is limited to [0, 1].
    """
    _check_pair(target_spec, mix_spec)
    S, Y = target_spec.frames, mix_spec.frames
    power = Y.real**2 + Y.imag**2
    live = np.abs(Y) >= eps
    raw = np.zeros(Y.shape)
    np.divide((S * np.conj(Y)).real, power, out=raw, where=live)
    if clamp:
        np.clip(raw, 0.0, 1.0, out=raw)
    return MaskSequence(raw, "psm_target")


def apply_mask_resynth(mask: MaskSequence | np.ndarray, mix_spec: ComplexSpectrogram) -> Waveform:
    """Scale the mixture spectrogram by a real mask and resynthesize with mixture phase."""
    m = mask.frames if isinstance(mask, MaskSequence) else np.asarray(mask)
    if m.shape != mix_spec.frames.shape:
        raise GsepError(f"mask shape {m.shape} does not match spectrogram {mix_spec.frames.shape}")
    masked = ComplexSpectrogram(
        m.astype(np.float64) * mix_spec.frames,
        mix_spec.config,
        mix_spec.original_len,
        mix_spec.sample_rate,
    )
    return istft(masked)
