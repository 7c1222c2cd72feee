"""Anchor-guided single-channel target speaker separation.

The first speaker heard in the input (a short clean anchor of the target)
defines whom to extract; a recurrent mask estimator tracks that speaker
through the rest of the two-talker mixture.
"""

from gsep.dsp import (
    ComplexSpectrogram,
    FeatureSequence,
    NormStats,
    StftConfig,
    Waveform,
    compress_magnitude,
    fit_norm_stats,
    istft,
    normalize,
    stft,
)
from gsep.masking import MaskSequence, apply_mask_resynth, psm

__version__ = "0.1.0"

__all__ = [
    "ComplexSpectrogram",
    "FeatureSequence",
    "MaskSequence",
    "NormStats",
    "StftConfig",
    "Waveform",
    "apply_mask_resynth",
    "compress_magnitude",
    "fit_norm_stats",
    "istft",
    "normalize",
    "psm",
    "stft",
]
