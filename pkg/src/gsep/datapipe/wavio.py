"""16-bit PCM mono WAV reading and writing on top of the stdlib ``wave`` module."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from gsep.dsp import Waveform
from gsep.errors import AudioFormatError

DEFAULT_RATE = 8000
_SCALE = 32768.0


def wav_read(path, expected_rate: int | None = DEFAULT_RATE) -> Waveform:
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            comp = fh.getcomptype()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a PCM RIFF/WAVE file ({exc})") from exc
    if comp != "NONE":
        raise AudioFormatError(f"{path}: compressed WAV ({comp}) is not supported")
    if width != 2:
        raise AudioFormatError(f"{path}: unsupported sample width {8 * width} bits, need 16")
    if channels != 1:
        raise AudioFormatError(f"{path}: {channels} channels, need mono")
    if expected_rate is not None and rate != expected_rate:
        raise AudioFormatError(f"{path}: unsupported sample rate {rate} Hz, need {expected_rate}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _SCALE
    return Waveform(samples, rate)


def quantize(samples: np.ndarray) -> np.ndarray:
    """Round to nearest 16-bit code with clipping."""
    q = np.rint(np.asarray(samples, dtype=np.float64) * _SCALE)
    return np.clip(q, -32768, 32767).astype("<i2")


def wav_write(path, w: Waveform) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(quantize(w.samples).tobytes())
