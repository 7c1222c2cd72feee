"""Mixture construction, synthetic speakers, corpus access and WAV I/O."""

from gsep.datapipe.dataset import (
    CorpusSource,
    SyntheticSource,
    dataset_generate,
    draw_mixture_specs,
    gender_pair,
    load_record_audio,
    manifest_hash,
    read_manifest,
    spec_from_record,
    speaker_overlap,
    write_manifest,
)
from gsep.datapipe.mixture import (
    Mixture,
    MixtureSpec,
    TrainingExample,
    UtteranceRef,
    achieved_snr_db,
    build_mixture,
    fit_length,
    make_training_example,
    mix_waveforms,
    snr_gain,
)
from gsep.datapipe.synth import SpeakerProfile, sample_profiles, spectral_centroid, synth_utterance
from gsep.datapipe.wavio import wav_read, wav_write

__all__ = [
    "CorpusSource",
    "Mixture",
    "MixtureSpec",
    "SpeakerProfile",
    "SyntheticSource",
    "TrainingExample",
    "UtteranceRef",
    "achieved_snr_db",
    "build_mixture",
    "dataset_generate",
    "draw_mixture_specs",
    "fit_length",
    "gender_pair",
    "load_record_audio",
    "make_training_example",
    "manifest_hash",
    "mix_waveforms",
    "read_manifest",
    "sample_profiles",
    "snr_gain",
    "spec_from_record",
    "speaker_overlap",
    "spectral_centroid",
    "synth_utterance",
    "wav_read",
    "wav_write",
]
