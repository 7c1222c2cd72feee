"""Mixture manifests: generation, WAV materialization and loading.

A manifest is a JSON-lines file, one mixture per line, with WAV paths stored
relative to the manifest's own directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from gsep.datapipe.mixture import Mixture, MixtureSpec, UtteranceRef, build_mixture
from gsep.datapipe.synth import SpeakerProfile, synth_utterance
from gsep.datapipe.wavio import wav_read, wav_write
from gsep.dsp import Waveform
from gsep.errors import GsepError

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


def gender_pair(a: str, b: str) -> str:
    return "F&M" if a != b else f"{a}&{b}"


class SyntheticSource:
    """Utterances synthesized on demand from speaker profiles."""

    def __init__(self, profiles: Iterable[SpeakerProfile], sample_rate: int = 8000):
        self.profiles = {p.speaker_id: p for p in profiles}
        self.sample_rate = sample_rate
        for p in self.profiles.values():
            p.validate_for_rate(sample_rate)
        self._load = lru_cache(maxsize=256)(self._synth)

    @property
    def speakers(self) -> dict[str, str]:
        return {sid: p.gender for sid, p in self.profiles.items()}

    def new_utterance(self, speaker_id: str, rng: np.random.Generator, duration: float,
                      exclude: UtteranceRef | None = None, voice: tuple[float, float] = (1.0, 1.0)) -> UtteranceRef:
        while True:
            ref = UtteranceRef(speaker_id, int(rng.integers(2**31)), round(float(duration), 4), None, *voice)
            if ref != exclude:
                return ref

    def _synth(self, ref: UtteranceRef) -> Waveform:
        profile = self.profiles[ref.speaker_id].perturbed(ref.pitch, ref.tract, self.sample_rate)
        return synth_utterance(profile, ref.duration, ref.seed, self.sample_rate)

    def load(self, ref: UtteranceRef) -> Waveform:
        if ref.speaker_id not in self.profiles:
            raise GsepError(f"unknown speaker {ref.speaker_id!r}")
        return self._load(ref)


class CorpusSource:
    """Real recordings laid out as ``root/<speaker_id>/<utt>.wav`` with ``root/speakers.tsv``."""

    def __init__(self, root, sample_rate: int = 8000):
        self.root = Path(root)
        self.sample_rate = sample_rate
        table = self.root / "speakers.tsv"
        if not table.exists():
            raise GsepError(f"corpus {self.root} has no speakers.tsv")
        self._genders: dict[str, str] = {}
        for line in table.read_text().splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            sid, gender = line.split("\t")[:2]
            if gender.strip() not in ("F", "M"):
                raise GsepError(f"speakers.tsv: gender for {sid} must be F or M")
            self._genders[sid.strip()] = gender.strip()
        self._files = {
            sid: sorted(str(p.relative_to(self.root)) for p in (self.root / sid).glob("*.wav"))
            for sid in self._genders
        }
        empty = [sid for sid, files in self._files.items() if not files]
        if empty:
            raise GsepError(f"corpus speakers without utterances: {empty}")

    @property
    def speakers(self) -> dict[str, str]:
        return dict(self._genders)

    def new_utterance(self, speaker_id: str, rng: np.random.Generator, duration: float = 0.0,
                      exclude: UtteranceRef | None = None, voice: tuple[float, float] = (1.0, 1.0)) -> UtteranceRef:
        if voice != (1.0, 1.0):
            raise GsepError("voice perturbation needs synthetic speakers")
        files = [f for f in self._files[speaker_id] if exclude is None or f != exclude.path]
        if not files:
            raise GsepError(f"speaker {speaker_id} needs at least two utterances (target + anchor)")
        return UtteranceRef(speaker_id, path=files[int(rng.integers(len(files)))])

    def load(self, ref: UtteranceRef) -> Waveform:
        return wav_read(self.root / ref.path, self.sample_rate)


def _record_rng(seed: int, split: str, index: int) -> tuple[int, np.random.Generator]:
    ss = np.random.SeedSequence([int(seed), SPLITS.index(split), int(index)])
    rec_seed = int(ss.generate_state(1)[0])
    return rec_seed, np.random.default_rng(rec_seed)


def draw_mixture_specs(
    source,
    speaker_ids: Sequence[str],
    count: int,
    split: str,
    seed: int,
    snr_range: tuple[float, float] = (0.0, 5.0),
    anchor_len: float = 1.0,
    anchor_jitter: float = 0.0,
    duration_range: tuple[float, float] = (1.5, 2.5),
    perturb: tuple[float, float] = (0.0, 0.0),
) -> list[tuple[int, MixtureSpec]]:
    """Deterministic mixture recipes; each depends only on (seed, split, index).

    ``perturb = (pitch, tract)`` gives the half-width, in natural-log units,
    of random per-mixture voice scaling. Target and anchor share one draw so
    the anchor still identifies the target voice.
    """
    if split not in SPLITS:
        raise GsepError(f"unknown split {split!r}")
    speaker_ids = list(speaker_ids)
    if len(speaker_ids) < 2:
        raise GsepError(f"split {split} needs at least 2 speakers, got {len(speaker_ids)}")
    out = []
    for k in range(count):
        rec_seed, rng = _record_rng(seed, split, k)
        t_spk, i_spk = rng.choice(len(speaker_ids), size=2, replace=False)
        t_spk, i_spk = speaker_ids[t_spk], speaker_ids[i_spk]
        a_len = anchor_len
        if anchor_jitter:
            a_len = max(0.1, anchor_len + rng.uniform(-anchor_jitter, anchor_jitter))
        v_t = v_i = (1.0, 1.0)
        if any(perturb):
            v_t, v_i = (
                tuple(round(float(np.exp(rng.uniform(-w, w))), 4) for w in perturb) for _ in range(2)
            )
        target = source.new_utterance(t_spk, rng, rng.uniform(*duration_range), voice=v_t)
        anchor = source.new_utterance(t_spk, rng, a_len + 0.25, exclude=target, voice=v_t)
        interf = source.new_utterance(i_spk, rng, rng.uniform(*duration_range), voice=v_i)
        snr = float(rng.uniform(*snr_range))
        out.append((rec_seed, MixtureSpec(target, anchor, interf, snr, round(a_len, 4), rec_seed)))
    return out


def _wav_names(rec_id: str) -> dict[str, str]:
    return {key: f"{rec_id}_{key.split('_')[0]}.wav" for key in ("mix_wav", "target_wav", "anchor_wav", "interf_wav")}


def dataset_generate(
    source,
    speaker_ids: Sequence[str],
    count: int,
    split: str,
    seed: int,
    out_dir=None,
    manifest_path=None,
    jobs: int = 1,
    **draw_kwargs,
) -> list[dict]:
    """Draw ``count`` mixtures, optionally write their WAVs, and return manifest records.

    WAV paths in the records are relative to the manifest directory when
    ``manifest_path`` is given, else to ``out_dir``.
    """
    specs = draw_mixture_specs(source, speaker_ids, count, split, seed, **draw_kwargs)
    genders = source.speakers
    out_dir = Path(out_dir) if out_dir is not None else None
    base = Path(manifest_path).parent if manifest_path is not None else out_dir

    def one(item):
        k, (rec_seed, spec) = item
        rec_id = f"{split}{k:05d}"
        names = _wav_names(rec_id)
        rec = {
            "id": rec_id,
            "split": split,
            "seed": rec_seed,
            "snr_db": round(spec.snr_db, 6),
            "anchor_len_s": spec.anchor_len,
            "gender_pair": gender_pair(genders[spec.target.speaker_id], genders[spec.interference.speaker_id]),
            "target_speaker": spec.target.speaker_id,
            "interf_speaker": spec.interference.speaker_id,
            "sources": {
                "target": spec.target.to_dict(),
                "anchor": spec.anchor.to_dict(),
                "interference": spec.interference.to_dict(),
            },
        }
        if out_dir is not None:
            mix = build_mixture(spec, source.load)
            anchor_clip = Waveform(mix.target.samples[: mix.anchor_samples], mix.target.sample_rate)
            for key, wav in (("mix_wav", mix.mixture), ("target_wav", mix.target),
                             ("anchor_wav", anchor_clip), ("interf_wav", mix.interference)):
                path = out_dir / names[key]
                wav_write(path, wav)
                rec[key] = _relpath(path, base)
        return rec

    items = list(enumerate(specs))
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            records = list(pool.map(one, items))
    else:
        records = [one(it) for it in items]
    if manifest_path is not None:
        write_manifest(manifest_path, records)
    return records


def _relpath(path: Path, base: Path | None) -> str:
    if base is None:
        return str(path)
    return os.path.relpath(path, base)


def spec_from_record(rec: dict) -> MixtureSpec:
    src = rec["sources"]
    return MixtureSpec(
        UtteranceRef.from_dict(src["target"]),
        UtteranceRef.from_dict(src["anchor"]),
        UtteranceRef.from_dict(src["interference"]),
        float(rec["snr_db"]),
        float(rec["anchor_len_s"]),
        int(rec["seed"]),
    )


def write_manifest(path, records: Sequence[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise GsepError(f"manifest {path} not found")
    records = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise GsepError(f"{path}:{n}: bad manifest line ({exc})") from exc
    return records


def manifest_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_record_audio(rec: dict, manifest_dir) -> Mixture:
    """Read a record's mixture and target WAVs back into a :class:`Mixture`."""
    base = Path(manifest_dir)
    y = wav_read(base / rec["mix_wav"])
    s_t = wav_read(base / rec["target_wav"])
    if len(y) != len(s_t):
        raise GsepError(f"{rec['id']}: mixture and target lengths differ ({len(y)} vs {len(s_t)})")
    anchor_samples = int(round(float(rec["anchor_len_s"]) * y.sample_rate))
    s_i = Waveform(y.samples - s_t.samples, y.sample_rate)
    return Mixture(y, s_t, s_i, anchor_samples, float("nan"))


def speaker_overlap(a: Iterable[dict], b: Iterable[dict]) -> set[str]:
    def spk(recs):
        return {r["target_speaker"] for r in recs} | {r["interf_speaker"] for r in recs}

    return spk(a) & spk(b)
