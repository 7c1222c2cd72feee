"""JSON run configuration for the CLI.

Every cross-field check happens in :func:`RunConfig.from_dict`, before any
command touches the filesystem.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from gsep.datapipe.synth import SpeakerProfile, sample_profiles
from gsep.dsp import StftConfig
from gsep.errors import ConfigError, GsepError
from gsep.neuralnet.params import ArchConfig
from gsep.neuralnet.train import TrainConfig

SUPPORTED_RATE = 8000

_TOP_KEYS = {"name", "seed", "workdir", "sample_rate", "stft", "arch", "optim", "data", "paths"}
_DATA_KEYS = {
    "speakers", "profiles", "corpus", "counts", "snr_db", "anchor_len_s", "anchor_jitter_s",
    "duration_s", "sweep_lengths_s", "sweep_count", "voice_perturb",
}
_DEFAULT_PATHS = {
    "data": "data",
    "manifests": "manifests",
    "checkpoint": "checkpoints/best.gsep",
    "train_log": "train_log.txt",
    "reports": "reports",
}


def _sub(d: dict, key: str) -> dict:
    val = d.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"config section {key!r} must be an object")
    return val


@dataclass
class DataConfig:
    train_profiles: list[SpeakerProfile] = field(default_factory=list)
    test_profiles: list[SpeakerProfile] = field(default_factory=list)
    corpus_root: str | None = None
    corpus_test_speakers: list[str] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=lambda: {"train": 300, "valid": 60, "test": 100})
    snr_db: tuple[float, float] = (0.0, 5.0)
    anchor_len_s: float = 1.0
    anchor_jitter_s: float = 0.0
    duration_s: tuple[float, float] = (1.5, 2.5)
    sweep_lengths_s: tuple[float, ...] = (0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8)
    sweep_count: int = 100
    # (pitch, tract) log-scale half-widths, applied to train/valid mixtures only
    voice_perturb: tuple[float, float] = (0.0, 0.0)

    def draw_kwargs(self, split: str = "test") -> dict:
        kw = {
            "snr_range": self.snr_db,
            "anchor_len": self.anchor_len_s,
            "anchor_jitter": self.anchor_jitter_s,
            "duration_range": self.duration_s,
        }
        if split in ("train", "valid") and any(self.voice_perturb):
            kw["perturb"] = self.voice_perturb
        return kw


@dataclass
class RunConfig:
    stft: StftConfig
    arch: ArchConfig
    optim: TrainConfig
    data: DataConfig
    workdir: Path
    paths: dict[str, str]
    seed: int = 0
    name: str = "run"
    sample_rate: int = SUPPORTED_RATE
    raw: dict = field(default_factory=dict, repr=False)

    def path(self, key: str) -> Path:
        p = Path(self.paths[key])
        return p if p.is_absolute() else self.workdir / p

    def manifest(self, split: str) -> Path:
        return self.path("manifests") / f"{split}.jsonl"

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None, workdir: str | os.PathLike | None = None) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw = copy.deepcopy(d)
        run_seed = int(d.get("seed", 0) if seed is None else seed)
        sr = int(d.get("sample_rate", SUPPORTED_RATE))
        if sr != SUPPORTED_RATE:
            raise ConfigError(f"sample_rate must be {SUPPORTED_RATE} Hz (resampling is not supported)")

        try:
            stft_cfg = StftConfig(**_sub(d, "stft"))
        except (TypeError, GsepError) as exc:
            raise ConfigError(f"stft: {exc}") from exc

        arch_d = dict(_sub(d, "arch"))
        n_bins = stft_cfg.n_bins
        for key in ("input_dim", "output_dim"):
            if key in arch_d and int(arch_d[key]) != n_bins:
                raise ConfigError(
                    f"arch.{key}={arch_d[key]} inconsistent with stft ({n_bins} bins from fft_size={stft_cfg.fft_size})"
                )
        arch_d["input_dim"] = arch_d["output_dim"] = n_bins
        try:
            arch = ArchConfig(**arch_d)
        except (TypeError, GsepError) as exc:
            raise ConfigError(f"arch: {exc}") from exc

        optim_d = dict(_sub(d, "optim"))
        if seed is not None or "seed" not in optim_d:
            optim_d["seed"] = run_seed
        try:
            optim = TrainConfig(**optim_d)
        except (TypeError, GsepError) as exc:
            raise ConfigError(f"optim: {exc}") from exc
        if optim.clip_norm is not None and optim.clip_norm < 0:
            raise ConfigError("optim.clip_norm must be non-negative")

        data = _parse_data(_sub(d, "data"), run_seed, sr)

        paths = dict(_DEFAULT_PATHS)
        paths.update(_sub(d, "paths"))
        wd = workdir or os.environ.get("GSEP_WORKDIR") or d.get("workdir", "gsep_work")
        return cls(stft_cfg, arch, optim, data, Path(wd), paths, run_seed, str(d.get("name", "run")), sr, raw)

    @classmethod
    def load(cls, path, seed: int | None = None, workdir=None) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(d, seed, workdir)


def _pair(val, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"data.{name} must be a [low, high] pair") from exc
    if lo > hi:
        raise ConfigError(f"data.{name}: low {lo} exceeds high {hi}")
    return lo, hi


def _parse_data(d: dict, seed: int, sample_rate: int) -> DataConfig:
    unknown = set(d) - _DATA_KEYS
    if unknown:
        raise ConfigError(f"unknown data keys: {sorted(unknown)}")
    out = DataConfig()
    sources = [k for k in ("speakers", "profiles", "corpus") if k in d]
    if len(sources) > 1:
        raise ConfigError(f"data: give only one of speakers/profiles/corpus, got {sources}")
    try:
        if "profiles" in d:
            profs = [SpeakerProfile.from_dict(p) for p in d["profiles"].get("train", [])]
            tests = [SpeakerProfile.from_dict(p) for p in d["profiles"].get("test", [])]
            out.train_profiles, out.test_profiles = profs, tests
        elif "corpus" in d:
            c = d["corpus"]
            out.corpus_root = str(c["root"])
            out.corpus_test_speakers = list(c.get("test_speakers", []))
            if not out.corpus_test_speakers:
                raise ConfigError("data.corpus.test_speakers must name the held-out speakers")
        else:
            spk = d.get("speakers", {"train": {"female": 4, "male": 4}, "test": {"female": 2, "male": 2}})
            pseed = int(spk.get("seed", seed))
            tr, te = spk.get("train", {}), spk.get("test", {})
            out.train_profiles = sample_profiles(int(tr.get("female", 0)), int(tr.get("male", 0)), pseed, "trn")
            out.test_profiles = sample_profiles(int(te.get("female", 0)), int(te.get("male", 0)), pseed + 7919, "tst")
        for p in out.train_profiles + out.test_profiles:
            p.validate_for_rate(sample_rate)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"data: malformed speaker definition ({exc})") from exc
    except GsepError as exc:
        raise ConfigError(f"data: {exc}") from exc

    if out.corpus_root is None:
        if len(out.train_profiles) < 2 or len(out.test_profiles) < 2:
            raise ConfigError("need at least 2 training and 2 test speakers")
        overlap = {p.speaker_id for p in out.train_profiles} & {p.speaker_id for p in out.test_profiles}
        if overlap:
            raise ConfigError(f"test speakers must be disjoint from training speakers: {sorted(overlap)}")

    counts = dict(out.counts)
    counts.update({k: int(v) for k, v in d.get("counts", {}).items()})
    if set(counts) - {"train", "valid", "test"} or min(counts.values()) < 1:
        raise ConfigError(f"data.counts needs positive train/valid/test counts, got {counts}")
    out.counts = counts
    out.snr_db = _pair(d.get("snr_db", out.snr_db), "snr_db")
    out.duration_s = _pair(d.get("duration_s", out.duration_s), "duration_s")
    if out.duration_s[0] <= 0.2:
        raise ConfigError("data.duration_s must stay above 0.2 s")
    out.anchor_len_s = float(d.get("anchor_len_s", out.anchor_len_s))
    out.anchor_jitter_s = float(d.get("anchor_jitter_s", out.anchor_jitter_s))
    if out.anchor_len_s <= 0 or out.anchor_jitter_s < 0 or out.anchor_jitter_s >= out.anchor_len_s:
        raise ConfigError("data.anchor_len_s must be positive and exceed anchor_jitter_s >= 0")
    out.sweep_lengths_s = tuple(float(v) for v in d.get("sweep_lengths_s", out.sweep_lengths_s))
    if not out.sweep_lengths_s or min(out.sweep_lengths_s) <= 0:
        raise ConfigError("data.sweep_lengths_s must be positive")
    vp = d.get("voice_perturb", {})
    try:
        out.voice_perturb = (float(vp.get("pitch", 0.0)), float(vp.get("tract", 0.0)))
    except (AttributeError, TypeError, ValueError) as exc:
        raise ConfigError("data.voice_perturb must be {\"pitch\": x, \"tract\": y}") from exc
    if min(out.voice_perturb) < 0 or max(out.voice_perturb) > 0.5:
        raise ConfigError("data.voice_perturb widths must lie in [0, 0.5]")
    if any(out.voice_perturb) and out.corpus_root is not None:
        raise ConfigError("data.voice_perturb only applies to synthetic speakers")
    out.sweep_count = int(d.get("sweep_count", out.sweep_count))
    if out.sweep_count < 1:
        raise ConfigError("data.sweep_count must be positive")
    return out


def builtin_config(name: str) -> Path:
    """Path of a config shipped with the package (``toy`` or ``paper``)."""
    ref = resources.files("gsep") / "configs" / f"{name}.json"
    if not ref.is_file():
        raise ConfigError(f"no built-in config named {name!r}")
    return Path(str(ref))
