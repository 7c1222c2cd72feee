"""Separation metrics and the evaluation / guide-length sweep harnesses."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from gsep.datapipe.dataset import draw_mixture_specs, load_record_audio
from gsep.datapipe.mixture import Mixture, build_mixture
from gsep.dsp import StftConfig, Waveform, compress_magnitude, normalize, stft
from gsep.errors import GsepError
from gsep.masking import apply_mask_resynth, psm
from gsep.neuralnet.network import forward
from gsep.neuralnet.params import NetworkParams

log = logging.getLogger(__name__)

DB_CAP = 100.0
REGIONS = ("full", "post_anchor", "part1", "part2")
MODES = ("network", "oracle", "identity")
STRATA = ("F&M", "F&F", "M&M")

METRIC_NOTES = {
    "si_sdr_db": "scale-invariant SDR (reference projected onto estimate span)",
    "sdr_db": "SDR after optimal scaling of the estimate; not BSS-Eval",
    "omitted": "PESQ and BSS-Eval SIR/SAR are not computed",
}


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)


def _ratio_db(num: float, den: float) -> float:
    # a silent estimate scores the floor even though its residual is also zero
    if num <= 0.0:
        return -DB_CAP
    if den <= 0.0:
        return DB_CAP
    return float(np.clip(10.0 * np.log10(num / den), -DB_CAP, DB_CAP))


def si_sdr(estimate, reference) -> float:
    """Scale-invariant SDR in dB, clipped to +-100 dB."""
    est, ref = _samples(estimate), _samples(reference)
    if est.shape != ref.shape:
        raise GsepError(f"length mismatch: estimate {est.shape} vs reference {ref.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy <= 0.0:
        raise GsepError("zero-energy reference")
    proj = (np.dot(est, ref) / ref_energy) * ref
    resid = est - proj
    return _ratio_db(float(np.dot(proj, proj)), float(np.dot(resid, resid)))


def scaled_sdr(estimate, reference) -> float:
    """SDR of the reference against the least-squares rescaled estimate."""
    est, ref = _samples(estimate), _samples(reference)
    if est.shape != ref.shape:
        raise GsepError(f"length mismatch: estimate {est.shape} vs reference {ref.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy <= 0.0:
        raise GsepError("zero-energy reference")
    est_energy = float(np.dot(est, est))
    if est_energy <= 0.0:
        return -DB_CAP
    scaled = (np.dot(est, ref) / est_energy) * est
    err = ref - scaled
    return _ratio_db(ref_energy, float(np.dot(err, err)))


def region_bounds(n_samples: int, anchor_samples: int, region: str) -> tuple[int, int]:
    """Half-open sample interval scored for ``region``.

    ``part1`` and ``part2`` split the post-anchor stretch at its midpoint, with
    the extra sample of an odd length going to ``part2``.
    """
    if region not in REGIONS:
        raise GsepError(f"unknown region {region!r}; choose from {REGIONS}")
    a = min(max(anchor_samples, 0), n_samples)
    if region == "full":
        return 0, n_samples
    if region == "post_anchor":
        return a, n_samples
    mid = a + (n_samples - a) // 2
    return (a, mid) if region == "part1" else (mid, n_samples)


def separate(params: NetworkParams, mixture: Waveform, cfg: StftConfig) -> tuple[Waveform, np.ndarray]:
    """Run the network on a (anchor-prefixed) mixture; returns the estimate and the mask."""
    if params.norm_stats is None:
        raise GsepError("checkpoint carries no normalization statistics")
    if params.arch.input_dim != cfg.n_bins:
        raise GsepError(
            f"network expects {params.arch.input_dim} bins but STFT config gives {cfg.n_bins}"
        )
    Y = stft(mixture, cfg)
    feats = normalize(compress_magnitude(Y), params.norm_stats)
    mask = forward(feats, params, "eval").output.astype(np.float64)
    return apply_mask_resynth(mask, Y), mask


def estimate_for(mix: Mixture, mode: str, cfg: StftConfig, params: NetworkParams | None = None) -> Waveform:
    if mode == "network":
        if params is None:
            raise GsepError("network mode needs a checkpoint")
        return separate(params, mix.mixture, cfg)[0]
    Y = stft(mix.mixture, cfg)
    if mode == "oracle":
        return apply_mask_resynth(psm(stft(mix.target, cfg), Y), Y)
    if mode == "identity":
        return apply_mask_resynth(np.ones(Y.frames.shape), Y)
    raise GsepError(f"unknown mode {mode!r}")


def score_mixture(mix: Mixture, estimate: Waveform, region: str) -> dict:
    lo, hi = region_bounds(len(mix.mixture), mix.anchor_samples, region)
    if hi <= lo:
        raise GsepError(f"empty scoring region {region}")
    ref = mix.target.samples[lo:hi]
    est = estimate.samples[lo:hi]
    unproc = mix.mixture.samples[lo:hi]
    return {
        "si_sdr_db": si_sdr(est, ref),
        "sdr_db": scaled_sdr(est, ref),
        "si_sdr_unprocessed_db": si_sdr(unproc, ref),
        "sdr_unprocessed_db": scaled_sdr(unproc, ref),
        "region_start": lo,
        "region_end": hi,
    }


@dataclass
class ScoreReport:
    rows: list[dict]
    region: str
    mode: str
    metadata: dict = field(default_factory=dict)

    @property
    def ok_rows(self) -> list[dict]:
        return [r for r in self.rows if "error" not in r]

    @property
    def failures(self) -> list[dict]:
        return [r for r in self.rows if "error" in r]

    def aggregates(self) -> dict[str, dict]:
        """Arithmetic means per gender stratum and overall."""
        keys = ("si_sdr_db", "sdr_db", "si_sdr_unprocessed_db", "sdr_unprocessed_db")
        out = {}
        groups = {s: [r for r in self.ok_rows if r["gender_pair"] == s] for s in STRATA}
        groups["average"] = self.ok_rows
        for name, rows in groups.items():
            if not rows:
                continue
            agg = {k: float(np.mean([r[k] for r in rows])) for k in keys}
            agg["si_sdr_improvement_db"] = agg["si_sdr_db"] - agg["si_sdr_unprocessed_db"]
            agg["count"] = len(rows)
            out[name] = agg
        return out

    def summary(self) -> dict:
        return {
            "region": self.region,
            "mode": self.mode,
            "rows": len(self.rows),
            "failed": len(self.failures),
            "aggregates": self.aggregates(),
            "metadata": self.metadata,
        }

    def write(self, out_dir, stem: str = "report") -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "rows": out_dir / f"{stem}.jsonl",
            "summary": out_dir / f"{stem}_summary.json",
            "table": out_dir / f"{stem}_table.txt",
        }
        with open(paths["rows"], "w", encoding="utf-8") as fh:
            for r in self.rows:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
        paths["summary"].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        paths["table"].write_text(self.table())
        return paths

    def table(self) -> str:
        """Plain-text table laid out like a stratified results table."""
        agg = self.aggregates()
        cols = [c for c in (*STRATA, "average") if c in agg]
        lines = [f"region={self.region} mode={self.mode}", "".ljust(14) + "".join(c.rjust(10) for c in cols)]
        for label, key in (("unprocessed", "si_sdr_unprocessed_db"), (self.mode, "si_sdr_db"),
                           ("improvement", "si_sdr_improvement_db")):
            lines.append(label.ljust(14) + "".join(f"{agg[c][key]:10.2f}" for c in cols))
        return "\n".join(lines) + "\n"


def evaluate(
    records: Sequence[dict],
    manifest_dir,
    cfg: StftConfig,
    params: NetworkParams | None = None,
    mode: str = "network",
    region: str = "post_anchor",
    jobs: int = 1,
    metadata: dict | None = None,
) -> ScoreReport:
    """Score every manifest record; failures become rows with an ``error`` field."""
    if mode not in MODES:
        raise GsepError(f"unknown mode {mode!r}; choose from {MODES}")
    if region not in REGIONS:
        raise GsepError(f"unknown region {region!r}; choose from {REGIONS}")
    if mode == "network" and params is None:
        raise GsepError("network mode needs a checkpoint")

    def one(rec):
        row = {"id": rec.get("id"), "gender_pair": rec.get("gender_pair")}
        try:
            mix = load_record_audio(rec, manifest_dir)
            row.update(score_mixture(mix, estimate_for(mix, mode, cfg, params), region))
        except (GsepError, OSError, KeyError, ValueError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            log.warning("row %s failed: %s", row["id"], row["error"])
        return row

    rows = _map(one, records, jobs)
    meta = {"metrics": METRIC_NOTES, "stft": cfg.to_dict()}
    meta.update(metadata or {})
    return ScoreReport(rows, region, mode, meta)


def _map(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def evaluate_mixtures(
    mixtures: Sequence[tuple[dict, Mixture]],
    cfg: StftConfig,
    params: NetworkParams | None = None,
    mode: str = "network",
    region: str = "post_anchor",
    jobs: int = 1,
) -> ScoreReport:
    """Like :func:`evaluate` but on in-memory mixtures (``(record, Mixture)`` pairs)."""

    def one(item):
        rec, mix = item
        row = {"id": rec.get("id"), "gender_pair": rec.get("gender_pair")}
        row.update(score_mixture(mix, estimate_for(mix, mode, cfg, params), region))
        return row

    return ScoreReport(_map(one, mixtures, jobs), region, mode, {"metrics": METRIC_NOTES})


def guide_length_sweep(
    params: NetworkParams | None,
    source,
    speaker_ids: Sequence[str],
    lengths: Sequence[float],
    count: int,
    seed: int,
    cfg: StftConfig,
    mode: str = "network",
    region: str = "post_anchor",
    jobs: int = 1,
    **draw_kwargs,
) -> list[dict]:
    """Mean scores per anchor length on test sets that differ only in anchor length.

    Each length reuses the same target, interferer and SNR draws; only the
    anchor clip is cut to a different duration.
    """
    if not lengths or min(lengths) <= 0:
        raise GsepError("anchor lengths must be positive")
    longest = max(lengths)
    base = draw_mixture_specs(source, speaker_ids, count, "test", seed, anchor_len=longest, **draw_kwargs)
    genders = source.speakers
    table = []
    for length in lengths:
        items = []
        for rec_seed, spec in base:
            spec_l = type(spec)(spec.target, spec.anchor, spec.interference, spec.snr_db, float(length), spec.seed)
            rec = {
                "id": f"sweep{rec_seed}",
                "gender_pair": _pair(genders, spec),
            }
            items.append((rec, build_mixture(spec_l, source.load)))
        report = evaluate_mixtures(items, cfg, params, mode, region, jobs)
        agg = report.aggregates()
        row = {"anchor_len_s": float(length)}
        for name in (*STRATA, "average"):
            row[name] = round(agg[name]["si_sdr_db"], 6) if name in agg else None
            row[f"{name}_unprocessed"] = round(agg[name]["si_sdr_unprocessed_db"], 6) if name in agg else None
        table.append(row)
    return table


def _pair(genders, spec) -> str:
    a, b = genders[spec.target.speaker_id], genders[spec.interference.speaker_id]
    return "F&M" if a != b else f"{a}&{b}"


def sweep_table_text(table: Sequence[dict]) -> str:
    cols = (*STRATA, "average")
    lines = ["anchor_s".ljust(10) + "".join(c.rjust(10) for c in cols)]
    for row in table:
        cells = "".join(("" if row[c] is None else f"{row[c]:.2f}").rjust(10) for c in cols)
        lines.append(f"{row['anchor_len_s']:<10.2f}" + cells)
    return "\n".join(lines) + "\n"


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
