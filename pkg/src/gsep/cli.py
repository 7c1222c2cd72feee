"""``gsep`` command line: mixgen, train, separate, evaluate, sweep.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
failure (including any failed evaluation row), 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from gsep import plots
from gsep.config import RunConfig, builtin_config
from gsep.datapipe.dataset import (
    CorpusSource,
    SyntheticSource,
    dataset_generate,
    load_record_audio,
    manifest_hash,
    read_manifest,
    speaker_overlap,
)
from gsep.datapipe.mixture import make_training_example
from gsep.datapipe.wavio import wav_read, wav_write
from gsep.dsp import Waveform, normalize, fit_norm_stats, stft
from gsep.errors import ConfigError, GsepError
from gsep.evaluation import (
    REGIONS,
    evaluate,
    file_digest,
    guide_length_sweep,
    separate,
    sweep_table_text,
)
from gsep.neuralnet.checkpoint import load_checkpoint, save_checkpoint
from gsep.neuralnet.train import TrainSequence, train

log = logging.getLogger("gsep")


def _source(cfg: RunConfig):
    if cfg.data.corpus_root is not None:
        src = CorpusSource(cfg.data.corpus_root, cfg.sample_rate)
        test = list(cfg.data.corpus_test_speakers)
        missing = set(test) - set(src.speakers)
        if missing:
            raise ConfigError(f"test speakers not in corpus: {sorted(missing)}")
        train_ids = sorted(set(src.speakers) - set(test))
        return src, train_ids, test
    src = SyntheticSource(cfg.data.train_profiles + cfg.data.test_profiles, cfg.sample_rate)
    return (
        src,
        [p.speaker_id for p in cfg.data.train_profiles],
        [p.speaker_id for p in cfg.data.test_profiles],
    )


def _check_checkpoint(params, cfg: RunConfig) -> None:
    if params.arch.input_dim != cfg.stft.n_bins:
        raise ConfigError(
            f"checkpoint expects {params.arch.input_dim} bins, config STFT gives {cfg.stft.n_bins}"
        )
    stored = params.meta.get("stft")
    if stored is not None and stored != cfg.stft.to_dict():
        raise ConfigError(f"checkpoint was trained with STFT {stored}, config has {cfg.stft.to_dict()}")


def cmd_mixgen(cfg: RunConfig, args) -> int:
    src, train_ids, test_ids = _source(cfg)
    if len(train_ids) < 2 or len(test_ids) < 2:
        raise ConfigError("need at least 2 training and 2 test speakers")
    split_speakers = {"train": train_ids, "valid": train_ids, "test": test_ids}
    records = {}
    for split in ("train", "valid", "test"):
        records[split] = dataset_generate(
            src,
            split_speakers[split],
            cfg.data.counts[split],
            split,
            cfg.seed,
            out_dir=cfg.path("data") / split,
            manifest_path=cfg.manifest(split),
            jobs=args.jobs,
            **cfg.data.draw_kwargs(split),
        )
        strata = Counter(r["gender_pair"] for r in records[split])
        print(f"{split}: {len(records[split])} mixtures  " + "  ".join(f"{k}={strata[k]}" for k in sorted(strata)))
    overlap = speaker_overlap(records["test"], records["train"] + records["valid"])
    if overlap:
        raise GsepError(f"test speakers leak into training data: {sorted(overlap)}")
    profiles = cfg.data.train_profiles + cfg.data.test_profiles
    if profiles:
        (cfg.path("manifests") / "speakers.json").write_text(
            json.dumps([p.to_dict() for p in profiles], indent=1, sort_keys=True) + "\n"
        )
    return 0


def _load_sequences(cfg: RunConfig, split: str):
    path = cfg.manifest(split)
    records = read_manifest(path)
    examples = []
    for rec in records:
        mix = load_record_audio(rec, path.parent)
        examples.append(
            make_training_example(mix.mixture, mix.target, cfg.stft, None, float(rec["anchor_len_s"]))
        )
    return records, examples


def _to_sequences(examples, stats, weighted: bool):
    return [
        TrainSequence(
            normalize(e.features.frames, stats).frames,
            e.psm_target.frames,
            e.mix_magnitude if weighted else None,
        )
        for e in examples
    ]


def cmd_train(cfg: RunConfig, args) -> int:
    ckpt = cfg.path("checkpoint")
    params = opt = None
    if args.resume:
        if not ckpt.exists():
            raise ConfigError(f"--resume given but {ckpt} does not exist")
        params, opt = load_checkpoint(ckpt, with_optimizer=True)
        _check_checkpoint(params, cfg)
        if params.arch != cfg.arch:
            raise ConfigError("checkpoint architecture differs from config; cannot resume")

    _, train_ex = _load_sequences(cfg, "train")
    _, valid_ex = _load_sequences(cfg, "valid")
    stats = params.norm_stats if params is not None and params.norm_stats is not None else \
        fit_norm_stats([e.features.frames for e in train_ex])
    weighted = cfg.arch.loss_weighting == "magnitude"
    train_set = _to_sequences(train_ex, stats, weighted)
    valid_set = _to_sequences(valid_ex, stats, weighted)
    print(f"training on {len(train_set)} mixtures, validating on {len(valid_set)}", flush=True)

    log_path = cfg.path("train_log")
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "a" if args.resume else "w", encoding="utf-8") as fh:
        def on_epoch(rec):
            fh.write(rec.line() + "\n")
            fh.flush()
            print(rec.line(), flush=True)

        result = train(train_set, valid_set, cfg.arch, cfg.optim, stats, params, opt, on_epoch)

    result.params.meta.update(
        {
            "config": cfg.name,
            "stft": cfg.stft.to_dict(),
            "seed": cfg.seed,
            "train_manifest_sha256": manifest_hash(cfg.manifest("train")),
        }
    )
    save_checkpoint(result.params, ckpt, result.optimizer)
    history = [vars(r) for r in result.history]
    reports = cfg.path("reports")
    reports.mkdir(parents=True, exist_ok=True)
    (reports / "train_history.json").write_text(json.dumps(history, indent=1) + "\n")
    plots.loss_curves(history, reports / "train_loss.png")
    print(f"best epoch {result.best_epoch} valid_mse={result.best_valid:.6f} -> {ckpt}")
    return 0


def cmd_separate(cfg: RunConfig, args) -> int:
    if not (args.mix and args.anchor and args.out):
        raise ConfigError("separate needs --mix, --anchor and --out")
    ckpt = Path(args.checkpoint) if args.checkpoint else cfg.path("checkpoint")
    params = load_checkpoint(ckpt)
    _check_checkpoint(params, cfg)
    mix = wav_read(args.mix, cfg.sample_rate)
    anchor = wav_read(args.anchor, cfg.sample_rate)
    guided = Waveform(np.concatenate([anchor.samples, mix.samples]), cfg.sample_rate)
    estimate, mask = separate(params, guided, cfg.stft)
    out = estimate if args.keep_full else Waveform(estimate.samples[len(anchor):], cfg.sample_rate)
    wav_write(args.out, out)
    if args.dump or args.figure:
        Y = stft(guided, cfg.stft)
        S_hat = stft(estimate, cfg.stft)
        if args.dump:
            Path(args.dump).parent.mkdir(parents=True, exist_ok=True)
            np.savez(args.dump, mask=mask, mixture_spec=Y.frames, estimate_spec=S_hat.frames,
                     anchor_samples=len(anchor))
        if args.figure:
            panels = [("mixture (anchor + two talkers)", Y.magnitude), ("mask", mask),
                      ("separated target", S_hat.magnitude)]
            plots.spectrogram_panels(panels, args.figure, cfg.sample_rate, cfg.stft.hop,
                                     anchor_s=anchor.duration)
    print(f"wrote {args.out} ({len(out)} samples)")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    manifest = Path(args.manifest) if args.manifest else cfg.manifest("test")
    records = read_manifest(manifest)
    mode = "oracle" if args.oracle else "identity" if args.identity else "network"
    params = None
    meta = {"manifest": str(manifest), "manifest_sha256": manifest_hash(manifest)}
    if mode == "network":
        ckpt = Path(args.checkpoint) if args.checkpoint else cfg.path("checkpoint")
        params = load_checkpoint(ckpt)
        _check_checkpoint(params, cfg)
        meta["checkpoint"] = str(ckpt)
        meta["checkpoint_sha256"] = file_digest(ckpt)
    report = evaluate(records, manifest.parent, cfg.stft, params, mode, args.region, args.jobs, meta)
    out_dir = Path(args.out) if args.out else cfg.path("reports")
    stem = f"eval_{mode}_{args.region}"
    paths = report.write(out_dir, stem)
    if report.ok_rows:
        plots.strata_bars(report.aggregates(), out_dir / f"{stem}.png", f"{mode}, {args.region}")
    print(report.table(), end="")
    print(f"rows -> {paths['rows']}\nsummary -> {paths['summary']}")
    if report.failures:
        print(f"{len(report.failures)} row(s) failed", file=sys.stderr)
        return 2
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    src, _, test_ids = _source(cfg)
    mode = "oracle" if args.oracle else "identity" if args.identity else "network"
    params = None
    if mode == "network":
        ckpt = Path(args.checkpoint) if args.checkpoint else cfg.path("checkpoint")
        params = load_checkpoint(ckpt)
        _check_checkpoint(params, cfg)
    kwargs = cfg.data.draw_kwargs()
    kwargs.pop("anchor_len")
    kwargs.pop("anchor_jitter")
    table = guide_length_sweep(
        params, src, test_ids, cfg.data.sweep_lengths_s, cfg.data.sweep_count, cfg.seed,
        cfg.stft, mode, args.region, args.jobs, **kwargs,
    )
    out_dir = Path(args.out) if args.out else cfg.path("reports")
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"sweep_{mode}_{args.region}"
    (out_dir / f"{stem}.json").write_text(json.dumps(table, indent=1, sort_keys=True) + "\n")
    cols = ["anchor_len_s", "F&M", "F&F", "M&M", "average"]
    with open(out_dir / f"{stem}.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in table:
            fh.write("\t".join("" if row[c] is None else f"{row[c]}" for c in cols) + "\n")
    plots.sweep_curve(table, out_dir / f"{stem}.png")
    print(sweep_table_text(table), end="")
    return 0


COMMANDS = {
    "mixgen": cmd_mixgen,
    "train": cmd_train,
    "separate": cmd_separate,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="JSON run config, or the name of a built-in one (toy, paper)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for generation/evaluation")
    common.add_argument("--workdir", default=None, help="override workdir (GSEP_WORKDIR also works)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gsep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("mixgen", parents=[common], help="generate train/valid/test mixtures")
    p = sub.add_parser("train", parents=[common], help="train the mask estimator")
    p.add_argument("--resume", action="store_true", help="continue from the configured checkpoint")
    p = sub.add_parser("separate", parents=[common], help="extract the anchor's speaker from a mixture")
    p.add_argument("--checkpoint")
    p.add_argument("--mix")
    p.add_argument("--anchor")
    p.add_argument("--out")
    p.add_argument("--keep-full", action="store_true", help="keep the anchor region in the output")
    p.add_argument("--dump", help="write mask and spectrograms to this .npz")
    p.add_argument("--figure", help="write a spectrogram figure to this image file")
    for name, helptext in (("evaluate", "score a manifest"), ("sweep", "anchor-length sweep")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--checkpoint")
        p.add_argument("--region", choices=REGIONS, default="post_anchor")
        group = p.add_mutually_exclusive_group()
        group.add_argument("--oracle", action="store_true", help="use the ideal PSM instead of the network")
        group.add_argument("--identity", action="store_true", help="use an all-ones mask")
        p.add_argument("--out", help="report directory (default: <workdir>/reports)")
        if name == "evaluate":
            p.add_argument("--manifest", help="manifest to score (default: test split)")
    return parser


def _resolve_config(name: str) -> Path:
    path = Path(name)
    if path.exists() or path.suffix:
        return path
    return builtin_config(name)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = RunConfig.load(_resolve_config(args.config), seed=args.seed, workdir=args.workdir)
        return COMMANDS[args.command](cfg, args)
    except GsepError as exc:
        print(f"gsep {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"gsep {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
