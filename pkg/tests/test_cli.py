import json
import re

import numpy as np
import pytest

from gsep import cli
from gsep.datapipe import wav_read, wav_write
from gsep.dsp import Waveform
from gsep.errors import DivergenceError
from gsep.neuralnet import load_checkpoint

TINY = {
    "name": "tiny",
    "seed": 3,
    "arch": {"lstm_sizes": [8], "dense_size": 16, "dropout": 0.0, "loss_weighting": "magnitude"},
    "optim": {"lr": 0.003, "epochs": 2, "patience": 5, "batch_size": 4},
    "data": {
        "speakers": {"train": {"female": 2, "male": 2}, "test": {"female": 1, "male": 1}, "seed": 1},
        "counts": {"train": 8, "valid": 3, "test": 4},
        "duration_s": [0.6, 0.9],
        "anchor_len_s": 0.4,
        "sweep_lengths_s": [0.2, 0.4],
        "sweep_count": 4,
    },
}


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    wd = root / "work"
    assert run("mixgen", "--config", cfg, "--workdir", wd) == 0
    assert run("train", "--config", cfg, "--workdir", wd) == 0
    return cfg, wd


def test_mixgen_outputs(workspace):
    _, wd = workspace
    for split, n in (("train", 8), ("valid", 3), ("test", 4)):
        lines = (wd / "manifests" / f"{split}.jsonl").read_text().splitlines()
        assert len(lines) == n
        rec = json.loads(lines[0])
        assert (wd / "manifests" / rec["mix_wav"]).exists()
    test_spk = {json.loads(l)["target_speaker"] for l in (wd / "manifests" / "test.jsonl").read_text().splitlines()}
    train_spk = {json.loads(l)["target_speaker"] for l in (wd / "manifests" / "train.jsonl").read_text().splitlines()}
    assert not test_spk & train_spk


def test_mixgen_idempotent(workspace, tmp_path):
    cfg, wd = workspace
    assert run("mixgen", "--config", cfg, "--workdir", tmp_path) == 0
    for split in ("train", "valid", "test"):
        a = (wd / "manifests" / f"{split}.jsonl").read_bytes()
        assert a == (tmp_path / "manifests" / f"{split}.jsonl").read_bytes()


def test_train_log_and_artifacts(workspace):
    _, wd = workspace
    lines = (wd / "train_log.txt").read_text().splitlines()
    assert len(lines) == 3
    pattern = re.compile(r"^epoch=(\d+) train_mse=[0-9.]+ valid_mse=[0-9.]+$")
    assert [int(pattern.match(l).group(1)) for l in lines] == [0, 1, 2]
    assert (wd / "reports" / "train_loss.png").stat().st_size > 0
    params = load_checkpoint(wd / "checkpoints" / "best.gsep")
    assert params.arch.lstm_sizes == (8,) and params.norm_stats is not None
    assert params.meta["config"] == "tiny"


def test_resume_appends_and_counts_steps(workspace, tmp_path):
    cfg, wd = workspace
    import shutil
    work = tmp_path / "w"
    shutil.copytree(wd, work)
    _, opt0 = load_checkpoint(work / "checkpoints" / "best.gsep", with_optimizer=True)
    assert run("train", "--config", cfg, "--workdir", work, "--resume") == 0
    _, opt1 = load_checkpoint(work / "checkpoints" / "best.gsep", with_optimizer=True)
    assert opt1.step_count > opt0.step_count
    assert len((work / "train_log.txt").read_text().splitlines()) == 6


def test_resume_without_checkpoint(workspace, tmp_path):
    cfg, _ = workspace
    assert run("train", "--config", cfg, "--workdir", tmp_path, "--resume") == 1


def test_separate(workspace, tmp_path):
    cfg, wd = workspace
    rec = json.loads((wd / "manifests" / "test.jsonl").read_text().splitlines()[0])
    full = wav_read(wd / "manifests" / rec["mix_wav"])
    n_a = int(round(rec["anchor_len_s"] * 8000))
    wav_write(tmp_path / "mix.wav", Waveform(full.samples[n_a:]))
    out1, out2 = tmp_path / "a.wav", tmp_path / "b.wav"
    args = ["separate", "--config", cfg, "--workdir", wd, "--mix", tmp_path / "mix.wav",
            "--anchor", wd / "manifests" / rec["anchor_wav"]]
    assert run(*args, "--out", out1, "--dump", tmp_path / "d.npz", "--figure", tmp_path / "f.png") == 0
    assert run(*args, "--out", out2) == 0
    assert len(wav_read(out1)) == len(full) - n_a
    assert out1.read_bytes() == out2.read_bytes()
    dump = np.load(tmp_path / "d.npz")
    assert dump["mask"].shape[1] == 129 and dump["mask"].min() >= 0
    assert (tmp_path / "f.png").stat().st_size > 0


def test_separate_rejects_wrong_rate(workspace, tmp_path):
    import wave
    cfg, wd = workspace
    with wave.open(str(tmp_path / "hi.wav"), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(44100)
        fh.writeframes(np.zeros(100, "<i2").tobytes())
    code = run("separate", "--config", cfg, "--workdir", wd, "--mix", tmp_path / "hi.wav",
               "--anchor", tmp_path / "hi.wav", "--out", tmp_path / "o.wav")
    assert code == 2 and not (tmp_path / "o.wav").exists()


@pytest.mark.parametrize("flag", ["--oracle", "--identity", None])
def test_evaluate_modes(workspace, tmp_path, flag):
    cfg, wd = workspace
    extra = [flag] if flag else []
    assert run("evaluate", "--config", cfg, "--workdir", wd, "--out", tmp_path, *extra) == 0
    mode = (flag or "--network")[2:]
    summary = json.loads((tmp_path / f"eval_{mode}_post_anchor_summary.json").read_text())
    assert summary["rows"] == 4 and summary["failed"] == 0
    assert len(summary["metadata"]["manifest_sha256"]) == 64
    assert (tmp_path / f"eval_{mode}_post_anchor.png").exists()
    if flag == "--identity":
        agg = summary["aggregates"]["average"]
        assert abs(agg["si_sdr_db"] - agg["si_sdr_unprocessed_db"]) <= 0.01


def test_evaluate_regions_share_ids(workspace, tmp_path):
    cfg, wd = workspace
    ids = []
    for region in ("part1", "part2"):
        assert run("evaluate", "--config", cfg, "--workdir", wd, "--out", tmp_path, "--region", region) == 0
        rows = (tmp_path / f"eval_network_{region}.jsonl").read_text().splitlines()
        ids.append([json.loads(r)["id"] for r in rows])
    assert ids[0] == ids[1]


def test_evaluate_failed_row_exits_2(workspace, tmp_path):
    cfg, wd = workspace
    lines = (wd / "manifests" / "test.jsonl").read_text().splitlines()
    bad = json.loads(lines[1])
    bad["mix_wav"] = "nope.wav"
    manifest = wd / "manifests" / "broken.jsonl"
    manifest.write_text(lines[0] + "\n" + json.dumps(bad) + "\n")
    assert run("evaluate", "--config", cfg, "--workdir", wd, "--manifest", manifest,
               "--oracle", "--out", tmp_path) == 2
    rows = (tmp_path / "eval_oracle_post_anchor.jsonl").read_text().splitlines()
    assert len(rows) == 2 and "error" in json.loads(rows[1])


def test_sweep(workspace, tmp_path):
    cfg, wd = workspace
    assert run("sweep", "--config", cfg, "--workdir", wd, "--out", tmp_path) == 0
    table = json.loads((tmp_path / "sweep_network_post_anchor.json").read_text())
    assert [r["anchor_len_s"] for r in table] == [0.2, 0.4]
    tsv = (tmp_path / "sweep_network_post_anchor.tsv").read_text().splitlines()
    assert tsv[0].split("\t") == ["anchor_len_s", "F&M", "F&F", "M&M", "average"]
    assert (tmp_path / "sweep_network_post_anchor.png").exists()


@pytest.mark.parametrize("patch", [
    {"sample_rate": 16000},
    {"arch": {"input_dim": 257}},
    {"bogus": 1},
    {"data": {"profiles": {"train": [], "test": []}}},
    {"optim": {"lr": -1}},
])
def test_bad_config_exits_1_without_side_effects(tmp_path, patch):
    cfg = dict(TINY, **patch)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    wd = tmp_path / "work"
    assert run("mixgen", "--config", path, "--workdir", wd) == 1
    assert not wd.exists()


def test_overlapping_profiles_rejected(tmp_path):
    prof = {"speaker_id": "s1", "gender": "F", "f0_range": [180, 230],
            "formants": [[600, 90], [1700, 120], [2800, 170]]}
    other = dict(prof, speaker_id="s2")
    cfg = dict(TINY, data={"profiles": {"train": [prof, other], "test": [prof, other]}})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert run("mixgen", "--config", path, "--workdir", tmp_path / "w") == 1


def test_usage_errors():
    assert run("mixgen") == 1
    assert run("frobnicate", "--config", "toy") == 1
    assert run("mixgen", "--config", "no_such_config") == 1


def test_divergence_exit_code(workspace, tmp_path, monkeypatch):
    cfg, wd = workspace

    def boom(*a, **k):
        raise DivergenceError("diverged: loss nan at epoch 1")

    monkeypatch.setattr(cli, "train", boom)
    assert run("train", "--config", cfg, "--workdir", wd) == 3


def test_builtin_configs_validate():
    from gsep.config import RunConfig, builtin_config
    for name in ("toy", "paper"):
        cfg = RunConfig.load(builtin_config(name))
        test_ids = {p.speaker_id for p in cfg.data.test_profiles}
        assert test_ids and not test_ids & {p.speaker_id for p in cfg.data.train_profiles}


def test_voice_perturb_config():
    from gsep.config import RunConfig
    cfg = RunConfig.from_dict(dict(TINY, data=dict(TINY["data"], voice_perturb={"pitch": 0.2, "tract": 0.1})))
    assert cfg.data.draw_kwargs("train")["perturb"] == (0.2, 0.1)
    assert "perturb" not in cfg.data.draw_kwargs("test")
    with pytest.raises(Exception):
        RunConfig.from_dict(dict(TINY, data=dict(TINY["data"], voice_perturb={"pitch": 2})))
