import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsep.datapipe import SyntheticSource, dataset_generate
from gsep.dsp import StftConfig
from gsep.errors import GsepError
from gsep.evaluation import (
    DB_CAP,
    ScoreReport,
    evaluate,
    guide_length_sweep,
    region_bounds,
    scaled_sdr,
    si_sdr,
    sweep_table_text,
)

CFG = StftConfig()


def test_si_sdr_known_values(rng):
    s = rng.standard_normal(4000)
    assert si_sdr(s, s) == DB_CAP
    assert si_sdr(3.0 * s, s) == DB_CAP
    # orthogonal noise of equal energy -> 0 dB
    n = rng.standard_normal(4000)
    n -= np.dot(n, s) / np.dot(s, s) * s
    n *= np.linalg.norm(s) / np.linalg.norm(n)
    assert si_sdr(s + n, s) == pytest.approx(0.0, abs=1e-9)
    assert si_sdr(s + 0.1 * n, s) == pytest.approx(20.0, abs=1e-9)
    assert si_sdr(np.zeros(4000), s) == -DB_CAP


def test_scaled_sdr_known_values(rng):
    s = rng.standard_normal(2000)
    n = rng.standard_normal(2000)
    n -= np.dot(n, s) / np.dot(s, s) * s
    n *= 0.1 * np.linalg.norm(s) / np.linalg.norm(n)
    # rescaling the estimate by e/|e|^2 projection: ref energy / residual energy
    e = s + n
    a = np.dot(e, s) / np.dot(e, e)
    expected = 10 * np.log10(np.dot(s, s) / np.sum((s - a * e) ** 2))
    assert scaled_sdr(e, s) == pytest.approx(expected, abs=1e-9)
    assert scaled_sdr(np.zeros(2000), s) == -DB_CAP


def test_metric_errors():
    with pytest.raises(GsepError):
        si_sdr(np.ones(3), np.ones(4))
    with pytest.raises(GsepError):
        si_sdr(np.ones(3), np.zeros(3))


@settings(max_examples=40)
@given(st.floats(0.01, 100), st.integers(0, 1000))
def test_si_sdr_scale_invariant(scale, seed):
    r = np.random.default_rng(seed)
    s, e = r.standard_normal(500), r.standard_normal(500)
    assert si_sdr(scale * e, s) == pytest.approx(si_sdr(e, s), abs=1e-8)


@settings(max_examples=30)
@given(st.floats(0.0, 1.0), st.integers(0, 1000))
def test_more_noise_lowers_si_sdr(frac, seed):
    r = np.random.default_rng(seed)
    s, n = r.standard_normal(800), r.standard_normal(800)
    assert si_sdr(s + frac * n, s) >= si_sdr(s + (frac + 0.5) * n, s) - 1e-9


@given(st.integers(1, 100_000), st.integers(0, 120_000))
def test_regions_partition_post_anchor(n, a):
    lo1, hi1 = region_bounds(n, a, "part1")
    lo2, hi2 = region_bounds(n, a, "part2")
    lo, hi = region_bounds(n, a, "post_anchor")
    assert (lo1, hi2) == (lo, hi) and hi1 == lo2
    assert (hi2 - lo2) - (hi1 - lo1) in (0, 1)
    assert region_bounds(n, a, "full") == (0, n)


def test_unknown_region():
    with pytest.raises(GsepError):
        region_bounds(10, 2, "middle")


@pytest.fixture(scope="module")
def small_set(tmp_path_factory, four_speakers):
    root = tmp_path_factory.mktemp("eval")
    src = SyntheticSource(four_speakers)
    ids = [p.speaker_id for p in four_speakers]
    recs = dataset_generate(src, ids, 12, "test", 3, root / "wav", root / "test.jsonl")
    return src, ids, recs, root


def test_identity_mode_reproduces_unprocessed(small_set):
    _, _, recs, root = small_set
    rep = evaluate(recs, root, CFG, mode="identity")
    assert not rep.failures
    for row in rep.rows:
        assert abs(row["si_sdr_db"] - row["si_sdr_unprocessed_db"]) <= 0.01


def test_oracle_mode_beats_unprocessed(small_set):
    _, _, recs, root = small_set
    agg = evaluate(recs, root, CFG, mode="oracle").aggregates()
    for name, a in agg.items():
        assert a["si_sdr_db"] > a["si_sdr_unprocessed_db"] + 3.0, name
    assert agg["average"]["count"] == 12


def test_part_regions_share_rows(small_set):
    _, _, recs, root = small_set
    p1 = evaluate(recs, root, CFG, mode="oracle", region="part1")
    p2 = evaluate(recs, root, CFG, mode="oracle", region="part2")
    assert [r["id"] for r in p1.rows] == [r["id"] for r in p2.rows]
    for a, b in zip(p1.rows, p2.rows):
        assert a["region_end"] == b["region_start"]


def test_failed_row_is_recorded(small_set, tmp_path):
    _, _, recs, root = small_set
    broken = [dict(recs[0]), dict(recs[1], mix_wav="missing.wav")]
    rep = evaluate(broken, root, CFG, mode="identity")
    assert len(rep.failures) == 1 and "error" in rep.rows[1]
    paths = rep.write(tmp_path, "r")
    summary = json.loads(paths["summary"].read_text())
    assert summary["failed"] == 1 and summary["rows"] == 2
    lines = paths["rows"].read_text().splitlines()
    assert len(lines) == 2


def test_network_mode_needs_params(small_set):
    _, _, recs, root = small_set
    with pytest.raises(GsepError):
        evaluate(recs, root, CFG, mode="network")


def test_report_table_and_means():
    rows = [
        {"id": "a", "gender_pair": "F&M", "si_sdr_db": 4.0, "sdr_db": 4.0,
         "si_sdr_unprocessed_db": 1.0, "sdr_unprocessed_db": 1.0},
        {"id": "b", "gender_pair": "F&M", "si_sdr_db": 6.0, "sdr_db": 5.0,
         "si_sdr_unprocessed_db": 2.0, "sdr_unprocessed_db": 2.0},
        {"id": "c", "gender_pair": "M&M", "si_sdr_db": 0.0, "sdr_db": 0.0,
         "si_sdr_unprocessed_db": 0.0, "sdr_unprocessed_db": 0.0},
    ]
    rep = ScoreReport(rows, "post_anchor", "network")
    agg = rep.aggregates()
    assert agg["F&M"]["si_sdr_db"] == 5.0 and agg["F&M"]["si_sdr_improvement_db"] == 3.5
    assert agg["average"]["si_sdr_db"] == pytest.approx(10 / 3)
    assert "F&F" not in agg
    assert "improvement" in rep.table()


def test_sweep_shape_and_determinism(small_set):
    src, ids, _, _ = small_set
    a = guide_length_sweep(None, src, ids, [0.4, 1.0], 6, 0, CFG, mode="oracle")
    b = guide_length_sweep(None, src, ids, [0.4, 1.0], 6, 0, CFG, mode="oracle")
    assert a == b
    assert [r["anchor_len_s"] for r in a] == [0.4, 1.0]
    # same targets and interferers: unprocessed post-anchor scores do not depend on anchor length
    assert a[0]["average_unprocessed"] == pytest.approx(a[1]["average_unprocessed"], abs=0.5)
    text = sweep_table_text(a)
    assert text.splitlines()[0].split()[0] == "anchor_s" and len(text.splitlines()) == 3
