import json

import pytest
import requests

from hqa.answerers import LatencyModel, OracleAnswerer
from hqa.dataset import generate_synthetic_dataset
from hqa.evaluation import (
    EvaluationError,
    ExactJudge,
    LatencyStats,
    MalformedScore,
    RunRecord,
    ScoreError,
    ScoreTimeout,
    build_score_prompt,
    category_of,
    compare_runs,
    ground_truth_pairs,
    latency_stats,
    make_judge,
    remote_description_score,
    render_latency_table,
    score_run,
    similarity,
    similarity_judge,
)
from hqa.traversal import FakeClock, traverse_flat, traverse_hierarchical


def test_similarity_judge_examples():
    j = similarity_judge(0.85)
    assert j.score("", "yes", "Yes.") >= j.threshold
    assert j.score("", "left", "right") < j.threshold
    assert similarity("", "") == 1.0
    assert similarity("abc", "") == 0.0


def test_exact_judge():
    j = ExactJudge()
    assert j.score("", "yes", " YES ") == 1.0
    assert j.score("", "yes", "yeah") == 0.0


def test_make_judge():
    assert make_judge("exact").name == "exact"
    assert make_judge("sim", 0.7).threshold == 0.7
    with pytest.raises(ValueError):
        make_judge("gpt")
    with pytest.raises(ValueError):
        similarity_judge(0.0)


@pytest.mark.parametrize("label, cat", [("yes", "yes"), ("No", "no"), ("none", "none"), ("left", "other"), ("kind a", "other")])
def test_category_of(label, cat):
    assert category_of(label) == cat


def test_score_run_by_category():
    gt = {("f", "a"): "yes", ("f", "b"): "no", ("f", "c"): "none", ("f", "d"): "left"}
    pred = {("f", "a"): "yes", ("f", "b"): "yes", ("f", "c"): "none", ("f", "d"): "left"}
    acc = score_run(pred, gt)
    assert acc.percent() == 75.0
    assert acc.percent("no") == 0.0
    assert acc.percent("other") == 100.0
    assert [r[0] for r in acc.rows()] == ["Yes", "No", "None", "Other", "Total"]
    assert acc.to_dict()["Total"] == {"correct": 3, "total": 4, "percent": 75.0}


def test_score_run_empty_category_is_na():
    acc = score_run({("f", "a"): "yes"}, {("f", "a"): "yes"})
    assert acc.percent("other") is None
    assert "n/a" in acc.render()


def test_score_run_key_mismatch():
    with pytest.raises(EvaluationError, match="1 missing"):
        score_run({}, {("f", "a"): "yes"})


def test_latency_stats():
    s = latency_stats([1, 2, 3, 4])
    assert s.mean == 2.5
    assert s.std == pytest.approx(1.2909944487)  # sample std, n-1
    assert (s.max, s.min, s.count) == (4, 1, 4)
    assert latency_stats([5]).std == 0.0
    with pytest.raises(EvaluationError):
        latency_stats([])


def test_latency_row_round_trip():
    row = "423 & 171 & 899 & 309"
    s = LatencyStats.from_row(row)
    assert (s.mean, s.std, s.max, s.min) == (423, 171, 899, 309)
    assert s.to_row() == row
    assert LatencyStats.from_row("1573 & 24 & 2137 & 1555 \\\\").to_row() == "1573 & 24 & 2137 & 1555"


def test_render_latency_table():
    text = render_latency_table([("Hierarchical", LatencyStats(423, 171, 899, 309, 0))])
    assert "Hierarchical" in text and "423.0" in text


def _runs(forest, n=30, noise=0.0, seed=0):
    data = generate_synthetic_dataset(forest, n, gate_pass=0.5, seed=seed)
    lat = LatencyModel.constant(10)
    hier = RunRecord("hierarchical", [traverse_hierarchical(forest, OracleAnswerer(data, noise, lat, seed), a.frame_id, FakeClock()) for a in data], seed)
    flat = RunRecord("flat", [traverse_flat(forest, OracleAnswerer(data, noise, lat, seed), a.frame_id, FakeClock()) for a in data], seed)
    return data, hier, flat


def test_run_record_round_trip(forest41, tmp_path):
    _, hier, _ = _runs(forest41, 5)
    hier.save(tmp_path / "run.jsonl")
    again = RunRecord.load(tmp_path / "run.jsonl")
    assert again.to_jsonl() == hier.to_jsonl()
    line = json.loads(hier.to_jsonl().splitlines()[0])
    assert set(line) >= {"frame_ref", "approach", "records", "asked_count", "total_elapsed_ms"}


def test_compare_runs(forest41):
    _, hier, flat = _runs(forest41)
    cmp = compare_runs(flat, hier)
    assert cmp["a"]["latency"]["mean_ms"] == pytest.approx(410.0)
    assert cmp["ratio"] == pytest.approx(cmp["b"]["latency"]["mean_ms"] / 410.0)
    assert cmp["b"]["asked_count"]["max"] <= 41
    with pytest.raises(EvaluationError):
        compare_runs(flat, RunRecord("x", hier.results[:3]))


def test_zero_noise_is_perfect(forest41):
    data, hier, _ = _runs(forest41)
    acc = score_run(hier.predictions(), ground_truth_pairs(data))
    assert acc.percent() == 100.0
    assert all(p in (None, 100.0) for _, _, _, p in acc.rows())


def test_threshold_monotone(forest41):
    data, hier, _ = _runs(forest41, 60, noise=0.3, seed=5)
    pred, gt = hier.predictions(), ground_truth_pairs(data)
    accs = [score_run(pred, gt, similarity_judge(t)).percent() for t in (0.5, 0.7, 0.85, 0.95)]
    assert accs == sorted(accs, reverse=True)
    assert accs[-1] < 100.0


# ------------------------------------------------------------ remote score


def test_score_prompt_contains_inputs():
    p = build_score_prompt("img.png", "A car.", "Two cars.")
    assert "img.png" in p and "A car." in p and "Two cars." in p
    assert "{description}" not in build_score_prompt("img.png", "A car.")


def test_remote_score_ok(stub):
    stub.behavior.score = 65
    assert remote_description_score(stub.url + "/v1/score", "img", "A car.", "Two cars.") == 65
    stub.behavior.score = 79
    assert remote_description_score(stub.url + "/v1/score", "img", "A car.") == 79
    path, body = stub.behavior.requests[-1]
    assert path == "/v1/score" and "A car." in body["prompt"]


@pytest.mark.parametrize("bad", [101, -1, 65.5, "65", True, None])
def test_remote_score_rejects_invalid(stub, bad):
    stub.behavior.score = bad
    with pytest.raises(MalformedScore):
        remote_description_score(stub.url + "/v1/score", "img", "A car.")


def test_remote_score_malformed_body(stub):
    stub.behavior.malformed = True
    with pytest.raises(MalformedScore):
        remote_description_score(stub.url + "/v1/score", "img", "A car.")


def test_remote_score_status_and_timeout(stub):
    stub.behavior.status = 500
    with pytest.raises(ScoreError, match="HTTP 500"):
        remote_description_score(stub.url + "/v1/score", "img", "A car.")
    stub.behavior.status = 200
    stub.behavior.delay_ms = 300
    with pytest.raises(ScoreTimeout):
        remote_description_score(stub.url + "/v1/score", "img", "A car.", timeout_ms=50)


def test_remote_score_unreachable():
    with pytest.raises(ScoreError):
        remote_description_score("http://127.0.0.1:9/v1/score", "img", "x", timeout_ms=500, session=requests.Session())
