"""Acceptance suite: one verdict line per criterion, printed in the terminal summary."""

import json
import random
import time
from pathlib import Path

import pytest

from hqa.answerers import (
    LatencyModel,
    MalformedResponse,
    OracleAnswerer,
    RemoteAnswerer,
    RemoteConnectionError,
    RemoteStatusError,
    RemoteTimeout,
    RetryPolicy,
)
from hqa.cli import main
from hqa.dataset import SplitPlan, generate_synthetic_dataset, split_dataset, table_i_mix, tune_gate_pass
from hqa.evaluation import (
    MalformedScore,
    RunRecord,
    compare_runs,
    ground_truth_pairs,
    remote_description_score,
    score_run,
    similarity_judge,
)
from hqa.forest import AnswerDomain, dump_forest, synthetic_forest
from hqa.synthesis import read_golden, synthesize
from hqa.traversal import FakeClock, pruned_set, traverse_flat, traverse_hierarchical

from conftest import random_answers, random_forest
from oracles import pruned_by_ancestors

pytestmark = pytest.mark.acceptance

GOLDEN = Path(__file__).parent / "golden" / "demo_descriptions.tsv"
COST = LatencyModel.constant(1573 / 41)


class Replay:
    """Answers straight from a dict, at a fixed cost per question."""

    def __init__(self, answers, ms=0.0):
        self.answers, self.ms = answers, ms

    def answer(self, frame_ref, text, qid, domain):
        return self.answers[qid], self.ms


def test_1_split_arithmetic(forest41, verdict):
    t0 = time.perf_counter()
    data = generate_synthetic_dataset(forest41, 465, table_i_mix(), 0.5, seed=0)
    split = split_dataset(data, SplitPlan.table_i(), seed=0, node_count=len(forest41))
    spent = time.perf_counter() - t0
    got = (len(split.train), len(split.val), split.train_qa_pairs, split.val_qa_pairs)
    verdict(1, got == (366, 99, 15006, 4059) and spent < 1.0, f"train/val frames {got[0]}/{got[1]}, QA pairs {got[2]}/{got[3]}, {spent * 1000:.0f} ms")


def test_2_latency_calibration(forest41, verdict):
    t0 = time.perf_counter()
    p = tune_gate_pass(forest41, 11.0)
    data = generate_synthetic_dataset(forest41, 1000, gate_pass=p, seed=0)
    runs = {}
    for approach, fn in (("flat", traverse_flat), ("hierarchical", traverse_hierarchical)):
        oracle = OracleAnswerer(data, 0.0, COST, seed=0)
        runs[approach] = RunRecord(approach, [fn(forest41, oracle, a.frame_id, FakeClock()) for a in data])
    spent = time.perf_counter() - t0
    cmp = compare_runs(runs["flat"], runs["hierarchical"])
    flat, hier = cmp["a"]["latency"]["mean_ms"], cmp["b"]["latency"]["mean_ms"]
    ok = abs(flat - 1573) <= 0.5 and 400 <= hier <= 445 and 0.25 <= cmp["ratio"] <= 0.29 and spent < 10
    verdict(2, ok, f"flat {flat:.2f} ms, hierarchical {hier:.2f} ms, ratio {cmp['ratio']:.4f}, 1000 frames in {spent:.2f} s")


def test_3_pruning_soundness(verdict):
    n_forests, bad, biggest = 1000, [], 0
    for seed in range(n_forests):
        rng = random.Random(seed)
        forest = random_forest(rng, max_nodes=500)
        biggest = max(biggest, len(forest))
        answers = random_answers(rng, forest)
        hier = traverse_hierarchical(forest, Replay(answers), "f", FakeClock())
        flat = traverse_flat(forest, Replay(answers), "f", FakeClock())
        ids = set(forest.order)
        if not (
            hier.pruned == pruned_by_ancestors(forest, answers) == pruned_set(forest, answers)
            and hier.asked | hier.pruned == ids
            and not hier.asked & hier.pruned
            and hier.asked_count <= flat.asked_count
        ):
            bad.append(seed)
    verdict(3, not bad, f"{n_forests} random forests (up to {biggest} nodes), {len(bad)} counterexamples")


def test_4_consistency_equivalence(forest41, verdict):
    mismatches = frames = 0
    forests = [forest41, synthetic_forest(10, 3), synthetic_forest(120, 8, branching=3), synthetic_forest(500, 20)]
    for i, forest in enumerate(forests):
        for p in (0.0, 0.3, 0.7, 1.0):
            data = generate_synthetic_dataset(forest, 25, gate_pass=p, seed=i)
            oracle = OracleAnswerer(data)
            for a in data:
                h = synthesize(forest, traverse_hierarchical(forest, oracle, a.frame_id, FakeClock())).rendered
                f = synthesize(forest, traverse_flat(forest, oracle, a.frame_id, FakeClock())).rendered
                frames += 1
                mismatches += h != f
    data = generate_synthetic_dataset(forest41, 465, table_i_mix(), tune_gate_pass(forest41, 11.0), seed=3)
    oracle = OracleAnswerer(data)
    run = RunRecord("hierarchical", [traverse_hierarchical(forest41, oracle, a.frame_id, FakeClock()) for a in data])
    acc = score_run(run.predictions(), ground_truth_pairs(data))
    per_cat = {name: p for name, _, t, p in acc.rows() if t}
    ok = mismatches == 0 and len(per_cat) == 5 and all(p == 100.0 for p in per_cat.values())
    cats = ", ".join(f"{k} {v:.0f}%" for k, v in per_cat.items())
    verdict(4, ok, f"{frames} frames, {mismatches} description mismatches; zero-noise accuracy {cats}")


def test_4_random_forests_outside_forced_answers(verdict):
    """Random forests template arbitrary labels, so flat mode can add text on a
    pruned question; outside the oracle-forced answers the sentences agree."""
    mismatches = frames = 0
    for s in range(30):
        forest = random_forest(random.Random(1000 + s), max_nodes=80)
        data = generate_synthetic_dataset(forest, 10, gate_pass=0.5, seed=s)
        for a in data:
            oracle = OracleAnswerer(data)
            hier = traverse_hierarchical(forest, oracle, a.frame_id, FakeClock())
            flat = traverse_flat(forest, oracle, a.frame_id, FakeClock())
            forced = {e.question_id for e in oracle.events}
            h = [x.question_id for x in synthesize(forest, hier).sources]
            f = [x.question_id for x in synthesize(forest, flat).sources if x.question_id not in forced]
            frames += 1
            mismatches += h != f
    verdict(4, mismatches == 0, f"random forests: {frames} frames, {mismatches} mismatches outside oracle-forced answers")


def test_5_judge_behavior(forest41, verdict):
    j = similarity_judge(0.85)
    yes_ok = j.score("", "yes", "Yes.") >= j.threshold
    left_bad = j.score("", "left", "right") < j.threshold
    data = generate_synthetic_dataset(forest41, 200, gate_pass=0.5, seed=11)
    oracle = OracleAnswerer(data, noise_rate=0.3, seed=11)
    run = RunRecord("hierarchical", [traverse_hierarchical(forest41, oracle, a.frame_id, FakeClock()) for a in data])
    pred, gt = run.predictions(), ground_truth_pairs(data)
    sweep = [score_run(pred, gt, similarity_judge(t)).percent() for t in (0.5, 0.7, 0.85, 0.95)]
    monotone = all(a >= b for a, b in zip(sweep, sweep[1:]))
    detail = f"(yes, Yes.) correct={yes_ok}, (left, right) incorrect={left_bad}, sweep " + " >= ".join(f"{x:.2f}" for x in sweep)
    verdict(5, yes_ok and left_bad and monotone, detail)


def test_6_template_regression(demo, demo_ann, verdict):
    oracle = OracleAnswerer(demo_ann)
    got = {a.frame_id: synthesize(demo, traverse_hierarchical(demo, oracle, a.frame_id, FakeClock())).rendered for a in demo_ann}
    expected = "The ego vehicle is moving on a curved road. The ego vehicle is approaching an intersection."
    verdict(6, got == read_golden(GOLDEN) and got["f1"] == expected, f"f1 -> {got['f1']!r}")


def test_7_determinism(forest41, tmp_path, verdict):
    forest = tmp_path / "forest.yaml"
    forest.write_text(dump_forest(forest41), encoding="utf-8")
    data = tmp_path / "ann.csv"
    assert main(["gen-dataset", "--forest", str(forest), "--frames", "200", "--target-asked", "11", "--seed", "5", "--out", str(data)]) == 0
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        common = ["--forest", str(forest), "--dataset", str(data), "--seed", "42", "--noise", "0.2", "--cost-model", "gaussian:38.37,8"]
        assert main(["bench", *common, "--out", str(out / "bench")]) == 0
        assert main(["eval", *common, "--out", str(out / "eval")]) == 0
        outputs.append({str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.suffix in (".json", ".jsonl")})
    same = outputs[0] == outputs[1]
    verdict(7, same and len(outputs[0]) == 5, f"{len(outputs[0])} machine-readable files compared, identical={same}")


def test_8_remote_boundary(stub, verdict):
    checks = {}
    binary = AnswerDomain.binary()
    stub.behavior.answers = {"q": "Yes"}
    checks["round trip"] = RemoteAnswerer(stub.url).answer("f", "q?", "q", binary)[0] == "yes"

    stub.behavior.delay_ms = 300
    t0 = time.perf_counter()
    try:
        RemoteAnswerer(stub.url, timeout_ms=80, retry=RetryPolicy(retries=0)).answer("f", "q?", "q", binary)
        checks["timeout"] = False
    except RemoteTimeout as exc:
        checks["timeout"] = exc.question_id == "q" and time.perf_counter() - t0 < 0.25
    stub.behavior.delay_ms = 0

    raised = set()
    stub.behavior.status = 503
    for make in (
        lambda: RemoteAnswerer(stub.url, retry=RetryPolicy(retries=0)),
        lambda: RemoteAnswerer("http://127.0.0.1:9", retry=RetryPolicy(retries=0)),
    ):
        try:
            make().answer("f", "q?", "q", binary)
        except (RemoteStatusError, RemoteConnectionError) as exc:
            raised.add(type(exc))
    stub.behavior.status = 200
    stub.behavior.malformed = True
    try:
        RemoteAnswerer(stub.url).answer("f", "q?", "q", binary)
    except MalformedResponse as exc:
        raised.add(type(exc))
    stub.behavior.malformed = False
    checks["error classes"] = raised == {RemoteStatusError, RemoteConnectionError, MalformedResponse}

    score_url = stub.url + "/v1/score"
    stub.behavior.score = 65
    in_range = remote_description_score(score_url, "img", "A car.") == 65
    rejected = 0
    for bad in (101, -1, 65.5):
        stub.behavior.score = bad
        try:
            remote_description_score(score_url, "img", "A car.")
        except MalformedScore:
            rejected += 1
    checks["score range"] = in_range and rejected == 3
    verdict(8, all(checks.values()), ", ".join(f"{k}={'ok' if v else 'FAILED'}" for k, v in checks.items()))


def test_2_cli_bench_matches_library(forest41, tmp_path):
    """The CLI bench path reports the same calibration as the library path."""
    forest = tmp_path / "forest.yaml"
    forest.write_text(dump_forest(forest41), encoding="utf-8")
    data = tmp_path / "ann.csv"
    main(["gen-dataset", "--forest", str(forest), "--frames", "1000", "--target-asked", "11", "--out", str(data)])
    assert main(["bench", "--forest", str(forest), "--dataset", str(data), "--out", str(tmp_path / "b")]) == 0
    s = json.loads((tmp_path / "b" / "bench_summary.json").read_text())
    assert s["table_iii"]["Baseline (flat)"]["mean_ms"] == pytest.approx(1573, abs=0.5)
    assert 0.25 <= s["speedup_ratio"] <= 0.29
