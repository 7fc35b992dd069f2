"""Command-line entry point: ``hqa <command> ...``.

Exit codes: 0 success, 2 bad configuration, 3 data error, 4 network error,
5 validation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .answerers import (
    AnswererError,
    LatencyModel,
    OracleAnswerer,
    RemoteAnswerer,
    RemoteError,
    RetryPolicy,
    ScriptedAnswerer,
    load_script,
)
from .dataset import (
    DatasetError,
    SplitPlan,
    check_consistency,
    dataset_stats,
    generate_synthetic_dataset,
    load_annotations,
    load_plan,
    save_annotations,
    split_dataset,
    table_i_mix,
    tune_gate_pass,
)
from .evaluation import (
    EvaluationError,
    RunRecord,
    ScoreError,
    compare_runs,
    ground_truth_pairs,
    latency_stats,
    make_judge,
    remote_description_score,
    render_description_scores,
    render_latency_table,
    score_run,
)
from .forest import ForestError, dump_forest, forest_stats, load_forest, synthetic_forest, validate_forest
from .synthesis import synthesize
from .traversal import LENIENT, STRICT, FakeClock, MonotonicClock, TraversalError, traverse

log = logging.getLogger("hqa")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NETWORK = 4
EXIT_VALIDATION = 5

DEFAULT_COST_MODEL = "constant:1573/41"
MODES = {"hier": "hierarchical", "hierarchical": "hierarchical", "flat": "flat"}


class ConfigError(Exception):
    pass


def derive_seed(seed, label) -> int:
    """Independent 32-bit seed for one named consumer of the run seed."""
    digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunConfig:
    forest: str
    dataset: str | None
    answerer: str
    endpoint: str | None
    mode: str
    judge: str
    threshold: float | None
    seed: int
    cost_model: str
    noise: float
    workers: int
    clock: str
    lenient: bool
    out: str | None

    @classmethod
    def from_args(cls, args):
        endpoint = os.environ.get("HQA_ENDPOINT") or getattr(args, "endpoint", None)
        cfg = cls(
            forest=args.forest,
            dataset=getattr(args, "dataset", None),
            answerer=getattr(args, "answerer", "oracle"),
            endpoint=endpoint,
            mode=MODES[getattr(args, "mode", "hier")],
            judge=getattr(args, "judge", "exact"),
            threshold=getattr(args, "threshold", None),
            seed=args.seed,
            cost_model=getattr(args, "cost_model", DEFAULT_COST_MODEL),
            noise=getattr(args, "noise", 0.0),
            workers=max(1, getattr(args, "workers", 1)),
            clock=getattr(args, "clock", "fake"),
            lenient=getattr(args, "lenient", False),
            out=getattr(args, "out", None),
        )
        for p in (cfg.forest, cfg.dataset):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"no such file: {p}")
        if cfg.answerer == "remote" and not cfg.endpoint:
            raise ConfigError("--answerer remote needs --endpoint or HQA_ENDPOINT")
        if cfg.answerer == "scripted" and not getattr(args, "script", None):
            raise ConfigError("--answerer scripted needs --script")
        return cfg

    def summary(self) -> dict:
        """Config echo for reports: file digests instead of machine-specific paths."""
        d = asdict(self)
        d.pop("out")
        d["forest"] = {"name": Path(self.forest).name, "sha256": _digest(self.forest)}
        if self.dataset:
            d["dataset"] = {"name": Path(self.dataset).name, "sha256": _digest(self.dataset)}
        if self.answerer != "remote":
            d.pop("endpoint")
        return d


# ---------------------------------------------------------------- wiring


def _load(cfg, need_dataset=True):
    forest = load_forest(cfg.forest)
    annotations = None
    if need_dataset:
        if not cfg.dataset:
            raise ConfigError("--dataset is required")
        annotations = load_annotations(cfg.dataset, forest)
        issues = check_consistency(forest, annotations)
        if issues:
            log.warning("%d none-propagation inconsistencies in %s (first: %s)", len(issues), cfg.dataset, issues[0])
    return forest, annotations


def _answerer(cfg, args, annotations):
    try:
        latency = LatencyModel.parse(cfg.cost_model)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.answerer == "oracle":
        return OracleAnswerer(annotations, cfg.noise, latency, derive_seed(cfg.seed, "oracle"))
    if cfg.answerer == "scripted":
        return ScriptedAnswerer(load_script(args.script), latency, derive_seed(cfg.seed, "scripted"))
    policy = RetryPolicy(retries=args.retries)
    return RemoteAnswerer(cfg.endpoint, args.timeout_ms, policy, max_in_flight=max(cfg.workers, 1))


def _clock_factory(cfg):
    if cfg.clock == "fake":
        return FakeClock
    shared = MonotonicClock()
    return lambda: shared


def run_frames(forest, answerer, frames, approach, cfg, seed=None) -> RunRecord:
    make_clock = _clock_factory(cfg)
    mode = LENIENT if cfg.lenient else STRICT

    def one(frame):
        return traverse(forest, answerer, frame, clock=make_clock(), approach=approach, mode=mode)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(one, frames))
    else:
        results = [one(f) for f in frames]
    return RunRecord(approach, results, seed)


def _out_dir(cfg):
    if not cfg.out:
        return None
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


# -------------------------------------------------------------- commands


def cmd_validate(args):
    try:
        forest = load_forest(args.forest)
    except ForestError as exc:
        print(f"invalid forest: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    violations = validate_forest(forest)
    for v in violations:
        print(f"violation: {v}")
    stats = forest_stats(forest)
    print(json.dumps(stats, sort_keys=True))
    return EXIT_VALIDATION if violations else EXIT_OK


def cmd_infer(args):
    cfg = RunConfig.from_args(args)
    forest, annotations = _load(cfg, need_dataset=cfg.answerer == "oracle" or cfg.dataset is not None)
    if annotations is not None and args.frame not in {a.frame_id for a in annotations}:
        print(f"unknown frame {args.frame!r}", file=sys.stderr)
        return EXIT_DATA
    answerer = _answerer(cfg, args, annotations)
    run = run_frames(forest, answerer, [args.frame], cfg.mode, cfg, cfg.seed)
    result = run.results[0]
    for r in result.records:
        print(f"{r.order_index:>3}  {r.question_id:<20} {r.status:<7} {r.answer:<20} {r.elapsed:9.2f} ms")
    print(f"asked_count={result.asked_count} total_elapsed_ms={result.total_elapsed:.2f}")
    print(synthesize(forest, result).rendered)
    out = _out_dir(cfg)
    if out:
        run.save(out / f"infer_{cfg.mode}_{args.frame}.jsonl")
    return EXIT_OK


def cmd_bench(args):
    cfg = RunConfig.from_args(args)
    forest, annotations = _load(cfg)
    frames = [a.frame_id for a in annotations] * max(1, args.repetitions)
    runs = {}
    for approach in ("flat", "hierarchical"):
        answerer = _answerer(cfg, args, annotations)
        runs[approach] = run_frames(forest, answerer, frames, approach, cfg, cfg.seed)
    cmp = compare_runs(runs["flat"], runs["hierarchical"])
    stats = {k: latency_stats(r.totals()) for k, r in runs.items()}
    summary = {
        "command": "bench",
        "config": cfg.summary(),
        "repetitions": args.repetitions,
        "table_iii": {
            "Baseline (flat)": stats["flat"].to_dict(),
            "Hierarchical": stats["hierarchical"].to_dict(),
        },
        "asked_count": {"flat": cmp["a"]["asked_count"], "hierarchical": cmp["b"]["asked_count"]},
        "speedup_ratio": cmp["ratio"],
    }
    text = render_latency_table([("Baseline (flat)", stats["flat"]), ("Hierarchical", stats["hierarchical"])])
    text += f"\nmean asked: flat {cmp['a']['asked_count']['mean']:.2f}, hierarchical {cmp['b']['asked_count']['mean']:.2f}"
    text += f"\nratio hierarchical/flat = {cmp['ratio']:.4f}"
    # template synthesis is timed apart from traversal, on the wall clock, so
    # it stays out of the machine-readable summary
    t0 = time.perf_counter()
    for r in runs["hierarchical"].results:
        synthesize(forest, r)
    per_frame = (time.perf_counter() - t0) * 1000 / max(1, len(frames))
    text += f"\nsynthesis (not included above): {per_frame:.3f} ms/frame wall clock"
    print(text)
    out = _out_dir(cfg)
    if out:
        _write_json(out / "bench_summary.json", summary)
        (out / "bench_report.txt").write_text(text + "\n", encoding="utf-8")
        for k, r in runs.items():
            r.save(out / f"run_{k}.jsonl")
    return EXIT_OK


def cmd_eval(args):
    cfg = RunConfig.from_args(args)
    forest, annotations = _load(cfg)
    answerer = _answerer(cfg, args, annotations)
    run = run_frames(forest, answerer, [a.frame_id for a in annotations], cfg.mode, cfg, cfg.seed)
    judge = make_judge(cfg.judge, cfg.threshold)
    questions = {q: forest.nodes[q].text for q in forest.order}
    acc = score_run(run.predictions(), ground_truth_pairs(annotations), judge, cfg.threshold, questions)
    stats = latency_stats(run.totals())
    summary = {
        "command": "eval",
        "config": cfg.summary(),
        "approach": cfg.mode,
        "judge": {"name": judge.name, "threshold": judge.threshold if cfg.threshold is None else cfg.threshold},
        "table_ii": acc.to_dict(),
        "latency": stats.to_dict(),
    }
    text = acc.render(f"Accuracy by answer category ({cfg.mode}, judge={judge.name})")
    print(text)
    out = _out_dir(cfg)
    if out:
        _write_json(out / "eval_summary.json", summary)
        (out / "eval_report.txt").write_text(text + "\n", encoding="utf-8")
        run.save(out / f"run_{cfg.mode}.jsonl")
    return EXIT_OK


def cmd_split(args):
    forest = load_forest(args.forest)
    annotations = load_annotations(args.dataset, forest)
    plan = load_plan(args.plan) if args.plan else SplitPlan.table_i()
    split = split_dataset(annotations, plan, args.seed, node_count=len(forest))
    stats = split.stats()
    stats["seed"] = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "train.txt").write_text("".join(f"{f}\n" for f in split.train), encoding="utf-8")
    (out / "val.txt").write_text("".join(f"{f}\n" for f in split.val), encoding="utf-8")
    _write_json(out / "split_stats.json", stats)
    print(f"train: {len(split.train)} frames, {split.train_qa_pairs} QA pairs")
    print(f"val:   {len(split.val)} frames, {split.val_qa_pairs} QA pairs")
    return EXIT_OK


def cmd_stats(args):
    forest = load_forest(args.forest)
    annotations = load_annotations(args.dataset, forest)
    stats = dataset_stats(annotations, forest)
    stats["consistency_violations"] = len(check_consistency(forest, annotations))
    print(json.dumps(stats, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_gen_forest(args):
    forest = synthetic_forest(args.nodes, args.roots, args.branching, args.categorical_roots)
    text = dump_forest(forest)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_mix(text):
    if text == "table1":
        return table_i_mix()
    mix = {}
    for part in text.split(","):
        name, _, w = part.partition("=")
        mix[name.strip()] = float(w or 1)
    return mix


def cmd_gen_dataset(args):
    forest = load_forest(args.forest)
    if args.target_asked is not None:
        p = tune_gate_pass(forest, args.target_asked)
        print(f"gate-pass probability {p:.6f} for target asked-count {args.target_asked}", file=sys.stderr)
    else:
        p = args.gate_pass
    annotations = generate_synthetic_dataset(forest, args.frames, _parse_mix(args.mix), p, derive_seed(args.seed, "synth"))
    save_annotations(args.out, annotations, forest)
    return EXIT_OK


def cmd_score(args):
    endpoint = os.environ.get("HQA_ENDPOINT") or args.endpoint
    if not endpoint:
        raise ConfigError("--endpoint or HQA_ENDPOINT is required")
    with_gt = remote_description_score(endpoint, args.image, args.description, args.ground_truth, args.timeout_ms) if args.ground_truth else None
    without_gt = remote_description_score(endpoint, args.image, args.description, None, args.timeout_ms)
    print(render_description_scores([(args.model_name, with_gt, without_gt)]))
    print(json.dumps({"table_iv": {args.model_name: {"score_with_gt": with_gt, "score_without_gt": without_gt}}}, sort_keys=True))
    return EXIT_OK


def cmd_stub_server(args):
    from .stub_server import StubBehavior, StubServer

    answers = json.loads(Path(args.answers).read_text(encoding="utf-8")) if args.answers else {}
    server = StubServer(StubBehavior(answers=answers, score=args.score, delay_ms=args.delay_ms), port=args.port)
    print(f"stub listening on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.httpd.server_close()
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _run_flags(p, dataset_required=True):
    p.add_argument("--forest", required=True)
    p.add_argument("--dataset", required=dataset_required)
    p.add_argument("--answerer", choices=("oracle", "scripted", "remote"), default="oracle")
    p.add_argument("--script", help="JSON {frame: {question: label}} for --answerer scripted")
    p.add_argument("--endpoint", help="remote answerer base URL (HQA_ENDPOINT overrides)")
    p.add_argument("--timeout-ms", type=float, default=2000.0)
    p.add_argument("--retries", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0, help="oracle label-noise rate")
    p.add_argument("--cost-model", default=DEFAULT_COST_MODEL, help="constant:MS | gaussian:MEAN,STD | empirical:MS,...")
    p.add_argument("--clock", choices=("fake", "real"), default="fake")
    p.add_argument("--lenient", action="store_true", help="coerce out-of-domain answers instead of failing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")


def build_parser():
    parser = argparse.ArgumentParser(prog="hqa", description="Gated question-forest inference for driving scenes.")
    parser.add_argument("--version", action="version", version=f"hqa {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a forest config")
    p.add_argument("--forest", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("infer", help="traverse one frame and print its description")
    _run_flags(p, dataset_required=False)
    p.add_argument("--frame", required=True)
    p.add_argument("--mode", choices=("hier", "flat"), default="hier")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="latency of hierarchical vs flat traversal")
    _run_flags(p)
    p.add_argument("--repetitions", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="per-category answer accuracy")
    _run_flags(p)
    p.add_argument("--mode", choices=("hier", "flat"), default="hier")
    p.add_argument("--judge", choices=("exact", "sim"), default="exact")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("split", help="scenario-stratified train/val split")
    p.add_argument("--forest", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--plan", help="CSV scenario,frames,train_fraction (default: built-in Table I plan)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("stats", help="dataset statistics and consistency count")
    p.add_argument("--forest", required=True)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen-forest", help="write a synthetic forest config")
    p.add_argument("--nodes", type=int, default=41)
    p.add_argument("--roots", type=int, default=6)
    p.add_argument("--branching", type=int, default=2)
    p.add_argument("--categorical-roots", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_forest)

    p = sub.add_parser("gen-dataset", help="write consistent synthetic annotations")
    p.add_argument("--forest", required=True)
    p.add_argument("--frames", type=int, default=465)
    p.add_argument("--mix", default="table1", help="'table1' or name=weight,...")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gate-pass", type=float, default=0.5)
    g.add_argument("--target-asked", type=float, help="tune the gate-pass probability to this mean asked-count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("score", help="score a description with a remote 0-100 scorer")
    p.add_argument("--endpoint")
    p.add_argument("--image", required=True)
    p.add_argument("--description", required=True)
    p.add_argument("--ground-truth")
    p.add_argument("--model-name", default="Hierarchical QA")
    p.add_argument("--timeout-ms", type=float, default=30000.0)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("stub-server", help="run the reference answer/score stub")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--answers", help="JSON {question_id: answer}")
    p.add_argument("--score", type=int, default=65)
    p.add_argument("--delay-ms", type=float, default=0.0)
    p.set_defaults(func=cmd_stub_server)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ForestError as exc:
        print(f"invalid forest: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RemoteError, ScoreError) as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except TraversalError as exc:
        if isinstance(exc.__cause__, RemoteError):
            print(f"network error: {exc}", file=sys.stderr)
            return EXIT_NETWORK
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DatasetError, EvaluationError, AnswererError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
