"""Frame annotations: loading, none-propagation checks, splits and synthesis.

Annotation files are wide: one row per frame with columns ``frame_id``,
``image_ref``, ``scenario`` followed by one column per question id. CSV
(``.csv``/``.tsv``) and JSON lines (``.jsonl``) are both accepted.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .forest import Forest
from .kernels import ASKED, prune_status
from .labels import NONE, normalize_label

META_COLUMNS = ("frame_id", "image_ref", "scenario")

TABLE_I_SCENARIOS = (
    "comprehensive_area_exploration",
    "unprotected_left_turn",
    "pedestrian_on_the_road",
    "vehicle_blocking_the_road",
    "merging_traffic",
)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class FrameAnnotation:
    frame_id: str
    image_ref: str
    scenario: str
    answers: dict

    def row(self, forest: Forest):
        return [self.frame_id, self.image_ref, self.scenario] + [self.answers[q] for q in forest.order]


@dataclass(frozen=True)
class ConsistencyViolation:
    frame_id: str
    question_id: str
    kind: str
    label: str

    def __str__(self):
        if self.kind == "expected-none":
            return f"{self.frame_id}: expected none at {self.question_id} (got {self.label!r})"
        return f"{self.frame_id}: unexpected none at {self.question_id}"


@dataclass(frozen=True)
class SplitRow:
    scenario: str
    frames: int
    train_fraction: float


@dataclass(frozen=True)
class SplitPlan:
    rows: tuple[SplitRow, ...]

    def __post_init__(self):
        for r in self.rows:
            if not 0.0 <= r.train_fraction <= 1.0:
                raise DatasetError(f"train fraction for {r.scenario} must be in [0, 1]")
            if r.frames < 0:
                raise DatasetError(f"frame count for {r.scenario} must be >= 0")

    @classmethod
    def from_rows(cls, rows):
        return cls(tuple(SplitRow(s, int(n), float(f)) for s, n, f in rows))

    @classmethod
    def table_i(cls):
        return load_plan(resources.files("hqa.data").joinpath("table1_plan.csv"))

    def __iter__(self):
        return iter(self.rows)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    node_count: int
    per_scenario: dict = field(default_factory=dict)

    @property
    def train_qa_pairs(self):
        return len(self.train) * self.node_count

    @property
    def val_qa_pairs(self):
        return len(self.val) * self.node_count

    def stats(self) -> dict:
        return {
            "train_frames": len(self.train),
            "val_frames": len(self.val),
            "train_qa_pairs": self.train_qa_pairs,
            "val_qa_pairs": self.val_qa_pairs,
            "node_count": self.node_count,
            "per_scenario": self.per_scenario,
        }


# ---------------------------------------------------------------- loading


def _rows_from_file(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        header = list(rows[0]) if rows else []
        return header, rows
    delim = "\t" if path.suffix == ".tsv" else ","
    reader = csv.DictReader(io.StringIO(text), delimiter=delim)
    return list(reader.fieldnames or []), list(reader)


def load_annotations(path, forest: Forest) -> list[FrameAnnotation]:
    header, rows = _rows_from_file(path)
    return annotations_from_rows(header, rows, forest)


def annotations_from_rows(header, rows, forest: Forest) -> list[FrameAnnotation]:
    for col in META_COLUMNS:
        if col not in header:
            raise DatasetError(f"missing column {col!r}")
    for q in forest.order:
        if q not in header:
            raise DatasetError(f"missing question column {q!r}")
    out = []
    seen = set()
    for lineno, row in enumerate(rows, 2):
        fid = str(row["frame_id"]).strip()
        if not fid:
            raise DatasetError(f"row {lineno}: empty frame_id")
        if fid in seen:
            raise DatasetError(f"duplicate frame_id {fid!r}")
        seen.add(fid)
        answers = {}
        for q in forest.order:
            lab = normalize_label(row[q])
            if lab != NONE and lab not in forest.nodes[q].domain:
                raise DatasetError(f"frame {fid}: unknown label {row[q]!r} for question {q!r}")
            answers[q] = lab
        out.append(FrameAnnotation(fid, str(row.get("image_ref") or ""), str(row.get("scenario") or ""), answers))
    return out


def dump_annotations(annotations, forest: Forest, fmt="csv") -> str:
    if fmt == "jsonl":
        lines = []
        for a in annotations:
            d = {"frame_id": a.frame_id, "image_ref": a.image_ref, "scenario": a.scenario}
            d.update((q, a.answers[q]) for q in forest.order)
            lines.append(json.dumps(d, ensure_ascii=False))
        return "\n".join(lines) + ("\n" if lines else "")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(META_COLUMNS) + list(forest.order))
    for a in annotations:
        w.writerow(a.row(forest))
    return buf.getvalue()


def save_annotations(path, annotations, forest):
    fmt = "jsonl" if str(path).endswith(".jsonl") else "csv"
    Path(path).write_text(dump_annotations(annotations, forest, fmt), encoding="utf-8")


def demo_annotations(forest: Forest):
    with resources.as_file(resources.files("hqa.data").joinpath("demo_annotations.csv")) as p:
        return load_annotations(p, forest)


# ------------------------------------------------------------ consistency


def expected_status(forest: Forest, annotations) -> np.ndarray:
    """frames x nodes ASKED/PRUNED matrix implied by each frame's own labels."""
    cf = forest.compiled()
    codes = np.stack([cf.encode(a.answers) for a in annotations]) if annotations else np.zeros((0, len(cf.ids)), np.int64)
    status, _ = prune_status(cf.parent, cf.gate_mask, codes)
    return status


def check_consistency(forest: Forest, annotations) -> list[ConsistencyViolation]:
    """Every label that disagrees with none-propagation over the frame's own answers."""
    cf = forest.compiled()
    status = expected_status(forest, annotations)
    out = []
    for r, a in enumerate(annotations):
        for i, q in enumerate(cf.ids):
            lab = a.answers[q]
            reachable = status[r, i] == ASKED
            if not reachable and lab != NONE:
                out.append(ConsistencyViolation(a.frame_id, q, "expected-none", lab))
            elif reachable and lab == NONE:
                out.append(ConsistencyViolation(a.frame_id, q, "unexpected-none", lab))
    return out


# ---------------------------------------------------------------- splits


def load_plan(path) -> SplitPlan:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return SplitPlan.from_rows((r["scenario"].strip(), r["frames"], r["train_fraction"]) for r in rows)
    except KeyError as exc:
        raise DatasetError(f"plan file missing column {exc}") from None


def split_dataset(annotations, plan: SplitPlan, seed=0, node_count=None) -> DatasetSplit:
    """Per-scenario train/val split; train gets floor(frames x fraction) frames."""
    if node_count is None:
        node_count = len(annotations[0].answers) if annotations else 0
    by_scenario = {}
    for a in annotations:
        by_scenario.setdefault(a.scenario, []).append(a.frame_id)
    planned = {r.scenario: r for r in plan}
    unknown = sorted(set(by_scenario) - set(planned))
    if unknown:
        raise DatasetError(f"scenarios not in plan: {unknown}")

    train, val, per = [], [], {}
    for row in plan:
        ids = by_scenario.get(row.scenario, [])
        if len(ids) != row.frames:
            raise DatasetError(f"scenario {row.scenario!r}: plan expects {row.frames} frames, dataset has {len(ids)}")
        # the tiny epsilon keeps 0.8 * 60 from flooring to 47
        k = math.floor(row.frames * row.train_fraction + 1e-9)
        rng = random.Random(f"{seed}:split:{row.scenario}")
        picked = set(rng.sample(range(len(ids)), k))
        tr = [f for i, f in enumerate(ids) if i in picked]
        va = [f for i, f in enumerate(ids) if i not in picked]
        train.extend(tr)
        val.extend(va)
        per[row.scenario] = {"frames": row.frames, "train": len(tr), "val": len(va)}
    return DatasetSplit(tuple(train), tuple(val), node_count, per)


def dataset_stats(annotations, forest: Forest) -> dict:
    n = len(forest.order)
    hist = Counter()
    per = Counter()
    for a in annotations:
        per[a.scenario] += 1
        hist.update(a.answers.values())
    return {
        "frames": len(annotations),
        "node_count": n,
        "qa_pairs": len(annotations) * n,
        "per_scenario": dict(sorted(per.items())),
        "label_histogram": dict(sorted(hist.items())),
    }


# -------------------------------------------------------------- synthetic


def _allocate(mix, n):
    """Largest-remainder allocation of ``n`` frames over weighted scenarios."""
    names = list(mix)
    total = float(sum(mix.values()))
    if total <= 0:
        raise DatasetError("scenario mix weights must sum to > 0")
    raw = [mix[s] * n / total for s in names]
    counts = [math.floor(x) for x in raw]
    order = sorted(range(len(names)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return dict(zip(names, counts))


def _passing_labels(node):
    opens = set()
    for e in node.children:
        opens |= e.gate
    return [lab for lab in node.domain.labels if lab in opens]


def generate_synthetic_dataset(forest: Forest, n_frames, scenario_mix=None, gate_pass=0.5, seed=0) -> list[FrameAnnotation]:
    """Consistent-by-construction annotations.

    For each reachable node with children, the answer opens at least one child
    gate with probability ``gate_pass`` (a float, or a mapping question id ->
    probability), and opens none otherwise. Unreachable nodes get "none".
    Scenarios are assigned in blocks following ``scenario_mix``.
    """
    if scenario_mix is None:
        scenario_mix = {TABLE_I_SCENARIOS[0]: 1}
    counts = _allocate(scenario_mix, n_frames)
    scenarios = [s for s, c in counts.items() for _ in range(c)]

    def p_for(q):
        p = gate_pass.get(q, 0.5) if isinstance(gate_pass, dict) else gate_pass
        if not 0.0 <= p <= 1.0:
            raise DatasetError("gate-pass probabilities must be in [0, 1]")
        return p

    passing = {q: _passing_labels(forest.nodes[q]) for q in forest.order}
    failing = {q: [lab for lab in forest.nodes[q].domain.labels if lab not in passing[q]] for q in forest.order}
    probs = {q: p_for(q) for q in forest.order}

    out = []
    width = max(4, len(str(n_frames - 1)))
    for f in range(n_frames):
        rng = random.Random(f"{seed}:synth:{f}")
        answers = {}
        reach = {r: True for r in forest.roots}
        for q in forest.order:
            node = forest.nodes[q]
            if not reach.get(q, False):
                answers[q] = NONE
                for e in node.children:
                    reach[e.child] = False
                continue
            if not node.children:
                lab = rng.choice(node.domain.labels)
            else:
                pool = passing[q] if rng.random() < probs[q] else failing[q]
                lab = rng.choice(pool or passing[q] or failing[q])
            answers[q] = lab
            for e in node.children:
                reach[e.child] = lab in e.gate
        fid = f"s{f:0{width}d}"
        out.append(FrameAnnotation(fid, f"synthetic/{fid}.png", scenarios[f], answers))
    return out


def expected_asked_count(forest: Forest, gate_pass: float) -> float:
    """Mean hierarchical asked-count under ``generate_synthetic_dataset``.

    Exact when every parent's children share one gate (as in the synthetic
    forest): a node at depth d is reached with probability gate_pass**(d-1).
    """
    return float(sum(gate_pass ** (forest.depth(q) - 1) for q in forest.order))


def tune_gate_pass(forest: Forest, target_asked: float, tol=1e-10) -> float:
    """Bisect the uniform gate-pass probability hitting ``target_asked``."""
    lo, hi = 0.0, 1.0
    if not expected_asked_count(forest, lo) <= target_asked <= expected_asked_count(forest, hi):
        raise DatasetError(f"target asked-count {target_asked} is outside the reachable range")
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if expected_asked_count(forest, mid) < target_asked:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def table_i_mix():
    return {r.scenario: r.frames for r in SplitPlan.table_i()}
