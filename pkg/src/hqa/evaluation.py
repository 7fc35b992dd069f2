"""Accuracy scoring, latency statistics, run records and remote scoring.

Report tables mirror the three result tables of the method: per-category
answer accuracy (Yes/No/None/Other/Total), latency (mean/std/max/min) and
0-100 description scores with and without a reference description.
"""

from __future__ import annotations

import json
import logging
import statistics
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

import requests

from .kernels import levenshtein
from .labels import NONE, normalize_label
from .traversal import TraversalResult

log = logging.getLogger(__name__)

CATEGORIES = ("yes", "no", "none", "other")
DEFAULT_THRESHOLD = 0.85


class EvaluationError(ValueError):
    pass


# ----------------------------------------------------------------- judges


def similarity(a, b) -> float:
    """1 - edit distance / longer length, on normalized strings."""
    a, b = normalize_label(a), normalize_label(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


class ExactJudge:
    """Score 1 when the normalized strings are equal, else 0."""

    name = "exact"
    threshold = 1.0

    def score(self, question_text, ground_truth, predicted) -> float:
        return 1.0 if normalize_label(ground_truth) == normalize_label(predicted) else 0.0


class SimilarityJudge:
    """Normalized edit-distance similarity, correct at ``score >= threshold``."""

    name = "sim"

    def __init__(self, threshold=DEFAULT_THRESHOLD):
        if not 0.0 < threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        self.threshold = threshold

    def score(self, question_text, ground_truth, predicted) -> float:
        return similarity(ground_truth, predicted)


def similarity_judge(threshold=DEFAULT_THRESHOLD) -> SimilarityJudge:
    return SimilarityJudge(threshold)


def make_judge(name, threshold=None):
    if name == "exact":
        return ExactJudge()
    if name == "sim":
        return SimilarityJudge(DEFAULT_THRESHOLD if threshold is None else threshold)
    raise ValueError(f"unknown judge {name!r}")


def category_of(label) -> str:
    label = normalize_label(label)
    return label if label in ("yes", "no", NONE) else "other"


@dataclass
class CategoryAccuracy:
    correct: dict = field(default_factory=lambda: {c: 0 for c in CATEGORIES})
    total: dict = field(default_factory=lambda: {c: 0 for c in CATEGORIES})

    @property
    def overall_correct(self):
        return sum(self.correct.values())

    @property
    def overall_total(self):
        return sum(self.total.values())

    def percent(self, category=None):
        if category is None:
            c, t = self.overall_correct, self.overall_total
        else:
            c, t = self.correct[category], self.total[category]
        return 100.0 * c / t if t else None

    def rows(self):
        """(row name, correct, total, percent) in table order."""
        out = [(c.capitalize(), self.correct[c], self.total[c], self.percent(c)) for c in CATEGORIES]
        out.append(("Total", self.overall_correct, self.overall_total, self.percent()))
        return out

    def to_dict(self):
        return {name: {"correct": c, "total": t, "percent": None if p is None else round(p, 4)} for name, c, t, p in self.rows()}

    def render(self, title="Accuracy by answer category"):
        lines = [title, f"{'Answer Category':<16}{'Correct':>9}{'Total':>9}{'Accuracy (%)':>14}", "-" * 48]
        for name, c, t, p in self.rows():
            if name == "Total":
                lines.append("-" * 48)
            lines.append(f"{name:<16}{c:>9}{t:>9}{'n/a' if p is None else f'{p:.2f}':>14}")
        return "\n".join(lines)


def score_run(predictions, ground_truth, judge=None, threshold=None, questions=None) -> CategoryAccuracy:
    """Judge every (key -> prediction) against ground truth, bucketed by category.

    Keys are (frame_id, question_id). ``threshold`` defaults to the judge's
    own; ``questions`` optionally maps question ids to their text for judges
    that look at it.
    """
    if set(predictions) != set(ground_truth):
        missing = len(set(ground_truth) - set(predictions))
        extra = len(set(predictions) - set(ground_truth))
        raise EvaluationError(f"prediction keys do not match ground truth ({missing} missing, {extra} extra)")
    judge = judge or ExactJudge()
    thr = judge.threshold if threshold is None else threshold
    acc = CategoryAccuracy()
    questions = questions or {}
    for key, gt in ground_truth.items():
        cat = category_of(gt)
        acc.total[cat] += 1
        qid = key[1] if isinstance(key, tuple) else key
        if judge.score(questions.get(qid, qid), gt, predictions[key]) >= thr:
            acc.correct[cat] += 1
    return acc


# ---------------------------------------------------------------- latency


@dataclass(frozen=True)
class LatencyStats:
    mean: float
    std: float
    max: float
    min: float
    count: int

    @classmethod
    def from_row(cls, row: str, count=0):
        """Parse ``mean & std & max & min`` (a LaTeX table row)."""
        parts = [float(x) for x in row.replace("\\\\", "").split("&")]
        if len(parts) != 4:
            raise ValueError(f"expected 4 columns in {row!r}")
        return cls(*parts, count=count)

    def to_row(self, digits=0) -> str:
        return " & ".join(f"{v:.{digits}f}" for v in (self.mean, self.std, self.max, self.min))

    def to_dict(self):
        return {"mean_ms": self.mean, "std_ms": self.std, "max_ms": self.max, "min_ms": self.min, "count": self.count}


def latency_stats(samples) -> LatencyStats:
    """Mean, sample standard deviation (n-1), max and min of per-frame totals."""
    samples = [float(s) for s in samples]
    if not samples:
        raise EvaluationError("latency_stats needs at least one sample")
    std = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return LatencyStats(statistics.fmean(samples), std, max(samples), min(samples), len(samples))


# ------------------------------------------------------------ run records


@dataclass
class RunRecord:
    approach: str
    results: list
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def frames(self):
        return [r.frame_ref for r in self.results]

    def totals(self):
        return [r.total_elapsed for r in self.results]

    def asked_counts(self):
        return [r.asked_count for r in self.results]

    def predictions(self) -> dict:
        """(frame, question) -> answer; pruned questions predict "none"."""
        return {(r.frame_ref, q): a for r in self.results for q, a in r.answers().items()}

    def to_jsonl(self) -> str:
        lines = []
        for r in self.results:
            d = r.to_dict()
            d["approach"] = self.approach
            if self.seed is not None:
                d["seed"] = self.seed
            lines.append(json.dumps(d, sort_keys=True, ensure_ascii=False))
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text, approach=None):
        results, seed = [], None
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            approach = approach or d.get("approach")
            seed = d.get("seed", seed)
            results.append(TraversalResult.from_dict(d))
        return cls(approach or "external", results, seed)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())


def ground_truth_pairs(annotations) -> dict:
    return {(a.frame_id, q): lab for a in annotations for q, lab in a.answers.items()}


def compare_runs(run_a: RunRecord, run_b: RunRecord) -> dict:
    """Side-by-side latency and asked-count summary; ratio = mean_b / mean_a."""
    if sorted(run_a.frames) != sorted(run_b.frames):
        raise EvaluationError("runs cover different frame sets")
    la, lb = latency_stats(run_a.totals()), latency_stats(run_b.totals())
    return {
        "a": {"approach": run_a.approach, "latency": la.to_dict(), "asked_count": _asked_summary(run_a)},
        "b": {"approach": run_b.approach, "latency": lb.to_dict(), "asked_count": _asked_summary(run_b)},
        "ratio": lb.mean / la.mean if la.mean else None,
        "frames": len(run_a.frames),
    }


def _asked_summary(run):
    counts = run.asked_counts()
    return {
        "mean": statistics.fmean(counts),
        "min": min(counts),
        "max": max(counts),
        "histogram": {str(k): v for k, v in sorted(Counter(counts).items())},
    }


def render_latency_table(rows, title="Inference time comparison"):
    """``rows`` is a list of (approach name, LatencyStats)."""
    lines = [title, f"{'Approach':<22}{'Mean (ms)':>11}{'STD (ms)':>10}{'Max (ms)':>10}{'Min (ms)':>10}", "-" * 63]
    for name, s in rows:
        lines.append(f"{name:<22}{s.mean:>11.1f}{s.std:>10.1f}{s.max:>10.1f}{s.min:>10.1f}")
    return "\n".join(lines)


def render_description_scores(rows, title="Description scores (0-100)"):
    """``rows`` is a list of (model, score with GT, score without GT)."""
    lines = [title, f"{'Model':<24}{'Score with GT':>15}{'Score w/o GT':>14}", "-" * 53]
    for name, with_gt, without_gt in rows:
        fmt = lambda v: "n/a" if v is None else str(v)  # noqa: E731
        lines.append(f"{name:<24}{fmt(with_gt):>15}{fmt(without_gt):>14}")
    return "\n".join(lines)


# ------------------------------------------------------ remote scoring


class ScoreError(RuntimeError):
    pass


class ScoreTimeout(ScoreError):
    pass


class MalformedScore(ScoreError):
    pass


def load_prompt(name) -> str:
    return resources.files("hqa.data.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")


def build_score_prompt(image_ref, description, ground_truth=None, template=None) -> str:
    if template is None:
        template = load_prompt("score_without_gt" if ground_truth is None else "score_with_gt")
    # plain replace: the templates contain literal JSON braces
    return (
        template.replace("{image}", str(image_ref))
        .replace("{description}", description)
        .replace("{ground_truth}", "" if ground_truth is None else ground_truth)
    )


def remote_description_score(endpoint, image_ref, description, ground_truth=None, timeout_ms=30000.0, template=None, session=None) -> int:
    """Ask a remote scorer for a 0-100 score of ``description``."""
    body = {"prompt": build_score_prompt(image_ref, description, ground_truth, template), "image_ref": str(image_ref)}
    http = session or requests
    log.info("score request to %s: %s", endpoint, json.dumps(body))
    try:
        resp = http.post(endpoint, json=body, timeout=timeout_ms / 1000.0)
    except requests.Timeout:
        raise ScoreTimeout(f"scorer did not answer within {timeout_ms:g} ms") from None
    except requests.ConnectionError as exc:
        raise ScoreError(f"scorer unreachable: {exc}") from None
    log.info("score response %s: %s", resp.status_code, resp.text)
    if resp.status_code != 200:
        raise ScoreError(f"scorer returned HTTP {resp.status_code}")
    try:
        score = resp.json()["score"]
    except (ValueError, KeyError, TypeError):
        raise MalformedScore(f"no score in response {resp.text!r}") from None
    if isinstance(score, bool) or not isinstance(score, int):
        raise MalformedScore(f"score is not an integer: {score!r}")
    if not 0 <= score <= 100:
        raise MalformedScore(f"score out of range: {score}")
    return score
