"""Hierarchical (gated) and flat question traversal.

Both traversals walk the forest in canonical preorder and ask questions one
at a time. The hierarchical walk stops descending as soon as a parent answer
falls outside a child's gate; every node below is recorded as pruned with the
answer "none", zero elapsed time and no answerer call.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .forest import Forest
from .kernels import ASKED, prune_status
from .labels import NONE, normalize_label

STRICT = "strict"
LENIENT = "lenient"


class MonotonicClock:
    """Wall clock in milliseconds."""

    def now(self) -> float:
        return time.perf_counter() * 1000.0

    def wait(self, ms: float) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)


class FakeClock:
    """Manual clock: time moves only through ``wait``/``advance``."""

    def __init__(self, start=0.0):
        self.t = float(start)

    def now(self) -> float:
        return self.t

    def wait(self, ms: float) -> None:
        if ms > 0:
            self.t += ms

    advance = wait


class TraversalError(RuntimeError):
    def __init__(self, question_id, message, frame_ref=None):
        self.question_id = question_id
        self.frame_ref = frame_ref
        super().__init__(f"{message} (question {question_id}, frame {frame_ref})")


class AnswerOutOfDomain(TraversalError):
    pass


class MissingAnswer(ValueError):
    def __init__(self, question_id):
        self.question_id = question_id
        super().__init__(f"missing required answer for {question_id}")


@dataclass(frozen=True)
class TraversalRecord:
    question_id: str
    status: str
    answer: str
    elapsed: float
    order_index: int
    # set when a lenient traversal coerced an out-of-domain answer
    coerced: bool = False
    raw_answer: str | None = None

    @property
    def asked(self):
        return self.status == "asked"

    def as_tuple(self):
        return (self.question_id, self.status, self.answer, self.elapsed)


@dataclass(frozen=True)
class TraversalResult:
    frame_ref: str
    records: tuple[TraversalRecord, ...]
    mode: str = "hierarchical"
    started_at: float = 0.0
    finished_at: float = 0.0

    @property
    def asked_count(self) -> int:
        return sum(1 for r in self.records if r.status == "asked")

    @property
    def total_elapsed(self) -> float:
        return sum(r.elapsed for r in self.records if r.status == "asked")

    @property
    def asked(self):
        return {r.question_id for r in self.records if r.status == "asked"}

    @property
    def pruned(self):
        return {r.question_id for r in self.records if r.status == "pruned"}

    def answers(self) -> dict:
        """question id -> answer, "none" for pruned questions."""
        return {r.question_id: r.answer for r in self.records}

    def to_dict(self) -> dict:
        return {
            "frame_ref": self.frame_ref,
            "approach": self.mode,
            "records": [list(r.as_tuple()) for r in self.records],
            "asked_count": self.asked_count,
            "total_elapsed_ms": self.total_elapsed,
            "started_at_ms": self.started_at,
            "finished_at_ms": self.finished_at,
        }

    @classmethod
    def from_dict(cls, d):
        recs = tuple(
            TraversalRecord(q, status, ans, float(ms), i) for i, (q, status, ans, ms) in enumerate(d["records"])
        )
        return cls(d["frame_ref"], recs, d.get("approach", "hierarchical"), d.get("started_at_ms", 0.0), d.get("finished_at_ms", 0.0))


def nearest_label(text, labels):
    """Domain label most similar to ``text``; ties go to the earlier label."""
    from .evaluation import similarity

    best, best_score = labels[0], -1.0
    for lab in labels:
        s = similarity(text, lab)
        if s > best_score:
            best, best_score = lab, s
    return best


def _ask(node, answerer, frame_ref, clock, mode, order_index):
    t0 = clock.now()
    try:
        raw, reported = answerer.answer(frame_ref, node.text, node.id, node.domain)
    except TraversalError:
        raise
    except Exception as exc:
        raise TraversalError(node.id, f"answerer failed: {exc}", frame_ref) from exc
    # simulated answerers report a cost without spending it; charge it to the clock
    measured = clock.now() - t0
    if reported is not None and reported > measured:
        clock.wait(reported - measured)
    elapsed = clock.now() - t0

    label = normalize_label(raw)
    if label in node.domain:
        return TraversalRecord(node.id, "asked", label, elapsed, order_index)
    if mode == STRICT or not label:
        what = "empty answer" if not label else f"answer {raw!r} outside domain {list(node.domain.labels)}"
        raise AnswerOutOfDomain(node.id, what, frame_ref)
    fixed = nearest_label(label, node.domain.labels)
    return TraversalRecord(node.id, "asked", fixed, elapsed, order_index, coerced=True, raw_answer=str(raw))


def traverse_hierarchical(forest: Forest, answerer, frame_ref, clock=None, mode=STRICT) -> TraversalResult:
    """Ask only the questions whose gates open, depth-first in declared order."""
    clock = clock or MonotonicClock()
    index = forest.compiled().index
    records = [None] * len(forest.order)
    started = clock.now()

    # (qid, ask?) pairs; LIFO with reversed children keeps preorder
    stack = [(r, True) for r in reversed(forest.roots)]
    while stack:
        qid, ask = stack.pop()
        node = forest.nodes[qid]
        i = index[qid]
        if not ask:
            records[i] = TraversalRecord(qid, "pruned", NONE, 0.0, i)
            stack.extend((e.child, False) for e in reversed(node.children))
            continue
        rec = _ask(node, answerer, frame_ref, clock, mode, i)
        records[i] = rec
        stack.extend((e.child, rec.answer in e.gate) for e in reversed(node.children))
    return TraversalResult(str(frame_ref), tuple(records), "hierarchical", started, clock.now())


def traverse_flat(forest: Forest, answerer, frame_ref, clock=None, mode=STRICT) -> TraversalResult:
    """Ask every question in canonical preorder, ignoring gates."""
    clock = clock or MonotonicClock()
    started = clock.now()
    records = tuple(_ask(forest.nodes[q], answerer, frame_ref, clock, mode, i) for i, q in enumerate(forest.order))
    return TraversalResult(str(frame_ref), records, "flat", started, clock.now())


def traverse(forest, answerer, frame_ref, clock=None, approach="hierarchical", mode=STRICT):
    fn = traverse_flat if approach == "flat" else traverse_hierarchical
    return fn(forest, answerer, frame_ref, clock=clock, mode=mode)


def pruned_set(forest: Forest, answers) -> set:
    """Ids that a hierarchical walk would prune under ``answers``.

    ``answers`` maps question id to label and must cover every question that
    would be asked. Computed with the array kernel, independently of the
    traversal code above.
    """
    cf = forest.compiled()
    status, first_missing = prune_status(cf.parent, cf.gate_mask, cf.encode(answers))
    if first_missing >= 0:
        raise MissingAnswer(cf.ids[first_missing])
    return {q for q, s in zip(cf.ids, status) if s != ASKED}

