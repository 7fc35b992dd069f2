"""Question forest: data model, config file format and structural checks.

A forest is an ordered list of question trees. Each node asks one question
with a constrained answer domain; a child is asked only when the parent's
answer is in the child's gate. Every node is identified by a string id and
the whole structure is immutable once parsed.

Config file (YAML, JSON also accepted)::

    version: 1
    roots: [q_straight, q_intersection]
    questions:
      - id: q_straight
        text: Is the ego vehicle moving on a straight road?
        domain: {kind: binary, labels: [yes, no]}
        templates:
          "yes": The ego vehicle is moving on a straight road.
          "no": The ego vehicle is moving on a curved road.
        children:
          - {gate: ["no"], id: q_curve_dir}
      ...
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping

import numpy as np
import yaml

from .kernels import MAX_DOMAIN_SIZE
from .labels import NONE, normalize_label

SCHEMA_VERSION = 1
BINARY_LABELS = ("yes", "no")


class ForestError(ValueError):
    """Raised by parse_forest; carries the offending node id and config path."""

    def __init__(self, rule, message, node_id=None, path=None):
        self.rule = rule
        self.node_id = node_id
        self.path = path
        where = ""
        if node_id is not None:
            where += f" [node {node_id}]"
        if path:
            where += f" at {path}"
        super().__init__(f"{rule}: {message}{where}")


@dataclass(frozen=True)
class Violation:
    node_id: str | None
    rule: str
    detail: str = ""

    def __str__(self):
        return f"{self.rule} ({self.node_id}): {self.detail}" if self.detail else f"{self.rule} ({self.node_id})"


@dataclass(frozen=True)
class AnswerDomain:
    kind: str
    labels: tuple[str, ...]

    @classmethod
    def binary(cls):
        return cls("binary", BINARY_LABELS)

    @classmethod
    def categorical(cls, labels: Iterable[str]):
        return cls("categorical", tuple(normalize_label(x) for x in labels))

    def __contains__(self, label):
        return label in self.labels

    def index(self, label) -> int:
        return self.labels.index(label)

    @property
    def default_label(self) -> str:
        """Label an oracle falls back to when asked an inapplicable question."""
        return "no" if self.kind == "binary" else self.labels[0]


@dataclass(frozen=True)
class Edge:
    gate: frozenset
    child: str


@dataclass(frozen=True)
class QuestionNode:
    id: str
    text: str
    domain: AnswerDomain
    templates: Mapping[str, str] = field(default_factory=dict)
    children: tuple[Edge, ...] = ()

    def __hash__(self):
        return hash(self.id)

    def template_for(self, label):
        return self.templates.get(label)


@dataclass(frozen=True, eq=False)
class Forest:
    """Validated forest. ``order`` is the canonical preorder of node ids."""

    nodes: Mapping[str, QuestionNode]
    roots: tuple[str, ...]
    order: tuple[str, ...]
    parent: Mapping[str, str | None]
    gate_into: Mapping[str, frozenset]

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, qid) -> QuestionNode:
        return self.nodes[qid]

    def __iter__(self):
        return (self.nodes[q] for q in self.order)

    def __eq__(self, other):
        if not isinstance(other, Forest):
            return NotImplemented
        return (
            self.roots == other.roots
            and self.order == other.order
            and all(self.nodes[q] == other.nodes[q] for q in self.order)
        )

    @property
    def ids(self):
        return self.order

    def depth(self, qid) -> int:
        d = 1
        while self.parent[qid] is not None:
            qid = self.parent[qid]
            d += 1
        return d

    def to_dict(self):
        return forest_to_dict(self)

    def compiled(self) -> CompiledForest:
        # memoized on the frozen instance
        try:
            return self.__dict__["_compiled"]
        except KeyError:
            c = CompiledForest.build(self)
            object.__setattr__(self, "_compiled", c)
            return c


@dataclass(frozen=True, eq=False)
class CompiledForest:
    """Array form of a forest for the pruning kernel (indices are preorder)."""

    ids: tuple[str, ...]
    index: Mapping[str, int]
    parent: np.ndarray
    gate_mask: np.ndarray
    label_index: tuple[Mapping[str, int], ...]

    @classmethod
    def build(cls, forest: Forest):
        index = {q: i for i, q in enumerate(forest.order)}
        n = len(forest.order)
        parent = np.full(n, -1, dtype=np.int64)
        mask = np.zeros(n, dtype=np.uint64)
        label_index = []
        for i, q in enumerate(forest.order):
            node = forest.nodes[q]
            label_index.append({lab: k for k, lab in enumerate(node.domain.labels)})
            p = forest.parent[q]
            if p is not None:
                parent[i] = index[p]
                plabels = forest.nodes[p].domain.labels
                m = 0
                for lab in forest.gate_into[q]:
                    m |= 1 << plabels.index(lab)
                mask[i] = m
        return cls(tuple(forest.order), index, parent, mask, tuple(label_index))

    def encode(self, answers: Mapping[str, str]) -> np.ndarray:
        """Map id -> label onto a code vector (label index, MISSING or NO_MATCH)."""
        from .kernels import MISSING, NO_MATCH

        codes = np.full(len(self.ids), MISSING, dtype=np.int64)
        for i, q in enumerate(self.ids):
            lab = answers.get(q)
            if lab is not None:
                codes[i] = self.label_index[i].get(lab, NO_MATCH)
        return codes


# ---------------------------------------------------------------- parsing


def _label(raw) -> str:
    # YAML 1.1 reads bare yes/no as booleans
    if raw is True:
        return "yes"
    if raw is False:
        return "no"
    return normalize_label(raw)


def _require(cond, rule, message, node_id=None, path=None):
    if not cond:
        raise ForestError(rule, message, node_id, path)


def _parse_domain(raw, qid, path):
    _require(isinstance(raw, Mapping), "schema", "domain must be a mapping", qid, path)
    kind = raw.get("kind")
    _require(kind in ("binary", "categorical"), "schema", f"domain.kind must be binary|categorical, got {kind!r}", qid, path)
    labels = raw.get("labels")
    if kind == "binary" and labels is None:
        labels = list(BINARY_LABELS)
    _require(isinstance(labels, list) and labels, "schema", "domain.labels must be a non-empty list", qid, path)
    norm = tuple(_label(x) for x in labels)
    _require(all(norm), "schema", "empty label in domain", qid, path)
    _require(NONE not in norm, "reserved-none", '"none" is reserved and cannot be a domain label', qid, path)
    _require(len(set(norm)) == len(norm), "duplicate-label", f"duplicate labels in {list(norm)}", qid, path)
    _require(len(norm) <= MAX_DOMAIN_SIZE, "schema", f"domain has more than {MAX_DOMAIN_SIZE} labels", qid, path)
    if kind == "binary":
        _require(set(norm) == set(BINARY_LABELS), "binary-domain", f"binary domain must be {{yes, no}}, got {list(norm)}", qid, path)
    return AnswerDomain(kind, norm)


def _build_nodes(data):
    _require(isinstance(data, Mapping), "schema", "top level must be a mapping")
    _require(data.get("version") == SCHEMA_VERSION, "schema", f"version must be {SCHEMA_VERSION}")
    roots = data.get("roots")
    _require(isinstance(roots, list), "schema", "roots must be a list", path="roots")
    _require(len(roots) >= 1, "schema", "forest must have >=1 root", path="roots")
    questions = data.get("questions")
    _require(isinstance(questions, list), "schema", "questions must be a list", path="questions")

    nodes = {}
    for qi, raw in enumerate(questions):
        path = f"questions[{qi}]"
        _require(isinstance(raw, Mapping), "schema", "question entry must be a mapping", path=path)
        qid = raw.get("id")
        _require(isinstance(qid, str) and qid, "schema", "question id must be a non-empty string", path=path)
        _require(qid not in nodes, "duplicate-id", "duplicate question id", qid, path)
        text = raw.get("text")
        _require(isinstance(text, str) and text.strip(), "schema", "question text must be a non-empty string", qid, path)
        domain = _parse_domain(raw.get("domain"), qid, f"{path}.domain")

        templates = {}
        for key, sentence in (raw.get("templates") or {}).items():
            lab = _label(key)
            tpath = f"{path}.templates.{key}"
            _require(lab != NONE, "reserved-none", '"none" cannot carry a template', qid, tpath)
            _require(lab in domain, "template-key-outside-domain", f"template key {lab!r} not in {list(domain.labels)}", qid, tpath)
            _require(isinstance(sentence, str), "schema", "template must be a string", qid, tpath)
            templates[lab] = sentence

        children = []
        for ci, edge in enumerate(raw.get("children") or []):
            cpath = f"{path}.children[{ci}]"
            _require(isinstance(edge, Mapping), "schema", "child entry must be a mapping", qid, cpath)
            cid = edge.get("id")
            _require(isinstance(cid, str) and cid, "schema", "child id must be a non-empty string", qid, cpath)
            gate = edge.get("gate")
            _require(isinstance(gate, list) and gate, "schema", "gate must be a non-empty list of labels", qid, cpath)
            glabels = frozenset(_label(g) for g in gate)
            _require(NONE not in glabels, "reserved-none", '"none" cannot appear in a gate', qid, cpath)
            bad = sorted(glabels - set(domain.labels))
            _require(not bad, "gate-label-outside-domain", f"gate labels {bad} not in parent domain {list(domain.labels)}", qid, cpath)
            children.append(Edge(glabels, cid))

        nodes[qid] = QuestionNode(qid, text.strip(), domain, templates, tuple(children))
    return nodes, [str(r) for r in roots]


def _link(nodes, roots):
    """Check references/cycles and compute preorder. Raises ForestError."""
    for r in roots:
        _require(r in nodes, "unknown-root", "root id is not a defined question", r, "roots")
    _require(len(set(roots)) == len(roots), "duplicate-root", "root listed twice", path="roots")

    parent = {}
    gate_into = {}
    for q in nodes.values():
        for ei, e in enumerate(q.children):
            _require(e.child in nodes, "unknown-child", f"child {e.child!r} is not a defined question", q.id, f"{q.id}.children[{ei}]")
            if e.child in parent or e.child in roots:
                first = parent.get(e.child, "<root>")
                raise ForestError("multiple-parents", f"{e.child!r} already referenced by {first!r}", e.child, f"{q.id}.children[{ei}]")
            parent[e.child] = q.id
            gate_into[e.child] = e.gate
    for r in roots:
        parent[r] = None

    # any node unreachable from a root sits on a cycle or is orphaned
    order = []
    seen = set()
    for r in roots:
        stack = [r]
        while stack:
            q = stack.pop()
            seen.add(q)
            order.append(q)
            stack.extend(e.child for e in reversed(nodes[q].children))
    rest = [q for q in nodes if q not in seen]
    if rest:
        q = rest[0]
        if q not in parent:
            raise ForestError("orphan", "question is neither a root nor anyone's child", q)
        cycle = [q]
        cur = parent[q]
        while cur is not None and cur not in cycle:
            cycle.append(cur)
            cur = parent[cur]
        raise ForestError("cycle", " -> ".join(reversed(cycle + [cur])) if cur else "unreachable", q)
    return tuple(order), parent, gate_into


def forest_from_dict(data) -> Forest:
    nodes, roots = _build_nodes(data)
    order, parent, gate_into = _link(nodes, roots)
    return Forest(nodes, tuple(roots), order, parent, gate_into)


def parse_forest(config_text: str) -> Forest:
    """Parse and validate a forest config (YAML or JSON text)."""
    try:
        data = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        raise ForestError("schema", f"not valid YAML/JSON: {exc}") from exc
    return forest_from_dict(data)


def load_forest(path) -> Forest:
    with open(path, encoding="utf-8") as fh:
        return parse_forest(fh.read())


def forest_to_dict(forest: Forest) -> dict:
    questions = []
    for node in forest:
        questions.append(
            {
                "id": node.id,
                "text": node.text,
                "domain": {"kind": node.domain.kind, "labels": list(node.domain.labels)},
                "templates": dict(node.templates),
                "children": [
                    {"gate": [lab for lab in node.domain.labels if lab in e.gate], "id": e.child}
                    for e in node.children
                ],
            }
        )
    return {"version": SCHEMA_VERSION, "roots": list(forest.roots), "questions": questions}


def dump_forest(forest: Forest, fmt="yaml") -> str:
    data = forest_to_dict(forest)
    if fmt == "json":
        return json.dumps(data, indent=2, ensure_ascii=False) + "\n"
    return yaml.safe_dump(data, sort_keys=False, allow_unicode=True, width=1000)


# ------------------------------------------------------------- validation


def validate_forest(forest: Forest) -> list[Violation]:
    """Re-check every structural rule on an in-memory forest.

    Unlike parse_forest this never raises; it is meant for forests built or
    modified in code. An empty list means the forest is valid.
    """
    out = []
    nodes = forest.nodes
    if not forest.roots:
        out.append(Violation(None, "no-roots", "forest must have >=1 root"))
    for qid, node in nodes.items():
        if node.id != qid:
            out.append(Violation(qid, "id-mismatch", f"table key {qid!r} holds node {node.id!r}"))
        dom = node.domain
        if not dom.labels:
            out.append(Violation(qid, "empty-domain"))
        if len(set(dom.labels)) != len(dom.labels):
            out.append(Violation(qid, "duplicate-label"))
        if NONE in dom.labels:
            out.append(Violation(qid, "reserved-none", "domain"))
        if any(lab != normalize_label(lab) or not lab for lab in dom.labels):
            out.append(Violation(qid, "unnormalized-label"))
        if dom.kind == "binary" and set(dom.labels) != set(BINARY_LABELS):
            out.append(Violation(qid, "binary-domain"))
        if dom.kind not in ("binary", "categorical"):
            out.append(Violation(qid, "unknown-domain-kind", dom.kind))
        for key in node.templates:
            if key == NONE:
                out.append(Violation(qid, "reserved-none", "template"))
            elif key not in dom.labels:
                out.append(Violation(qid, "template-key-outside-domain", key))
        for e in node.children:
            if not e.gate:
                out.append(Violation(qid, "empty-gate", e.child))
            if NONE in e.gate:
                out.append(Violation(qid, "reserved-none", f"gate to {e.child}"))
            bad = sorted(set(e.gate) - set(dom.labels) - {NONE})
            if bad:
                out.append(Violation(qid, "gate-label-outside-domain", f"{bad} on edge to {e.child}"))
            if e.child not in nodes:
                out.append(Violation(qid, "unknown-child", e.child))

    refs = {}
    for node in nodes.values():
        for e in node.children:
            refs.setdefault(e.child, []).append(node.id)
    for r in forest.roots:
        if r not in nodes:
            out.append(Violation(r, "unknown-root"))
        elif r in refs:
            out.append(Violation(r, "root-has-parent", f"referenced by {refs[r]}"))
    if len(set(forest.roots)) != len(forest.roots):
        out.append(Violation(None, "duplicate-root"))
    for child, parents in refs.items():
        if len(parents) > 1:
            out.append(Violation(child, "multiple-parents", f"referenced by {parents}"))
    for qid in nodes:
        if qid not in refs and qid not in forest.roots:
            out.append(Violation(qid, "orphan"))

    # cycle detection over the child graph
    color = {}
    for start in nodes:
        if start in color:
            continue
        stack = [(start, iter(nodes[start].children))]
        color[start] = 1
        while stack:
            q, it = stack[-1]
            e = next(it, None)
            if e is None:
                color[q] = 2
                stack.pop()
                continue
            c = e.child
            if c not in nodes:
                continue
            if color.get(c) == 1:
                path = [s[0] for s in stack]
                out.append(Violation(c, "cycle", " -> ".join(path[path.index(c):] + [c])))
            elif c not in color:
                color[c] = 1
                stack.append((c, iter(nodes[c].children)))
    return out


def forest_stats(forest: Forest) -> dict:
    sizes = {}
    for r in forest.roots:
        n = 0
        stack = [r]
        while stack:
            q = stack.pop()
            n += 1
            stack.extend(e.child for e in forest.nodes[q].children)
        sizes[r] = n
    return {
        "node_count": len(forest.nodes),
        "root_count": len(forest.roots),
        "max_depth": max((forest.depth(q) for q in forest.order), default=0),
        "subtree_sizes": sizes,
    }


# --------------------------------------------------------------- fixtures


def demo_forest_text() -> str:
    return resources.files("hqa.data").joinpath("demo_forest.yaml").read_text(encoding="utf-8")


def demo_forest() -> Forest:
    """Five-node, two-root road-geometry and intersection forest shipped as package data."""
    return parse_forest(demo_forest_text())


def synthetic_forest(n_nodes=41, n_roots=6, branching=2, categorical_roots=2, categorical_size=3) -> Forest:
    """Deterministic synthetic forest for scale tests.

    Nodes are attached breadth-first: node ``i`` (past the roots) hangs under
    node ``(i - n_roots) // branching``, so trees stay balanced. The first
    ``categorical_roots`` roots get a categorical domain and open their
    children on their first label; every other node is binary and opens its
    children on "yes". Categorical nodes are only ever roots, so they are
    always asked and a forced default answer never adds text.
    """
    if not 1 <= n_roots <= n_nodes:
        raise ValueError("need 1 <= n_roots <= n_nodes")
    if categorical_roots > n_roots:
        raise ValueError("categorical_roots exceeds n_roots")
    ids = [f"q{i:03d}" for i in range(n_nodes)]
    children = {q: [] for q in ids}
    for i in range(n_roots, n_nodes):
        children[ids[(i - n_roots) // branching]].append(ids[i])
    questions = []
    for i, q in enumerate(ids):
        if i < categorical_roots:
            labels = [f"kind {chr(ord('a') + k)}" for k in range(categorical_size)]
            domain = {"kind": "categorical", "labels": labels}
            templates = {lab: f"Element {q} is of {lab}." for lab in labels}
            gate = [labels[0]]
        else:
            domain = {"kind": "binary", "labels": list(BINARY_LABELS)}
            templates = {"yes": f"Element {q} is present."}
            gate = ["yes"]
        questions.append(
            {
                "id": q,
                "text": f"Is element {q} present?" if i >= categorical_roots else f"Which kind is element {q}?",
                "domain": domain,
                "templates": templates,
                "children": [{"gate": gate, "id": c} for c in children[q]],
            }
        )
    return forest_from_dict({"version": SCHEMA_VERSION, "roots": ids[:n_roots], "questions": questions})
