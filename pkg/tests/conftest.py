import random

import pytest

from hqa.dataset import demo_annotations
from hqa.forest import demo_forest, forest_from_dict, synthetic_forest
from hqa.stub_server import StubServer


@pytest.fixture(scope="session")
def demo():
    return demo_forest()


@pytest.fixture(scope="session")
def demo_ann(demo):
    return demo_annotations(demo)


@pytest.fixture(scope="session")
def forest41():
    return synthetic_forest(41)


@pytest.fixture
def stub():
    with StubServer() as server:
        yield server


def random_forest_dict(rng: random.Random, max_nodes=500, max_labels=4):
    """Random valid forest config: node i's parent is a random earlier node or none."""
    n = rng.randint(1, max_nodes)
    parents = [-1] + [rng.randrange(-1, i) if rng.random() < 0.9 else -1 for i in range(1, n)]
    labels = []
    for i in range(n):
        if rng.random() < 0.5:
            labels.append(["yes", "no"])
        else:
            labels.append([f"l{k}" for k in range(rng.randint(1, max_labels))])
    children = {i: [] for i in range(n)}
    for i, p in enumerate(parents):
        if p >= 0:
            plabs = labels[p]
            gate = rng.sample(plabs, rng.randint(1, len(plabs)))
            children[p].append({"gate": gate, "id": f"n{i}"})
    questions = []
    for i in range(n):
        kind = "binary" if labels[i] == ["yes", "no"] else "categorical"
        questions.append(
            {
                "id": f"n{i}",
                "text": f"question {i}?",
                "domain": {"kind": kind, "labels": labels[i]},
                "templates": {lab: f"N{i} is {lab}." for lab in labels[i] if rng.random() < 0.5},
                "children": children[i],
            }
        )
    return {"version": 1, "roots": [f"n{i}" for i, p in enumerate(parents) if p < 0], "questions": questions}


def random_forest(rng, **kw):
    return forest_from_dict(random_forest_dict(rng, **kw))


def random_answers(rng, forest):
    return {q: rng.choice(forest.nodes[q].domain.labels) for q in forest.order}


# ---------------------------------------------------- acceptance verdicts

ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number, ok, detail):
        ACCEPTANCE_LINES.append((number, f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"))
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
