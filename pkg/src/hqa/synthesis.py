"""Template-based scene descriptions built from traversal results."""

from __future__ import annotations

from dataclasses import dataclass

from .forest import Forest
from .traversal import TraversalResult


@dataclass(frozen=True)
class Sentence:
    question_id: str
    answer: str
    text: str


@dataclass(frozen=True)
class SceneDescription:
    sources: tuple[Sentence, ...] = ()

    @property
    def sentences(self) -> list[str]:
        return [s.text for s in self.sources]

    @property
    def rendered(self) -> str:
        return render(self)

    def __str__(self):
        return self.rendered


def synthesize(forest: Forest, result: TraversalResult) -> SceneDescription:
    """One sentence per asked question whose answer has a template, in record order."""
    out = []
    for rec in result.records:
        if rec.status != "asked":
            continue
        text = forest.nodes[rec.question_id].template_for(rec.answer)
        if text is not None:
            out.append(Sentence(rec.question_id, rec.answer, text))
    return SceneDescription(tuple(out))


def render(description) -> str:
    sentences = description.sentences if isinstance(description, SceneDescription) else list(description)
    return " ".join(sentences)


def write_golden(path, descriptions):
    """Write ``frame_ref<TAB>description`` lines; ``descriptions`` is an ordered mapping."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame_ref, text in descriptions.items():
            fh.write(f"{frame_ref}\t{text}\n")


def read_golden(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            frame_ref, _, text = line.partition("\t")
            out[frame_ref] = text
    return out
