"""Per-level and exact-path accuracy."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .taxonomy import LabelPath, Taxonomy

COMPARABILITY_NOTE = (
    "Path accuracy counts a document as correct only when every level matches. "
    "Numbers from synthetic or reduced data are not comparable to published full-corpus results."
)


@dataclass
class EvalReport:
    document_count: int
    level_correct: list[int]
    path_correct: int
    confusion: list[Counter] = field(default_factory=list)

    @property
    def level_accuracy(self) -> list[Fraction]:
        n = max(self.document_count, 1)
        return [Fraction(c, n) for c in self.level_correct]

    @property
    def path_accuracy(self) -> Fraction:
        return Fraction(self.path_correct, max(self.document_count, 1))

    def summary(self) -> dict:
        return {
            "documents": self.document_count,
            "path_accuracy": round(float(self.path_accuracy), 6),
            "level_accuracy": [round(float(a), 6) for a in self.level_accuracy],
            "path_correct": self.path_correct,
            "level_correct": list(self.level_correct),
        }

    def render(self, taxonomy: Taxonomy | None = None) -> str:
        lines = [f"# {COMPARABILITY_NOTE}", f"documents\t{self.document_count}",
                 f"path_accuracy\t{float(self.path_accuracy):.6f}\t({self.path_correct}/{self.document_count})"]
        for j, correct in enumerate(self.level_correct):
            name = taxonomy.level_names[j] if taxonomy else f"level{j + 1}"
            lines.append(f"accuracy[{name}]\t{float(self.level_accuracy[j]):.6f}\t"
                         f"({correct}/{self.document_count})")
        if taxonomy is not None:
            for j, counts in enumerate(self.confusion):
                errors = sorted(((n, g, p) for (g, p), n in counts.items() if g != p), reverse=True)
                for n, g, p in errors[:10]:
                    lines.append(f"confusion[{taxonomy.level_names[j]}]\t"
                                 f"{taxonomy.classes_per_level[j][g]} -> "
                                 f"{taxonomy.classes_per_level[j][p]}\t{n}")
        return "\n".join(lines) + "\n"


def evaluate(predictions: Sequence[LabelPath], gold: Sequence[LabelPath]) -> EvalReport:
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predictions for {len(gold)} gold paths")
    if not gold:
        return EvalReport(0, [], 0, [])
    m = len(gold[0])
    level_correct = [0] * m
    confusion = [Counter() for _ in range(m)]
    path_correct = 0
    for pred, ref in zip(predictions, gold):
        if len(pred) != m or len(ref) != m:
            raise ValueError("paths of unequal length")
        hits = 0
        for j, (p, g) in enumerate(zip(pred, ref)):
            confusion[j][(g.index, p.index)] += 1
            if p == g:
                level_correct[j] += 1
                hits += 1
        path_correct += hits == m
    return EvalReport(len(gold), level_correct, path_correct, confusion)
