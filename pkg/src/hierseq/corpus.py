"""Documents, dataset files, splits and class definitions."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .taxonomy import ClassId, LabelPath, Taxonomy

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and detach every punctuation mark."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    id: str
    tokens: tuple[str, ...]
    labels: LabelPath | None = None

    def __post_init__(self):
        if not self.tokens:
            raise DataError(f"document {self.id!r} has no tokens")


@dataclass
class LoadResult:
    documents: list[Document]
    rejected: list[tuple[int, str]] = field(default_factory=list)


def load_dataset(path: str | Path, taxonomy: Taxonomy) -> LoadResult:
    """Parse ``id<TAB>text<TAB>label_1...<TAB>label_M`` rows.

    Bad rows are skipped and reported by 1-based line number.
    """
    docs: list[Document] = []
    rejected: list[tuple[int, str]] = []
    m = taxonomy.num_levels
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != m + 2:
                rejected.append((lineno, f"expected {m} label columns, got {len(cols) - 2}"))
                continue
            doc_id, text, labels = cols[0], cols[1], cols[2:]
            tokens = tokenize(text)
            if not tokens:
                rejected.append((lineno, "empty text"))
                continue
            try:
                path_ = taxonomy.path_from_names(labels)
            except DataError as exc:
                rejected.append((lineno, str(exc)))
                continue
            docs.append(Document(doc_id, tuple(tokens), path_))
    for lineno, reason in rejected:
        log.warning("%s:%d rejected: %s", path, lineno, reason)
    return LoadResult(docs, rejected)


def read_unlabelled(path: str | Path) -> LoadResult:
    """Parse prediction input: ``id<TAB>text`` or bare text per line."""
    docs: list[Document] = []
    rejected: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            cols = line.split("\t")
            doc_id, text = (cols[0], cols[1]) if len(cols) >= 2 else (str(lineno), cols[0])
            tokens = tokenize(text)
            if not tokens:
                rejected.append((lineno, "empty text"))
                continue
            docs.append(Document(doc_id, tuple(tokens)))
    return LoadResult(docs, rejected)


def write_dataset(path: str | Path, documents: Sequence[Document], taxonomy: Taxonomy) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in documents:
            labels = taxonomy.path_names(doc.labels)
            fh.write("\t".join([doc.id, " ".join(doc.tokens), *labels]) + "\n")


@dataclass
class SplitDataset:
    train: list[Document]
    validation: list[Document]
    test: list[Document]


def split(documents: Sequence[Document], ratios: Sequence[float], seed: int) -> SplitDataset:
    if len(ratios) != 3:
        raise ValueError("ratios must be (train, validation, test)")
    if abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be non-negative and sum to 1, got {tuple(ratios)}")
    n = len(documents)
    exact = [r * n for r in ratios]
    sizes = [math.floor(x) for x in exact]
    # largest remainder, earlier split first on ties
    order = sorted(range(3), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    if min(sizes) == 0:
        raise DataError(f"split sizes {tuple(sizes)} leave an empty split")
    perm = np.random.default_rng(seed).permutation(n)
    picked = [documents[i] for i in perm]
    a, b = sizes[0], sizes[0] + sizes[1]
    return SplitDataset(picked[:a], picked[a:b], picked[b:])


@dataclass
class DefinitionStore:
    """Definition text per class, keyed by ``ClassId``."""

    definitions: dict[ClassId, str]
    missing: list[ClassId]

    def get(self, cid: ClassId) -> str | None:
        return self.definitions.get(cid)

    def __len__(self) -> int:
        return len(self.definitions)


def load_definitions(path: str | Path, taxonomy: Taxonomy) -> DefinitionStore:
    """Parse ``level_index<TAB>class_name<TAB>definition`` rows.

    Later duplicates override earlier ones. Classes left without a definition
    are listed in ``missing``.
    """
    defs: dict[ClassId, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(cols)}")
            try:
                level = int(cols[0])
            except ValueError:
                raise DataError(f"{path}:{lineno}: level {cols[0]!r} is not an integer") from None
            if not 0 <= level < taxonomy.num_levels:
                raise DataError(f"{path}:{lineno}: level {level} out of range")
            try:
                cid = taxonomy.class_id(level, cols[1])
            except DataError:
                log.warning("%s:%d: unknown class %r at level %d, ignored", path, lineno, cols[1], level)
                continue
            if cid in defs:
                log.warning("%s:%d: duplicate definition for %s, keeping the later one",
                            path, lineno, taxonomy.qualified_name(cid))
            defs[cid] = cols[2]
    missing = [c for c in taxonomy.all_classes() if c not in defs]
    if missing:
        log.warning("%d classes have no definition", len(missing))
    return DefinitionStore(defs, missing)
