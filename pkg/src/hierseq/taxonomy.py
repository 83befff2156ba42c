"""Class hierarchy, label paths and per-step level masks.

Classes of all levels share one global index space (the "union vocabulary"),
laid out level by level: level 0 classes first, then level 1, and so on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import yaml

from .errors import DataError

FORWARD = "forward"
REVERSED = "reversed"


@dataclass(frozen=True, order=True)
class ClassId:
    level: int
    index: int


@dataclass(frozen=True)
class LabelPath:
    """One class per level.

    ``reversed`` paths list the deepest level first; they are what the
    auxiliary bottom-up task is trained on.
    """

    classes: tuple[ClassId, ...]
    reversed: bool = False

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self) -> Iterator[ClassId]:
        return iter(self.classes)

    def __getitem__(self, i: int) -> ClassId:
        return self.classes[i]


def reverse_path(path: LabelPath) -> LabelPath:
    return LabelPath(tuple(reversed(path.classes)), reversed=not path.reversed)


@dataclass(frozen=True)
class Taxonomy:
    level_names: tuple[str, ...]
    classes_per_level: tuple[tuple[str, ...], ...]
    edges: frozenset[tuple[ClassId, ClassId]] | None = None
    _lookup: dict = field(default=None, repr=False, compare=False)  # type: ignore[assignment]
    _offsets: tuple = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if len(self.classes_per_level) < 2:
            raise DataError(
                f"a taxonomy needs at least 2 levels, got {len(self.classes_per_level)}"
            )
        if len(self.level_names) != len(self.classes_per_level):
            raise DataError("level_names and classes_per_level differ in length")
        lookup = []
        for j, names in enumerate(self.classes_per_level):
            if not names:
                raise DataError(f"level {j} ({self.level_names[j]!r}) is empty")
            seen: dict[str, int] = {}
            for k, name in enumerate(names):
                if name in seen:
                    raise DataError(f"duplicate class {name!r} in level {j}")
                seen[name] = k
            lookup.append(seen)
        offsets = [0]
        for names in self.classes_per_level:
            offsets.append(offsets[-1] + len(names))
        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "_offsets", tuple(offsets))

        if self.edges is not None:
            for parent, child in self.edges:
                self._check_class(parent)
                self._check_class(child)
                if child.level != parent.level + 1:
                    raise DataError(
                        f"edge {self.name(parent)!r} -> {self.name(child)!r} "
                        f"spans levels {parent.level} and {child.level}"
                    )
            with_parent = {child for _, child in self.edges}
            for j in range(1, self.num_levels):
                for k, name in enumerate(self.classes_per_level[j]):
                    if ClassId(j, k) not in with_parent:
                        raise DataError(f"class {name!r} at level {j} has no parent")

    # -- sizes and indexing ------------------------------------------------

    @property
    def num_levels(self) -> int:
        return len(self.classes_per_level)

    @property
    def level_sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.classes_per_level)

    @property
    def num_classes(self) -> int:
        """Size of the union vocabulary."""
        return self._offsets[-1]

    def level_offset(self, level: int) -> int:
        return self._offsets[level]

    def global_index(self, cid: ClassId) -> int:
        return self._offsets[cid.level] + cid.index

    def class_at(self, global_index: int) -> ClassId:
        if not 0 <= global_index < self.num_classes:
            raise IndexError(global_index)
        level = int(np.searchsorted(self._offsets, global_index, side="right")) - 1
        return ClassId(level, global_index - self._offsets[level])

    def class_id(self, level: int, name: str) -> ClassId:
        try:
            return ClassId(level, self._lookup[level][name])
        except (KeyError, IndexError):
            raise DataError(f"unknown class {name!r} at level {level}") from None

    def name(self, cid: ClassId) -> str:
        return self.classes_per_level[cid.level][cid.index]

    def qualified_name(self, cid: ClassId) -> str:
        return f"{cid.level}:{self.name(cid)}"

    def all_classes(self) -> Iterator[ClassId]:
        for j, names in enumerate(self.classes_per_level):
            for k in range(len(names)):
                yield ClassId(j, k)

    def _check_class(self, cid: ClassId) -> None:
        if not 0 <= cid.level < self.num_levels:
            raise DataError(f"level {cid.level} out of range")
        if not 0 <= cid.index < len(self.classes_per_level[cid.level]):
            raise DataError(f"class index {cid.index} out of range at level {cid.level}")

    # -- paths -------------------------------------------------------------

    def step_level(self, step: int, direction: str = FORWARD) -> int:
        if not 0 <= step < self.num_levels:
            raise IndexError(f"step {step} out of range for {self.num_levels} levels")
        if direction == FORWARD:
            return step
        if direction == REVERSED:
            return self.num_levels - 1 - step
        raise ValueError(f"unknown direction {direction!r}")

    def path_errors(self, path: LabelPath) -> list[str]:
        """Reasons ``path`` is invalid; empty when it is valid."""
        direction = REVERSED if path.reversed else FORWARD
        if len(path) != self.num_levels:
            return [f"path has {len(path)} classes, taxonomy has {self.num_levels} levels"]
        problems = []
        for step, cid in enumerate(path):
            want = self.step_level(step, direction)
            if cid.level != want:
                problems.append(f"element {step} is at level {cid.level}, expected {want}")
            elif not 0 <= cid.index < len(self.classes_per_level[cid.level]):
                problems.append(f"element {step} has class index {cid.index} out of range")
        if problems or self.edges is None:
            return problems
        top_down = path.classes[::-1] if path.reversed else path.classes
        for parent, child in zip(top_down, top_down[1:]):
            if (parent, child) not in self.edges:
                problems.append(f"{self.name(parent)!r} -> {self.name(child)!r} is not an edge")
        return problems

    def is_valid_path(self, path: LabelPath) -> bool:
        return not self.path_errors(path)

    def path_from_names(self, names: Sequence[str]) -> LabelPath:
        if len(names) != self.num_levels:
            raise DataError(f"expected {self.num_levels} labels, got {len(names)}")
        path = LabelPath(tuple(self.class_id(j, n) for j, n in enumerate(names)))
        problems = self.path_errors(path)
        if problems:
            raise DataError("; ".join(problems))
        return path

    def path_names(self, path: LabelPath) -> list[str]:
        return [self.name(c) for c in path]

    def level_sequences(self) -> Iterator[LabelPath]:
        """Every top-down sequence with one class per level, edges ignored."""
        for combo in np.ndindex(*self.level_sizes):
            yield LabelPath(tuple(ClassId(j, int(k)) for j, k in enumerate(combo)))

    def valid_paths(self) -> Iterator[LabelPath]:
        for path in self.level_sequences():
            if self.edges is None or self.is_valid_path(path):
                yield path

    # -- identity ------------------------------------------------------------

    def to_dict(self) -> dict:
        out: dict = {
            "levels": [
                {"name": n, "classes": list(c)}
                for n, c in zip(self.level_names, self.classes_per_level)
            ]
        }
        if self.edges is not None:
            out["edges"] = sorted([self.name(p), self.name(c)] for p, c in self.edges)
        return out

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def level_mask(taxonomy: Taxonomy, step: int, direction: str = FORWARD) -> np.ndarray:
    """Boolean mask over the union vocabulary selecting the classes of one step."""
    level = taxonomy.step_level(step, direction)
    mask = np.zeros(taxonomy.num_classes, dtype=bool)
    lo = taxonomy.level_offset(level)
    mask[lo : lo + taxonomy.level_sizes[level]] = True
    mask.flags.writeable = False
    return mask


def taxonomy_from_dict(data: dict) -> Taxonomy:
    if not isinstance(data, dict) or "levels" not in data:
        raise DataError("taxonomy document needs a 'levels' list")
    level_names, classes = [], []
    for j, level in enumerate(data["levels"]):
        if not isinstance(level, dict) or "classes" not in level:
            raise DataError(f"level {j} needs a 'classes' list")
        level_names.append(str(level.get("name", f"level{j}")))
        classes.append(tuple(str(c) for c in (level["classes"] or ())))
    if len(classes) < 2:
        raise DataError(f"a taxonomy needs at least 2 levels, got {len(classes)}")
    for j, names in enumerate(classes):
        if not names:
            raise DataError(f"level {j} ({level_names[j]!r}) is empty")

    edges = None
    if data.get("edges") is not None:
        index = [{n: k for k, n in enumerate(names)} for names in classes]
        edges = set()
        for pair in data["edges"]:
            if len(pair) != 2:
                raise DataError(f"edge {pair!r} must be a [parent, child] pair")
            parent, child = str(pair[0]), str(pair[1])
            spots = [j for j in range(len(classes) - 1) if parent in index[j] and child in index[j + 1]]
            if not spots:
                raise DataError(
                    f"edge {parent!r} -> {child!r} does not connect adjacent levels"
                )
            if len(spots) > 1:
                raise DataError(f"edge {parent!r} -> {child!r} is ambiguous across levels")
            j = spots[0]
            edges.add((ClassId(j, index[j][parent]), ClassId(j + 1, index[j + 1][child])))
        edges = frozenset(edges)
    return Taxonomy(tuple(level_names), tuple(classes), edges)


def load_taxonomy(source: str | Path) -> Taxonomy:
    """Read a YAML (or JSON) taxonomy file."""
    with open(source, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise DataError(f"{source}: cannot parse taxonomy: {exc}") from exc
    return taxonomy_from_dict(data)


def save_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(taxonomy.to_dict(), fh, allow_unicode=True, sort_keys=False)


def build_taxonomy(
    classes_per_level: Iterable[Sequence[str]],
    edges: Iterable[tuple[str, str]] | None = None,
    level_names: Sequence[str] | None = None,
) -> Taxonomy:
    classes = [list(c) for c in classes_per_level]
    names = list(level_names) if level_names else [f"level{j + 1}" for j in range(len(classes))]
    data: dict = {"levels": [{"name": n, "classes": c} for n, c in zip(names, classes)]}
    if edges is not None:
        data["edges"] = [list(e) for e in edges]
    return taxonomy_from_dict(data)
