"""Class-definition vectors and the definition-similarity score."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DefinitionStore, tokenize
from .embeddings import EmbeddingTable, SentenceVector, mean_pool
from .errors import DataError
from .taxonomy import ClassId, Taxonomy

log = logging.getLogger(__name__)

_NORM_FLOOR = 1e-12


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < _NORM_FLOOR or nb < _NORM_FLOOR:
        return 0.0
    c = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, c))


@dataclass
class CdvStore:
    """One definition vector per class of the taxonomy.

    ``vectors`` is indexed by the taxonomy's global class index.
    """

    taxonomy: Taxonomy
    vectors: np.ndarray
    has_definition: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector(self, cid: ClassId) -> np.ndarray:
        return self.vectors[self.taxonomy.global_index(cid)]

    def similarities(self, doc_vector: np.ndarray) -> np.ndarray:
        """Cosine similarity of every class CDV to ``doc_vector``."""
        return np.array([cosine_similarity(v, doc_vector) for v in self.vectors])

    @classmethod
    def zeros(cls, taxonomy: Taxonomy, dim: int) -> "CdvStore":
        return cls(taxonomy, np.zeros((taxonomy.num_classes, dim)),
                   np.zeros(taxonomy.num_classes, dtype=bool))


def build_cdv_store(
    taxonomy: Taxonomy,
    definitions: DefinitionStore,
    table: EmbeddingTable,
    denominator: str = "all",
) -> CdvStore:
    vectors = np.zeros((taxonomy.num_classes, table.dim))
    flags = np.zeros(taxonomy.num_classes, dtype=bool)
    for cid in taxonomy.all_classes():
        text = definitions.get(cid)
        if text is None:
            log.warning("no definition for %s, using a zero vector", taxonomy.qualified_name(cid))
            continue
        g = taxonomy.global_index(cid)
        vectors[g] = mean_pool(table, tokenize(text), denominator).values
        flags[g] = True
    return CdvStore(taxonomy, vectors, flags)


def cd_score(store: CdvStore, candidate: ClassId, doc_vector: SentenceVector | np.ndarray,
             lam: float = 1.0, sign: str = "similarity") -> float:
    """Weighted definition-similarity bonus for one candidate class."""
    z = doc_vector.values if isinstance(doc_vector, SentenceVector) else doc_vector
    if z.shape[0] != store.dim:
        raise ValueError(f"document vector has dimension {z.shape[0]}, store has {store.dim}")
    return lam * _signed(sign) * cosine_similarity(store.vector(candidate), z)


def cd_vector(store: CdvStore, doc_vector: np.ndarray, lam: float = 1.0,
              sign: str = "similarity") -> np.ndarray:
    """``cd_score`` for every class at once, indexed globally."""
    return lam * _signed(sign) * store.similarities(doc_vector)


def _signed(sign: str) -> float:
    if sign == "similarity":
        return 1.0
    if sign == "negated":
        return -1.0
    raise ValueError(f"cd_sign must be 'similarity' or 'negated', got {sign!r}")


def save_cdv_store(store: CdvStore, path: str | Path) -> None:
    tax = store.taxonomy
    with open(path, "w", encoding="utf-8") as fh:
        for cid in tax.all_classes():
            g = tax.global_index(cid)
            values = " ".join(repr(float(v)) for v in store.vectors[g])
            flag = "1" if store.has_definition[g] else "0"
            fh.write(f"{cid.level}\t{tax.name(cid)}\t{flag}\t{values}\n")


def load_cdv_store(path: str | Path, taxonomy: Taxonomy) -> CdvStore:
    rows: dict[int, tuple[bool, list[float]]] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4 or cols[2] not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: malformed CDV record")
            cid = taxonomy.class_id(int(cols[0]), cols[1])
            values = [float(v) for v in cols[3].split(" ")] if cols[3] else []
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise DataError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
            rows[taxonomy.global_index(cid)] = (cols[2] == "1", values)
    if len(rows) != taxonomy.num_classes:
        raise DataError(f"{path}: covers {len(rows)} of {taxonomy.num_classes} classes")
    vectors = np.array([rows[g][1] for g in range(taxonomy.num_classes)], dtype=np.float64)
    flags = np.array([rows[g][0] for g in range(taxonomy.num_classes)], dtype=bool)
    return CdvStore(taxonomy, vectors, flags)
