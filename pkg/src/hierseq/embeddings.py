"""Frozen pre-trained word vectors in the common text format."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError


class EmbeddingTable:
    """Read-only token -> vector map. Unknown tokens look up as zeros."""

    def __init__(self, tokens: Sequence[str], matrix: np.ndarray):
        matrix = np.array(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(tokens):
            raise DataError(f"matrix shape {matrix.shape} does not fit {len(tokens)} tokens")
        vocab: dict[str, int] = {}
        for i, tok in enumerate(tokens):
            if tok in vocab:
                raise DataError(f"duplicate token {tok!r}")
            vocab[tok] = i
        matrix.flags.writeable = False
        self.vocab = vocab
        self.tokens = list(tokens)
        self.matrix = matrix
        self._zero = np.zeros(matrix.shape[1])
        self._zero.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def lookup(self, token: str) -> np.ndarray:
        i = self.vocab.get(token)
        return self._zero if i is None else self.matrix[i]

    def lookup_many(self, tokens: Iterable[str]) -> np.ndarray:
        """Stack of vectors, shape (len(tokens), dim)."""
        rows = [self.vocab.get(t, -1) for t in tokens]
        out = np.zeros((len(rows), self.dim))
        idx = np.array(rows, dtype=np.int64)
        known = idx >= 0
        out[known] = self.matrix[idx[known]]
        return out

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.tokens).encode("utf-8"))
        h.update(np.ascontiguousarray(self.matrix).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class SentenceVector:
    values: np.ndarray
    source_token_count: int


def mean_pool(table: EmbeddingTable, tokens: Sequence[str], denominator: str = "all") -> SentenceVector:
    """Average the token vectors.

    ``denominator="all"`` divides by the full token count, so unknown tokens
    pull the mean toward zero; ``"known"`` divides by in-vocabulary tokens only.
    """
    if denominator not in ("all", "known"):
        raise ValueError(f"denominator must be 'all' or 'known', got {denominator!r}")
    n = len(tokens)
    if n == 0:
        return SentenceVector(np.zeros(table.dim), 0)
    total = table.lookup_many(tokens).sum(axis=0)
    count = n if denominator == "all" else sum(t in table for t in tokens)
    if count == 0:
        return SentenceVector(np.zeros(table.dim), n)
    return SentenceVector(total / count, n)


def load_vectors(path: str | Path, limit: int | None = None) -> EmbeddingTable:
    """Read ``token v1 ... vd`` lines, with an optional ``count dim`` header."""
    tokens: list[str] = []
    rows: list[list[float]] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if limit is not None and len(tokens) >= limit:
                break
            parts = line.rstrip("\r\n").rstrip(" ").split(" ")
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            if not parts or parts == [""]:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim:
                raise DataError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
            try:
                rows.append([float(v) for v in values])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric vector component") from None
            tokens.append(token)
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), dim or 0)
    return EmbeddingTable(tokens, matrix)


def write_vectors(table: EmbeddingTable, path: str | Path, header: bool = True) -> None:
    # repr() round-trips float64 exactly
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"{len(table)} {table.dim}\n")
        for tok, row in zip(table.tokens, table.matrix):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in row) + "\n")
