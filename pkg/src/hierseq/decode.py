"""Greedy decoding, beam search, and beam search fused with definition similarity.

All searches predict top-down, one class per level, and rank ties by the
lexicographically smallest class-index path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cdv import CdvStore, cd_vector
from .corpus import Document
from .embeddings import EmbeddingTable, mean_pool
from .errors import ConfigError
from .neural import Encoded, Seq2SeqModel, pad_words
from .taxonomy import FORWARD, LabelPath, Taxonomy, level_mask

MODES = ("greedy", "beam", "adapted_beam")


@dataclass(frozen=True)
class DecodeConfig:
    mode: str = "greedy"
    beam_size: int = 5
    lam: float = 1.0
    cd_sign: str = "similarity"
    cd_carry: str = "accumulate"
    mean_denominator: str = "all"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"decode mode must be one of {MODES}, got {self.mode!r}")
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        if self.cd_carry not in ("accumulate", "step_only"):
            raise ConfigError(f"cd_carry must be 'accumulate' or 'step_only', got {self.cd_carry!r}")
        if self.cd_sign not in ("similarity", "negated"):
            raise ConfigError(f"cd_sign must be 'similarity' or 'negated', got {self.cd_sign!r}")


@dataclass
class Hypothesis:
    path: tuple[int, ...]                 # global class indices, top level first
    cum_logprob: float
    cum_fused: float
    rank_score: float
    state: object = None
    step_logprobs: tuple[float, ...] = ()
    step_cd: tuple[float, ...] = ()

    def sort_key(self):
        return (-self.rank_score, self.path)


# step_fn(step, hypotheses) -> (log_probs (K, C), per-hypothesis next states)
StepFn = Callable[[int, Sequence[Hypothesis]], tuple[np.ndarray, Sequence[object]]]


def search(step_fn: StepFn, initial_state, num_steps: int, beam_size: int,
           cd: np.ndarray | None = None, cd_carry: str = "accumulate") -> list[Hypothesis]:
    """Breadth-k search; returns the final beam sorted best first.

    Without ``cd`` hypotheses are ranked by cumulative log-probability. With
    ``cd`` (one bonus per global class) the bonus of each chosen class is added
    to the ranking score, either carried along (``accumulate``) or applied to
    the current step's ranking only (``step_only``).
    """
    beam = [Hypothesis((), 0.0, 0.0, 0.0, initial_state)]
    for j in range(num_steps):
        log_probs, states = step_fn(j, beam)
        candidates = []
        for i, hyp in enumerate(beam):
            row = log_probs[i]
            for c in np.flatnonzero(np.isfinite(row)):
                lp = float(row[c])
                cum = hyp.cum_logprob + lp
                bonus = 0.0 if cd is None else float(cd[c])
                if cd is None:
                    fused = rank = cum
                elif cd_carry == "accumulate":
                    fused = rank = hyp.cum_fused + lp + bonus
                else:
                    fused = cum
                    rank = cum + bonus
                candidates.append(Hypothesis(
                    hyp.path + (int(c),), cum, fused, rank, states[i],
                    hyp.step_logprobs + (lp,),
                    hyp.step_cd + ((bonus,) if cd is not None else ()),
                ))
        candidates.sort(key=Hypothesis.sort_key)
        beam = candidates[:beam_size]
    return beam


@dataclass
class Prediction:
    path: LabelPath
    step_logprobs: list[float]
    cum_logprob: float
    fused_score: float
    step_cd: list[float] = field(default_factory=list)
    kbest: list[Hypothesis] = field(default_factory=list)


class DocumentDecoder:
    """Decoding state shared by all searches over one document."""

    def __init__(self, model: Seq2SeqModel, taxonomy: Taxonomy, tokens: Sequence[str],
                 table: EmbeddingTable, cdv_store: CdvStore | None = None,
                 trace: list | None = None):
        if model.config.pnc and cdv_store is None:
            raise ConfigError("a parent-conditioned model needs a CDV store to decode")
        self.model = model
        self.taxonomy = taxonomy
        self.tokens = tokens
        self.table = table
        self.cdv_store = cdv_store
        self.trace = trace
        words, mask = pad_words([tokens], table)
        self.encoded: Encoded = model.encode(words, mask)
        self.masks = [level_mask(taxonomy, j, FORWARD) for j in range(taxonomy.num_levels)]
        self._tiled: dict[int, Encoded] = {1: self.encoded}

    def _enc(self, k: int) -> Encoded:
        if k not in self._tiled:
            self._tiled[k] = self.encoded.repeat(k)
        return self._tiled[k]

    def conditioning(self, j: int, last: np.ndarray) -> np.ndarray | None:
        if not self.model.config.pnc:
            return None
        d = self.model.config.embedding_dim
        if j == 0:
            return np.zeros((len(last), d))
        return self.cdv_store.vectors[last]

    def step_fn(self, j: int, beam: Sequence[Hypothesis]):
        k = len(beam)
        hidden = np.stack([h.state for h in beam])
        last = np.array([h.path[-1] if h.path else self.model.start_index for h in beam])
        cond = self.conditioning(j, last)
        if self.trace is not None:
            for i, h in enumerate(beam):
                self.trace.append((j, h.path, None if cond is None else cond[i].copy()))
        out = self.model.step(self._enc(k), last, hidden, self.masks[j], cond)
        return out.log_probs, list(out.hidden)

    def doc_vector(self, denominator: str = "all") -> np.ndarray:
        return mean_pool(self.table, self.tokens, denominator).values

    def run(self, beam_size: int, cd: np.ndarray | None = None, cd_carry: str = "accumulate"):
        return search(self.step_fn, self.encoded.initial[0], self.taxonomy.num_levels,
                      beam_size, cd, cd_carry)


def _to_prediction(taxonomy: Taxonomy, beam: list[Hypothesis], fused: bool) -> Prediction:
    best = beam[0]
    path = LabelPath(tuple(taxonomy.class_at(g) for g in best.path))
    return Prediction(path, list(best.step_logprobs), best.cum_logprob,
                      best.cum_fused if fused else best.cum_logprob,
                      list(best.step_cd), beam)


def beam_search(model: Seq2SeqModel, document: Document | Sequence[str], taxonomy: Taxonomy,
                table: EmbeddingTable, cdv_store: CdvStore | None = None,
                config: DecodeConfig = DecodeConfig(mode="beam"), trace: list | None = None) -> Prediction:
    tokens = document.tokens if isinstance(document, Document) else document
    dec = DocumentDecoder(model, taxonomy, tokens, table, cdv_store, trace)
    return _to_prediction(taxonomy, dec.run(config.beam_size), fused=False)


def adapted_beam_search(model: Seq2SeqModel, document: Document | Sequence[str], taxonomy: Taxonomy,
                        table: EmbeddingTable, cdv_store: CdvStore,
                        config: DecodeConfig = DecodeConfig(mode="adapted_beam"),
                        trace: list | None = None) -> Prediction:
    tokens = document.tokens if isinstance(document, Document) else document
    dec = DocumentDecoder(model, taxonomy, tokens, table, cdv_store, trace)
    cd = cd_vector(cdv_store, dec.doc_vector(config.mean_denominator), config.lam, config.cd_sign)
    return _to_prediction(taxonomy, dec.run(config.beam_size, cd, config.cd_carry), fused=True)


def greedy_decode_batch(model: Seq2SeqModel, token_lists: Sequence[Sequence[str]], taxonomy: Taxonomy,
                        table: EmbeddingTable, cdv_store: CdvStore | None = None,
                        batch_size: int = 256) -> list[Prediction]:
    """Masked-argmax decoding of many documents at once."""
    if model.config.pnc and cdv_store is None:
        raise ConfigError("a parent-conditioned model needs a CDV store to decode")
    masks = [level_mask(taxonomy, j, FORWARD) for j in range(taxonomy.num_levels)]
    d = model.config.embedding_dim
    results: list[Prediction] = []
    for lo in range(0, len(token_lists), batch_size):
        chunk = token_lists[lo : lo + batch_size]
        words, tmask = pad_words(chunk, table)
        enc = model.encode(words, tmask)
        B = len(chunk)
        rows = np.arange(B)
        prev = np.full(B, model.start_index)
        hidden = enc.initial
        chosen, lps = [], []
        for j, mask in enumerate(masks):
            cond = None
            if model.config.pnc:
                cond = np.zeros((B, d)) if j == 0 else cdv_store.vectors[prev]
            out = model.step(enc, prev, hidden, mask, cond)
            pick = np.argmax(out.log_probs, axis=1)  # first maximum = lowest class index
            chosen.append(pick)
            lps.append(out.log_probs[rows, pick])
            prev, hidden = pick, out.hidden
        for b in range(B):
            path = LabelPath(tuple(taxonomy.class_at(int(c[b])) for c in chosen))
            step_lp = [float(lp[b]) for lp in lps]
            results.append(Prediction(path, step_lp, float(sum(step_lp)), float(sum(step_lp))))
    return results


def greedy_decode(model: Seq2SeqModel, document: Document | Sequence[str], taxonomy: Taxonomy,
                  table: EmbeddingTable, cdv_store: CdvStore | None = None) -> Prediction:
    tokens = document.tokens if isinstance(document, Document) else document
    return greedy_decode_batch(model, [tokens], taxonomy, table, cdv_store)[0]


def decode(model: Seq2SeqModel, document: Document | Sequence[str], taxonomy: Taxonomy,
           table: EmbeddingTable, cdv_store: CdvStore | None, config: DecodeConfig) -> Prediction:
    if config.mode == "greedy":
        return greedy_decode(model, document, taxonomy, table, cdv_store)
    if config.mode == "beam":
        return beam_search(model, document, taxonomy, table, cdv_store, config)
    if cdv_store is None:
        raise ConfigError("adapted beam search needs a CDV store")
    return adapted_beam_search(model, document, taxonomy, table, cdv_store, config)


def decode_many(model, documents, taxonomy, table, cdv_store, config: DecodeConfig,
                workers: int = 1) -> list[Prediction]:
    """Decode in input order; beam modes may fan out over threads."""
    if config.mode == "greedy":
        return greedy_decode_batch(model, [d.tokens for d in documents], taxonomy, table, cdv_store)
    run = lambda doc: decode(model, doc, taxonomy, table, cdv_store, config)  # noqa: E731
    if workers <= 1:
        return [run(doc) for doc in documents]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, documents))
