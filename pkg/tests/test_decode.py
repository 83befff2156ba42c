import math

import numpy as np
import pytest

from helpers import brute_force, random_model, random_taxonomy
from hierseq.cdv import CdvStore, cd_vector
from hierseq.decode import (
    DecodeConfig,
    adapted_beam_search,
    beam_search,
    greedy_decode,
    greedy_decode_batch,
    search,
)
from hierseq.embeddings import EmbeddingTable, mean_pool
from hierseq.taxonomy import build_taxonomy

VOCAB = [f"w{i}" for i in range(12)]


def make_instance(seed, sizes=None, pnc=None, d=3, H=4):
    rng = np.random.default_rng(seed)
    sizes = sizes or [int(rng.integers(2, 5)), int(rng.integers(2, 5))]
    tax = random_taxonomy(rng, sizes)
    pnc = bool(rng.integers(2)) if pnc is None else pnc
    model = random_model(rng, d, H, tax.num_classes, pnc=pnc, scale=1.0)
    table = EmbeddingTable(VOCAB, rng.normal(size=(len(VOCAB), d)))
    store = CdvStore(tax, rng.normal(size=(tax.num_classes, d)), np.ones(tax.num_classes, dtype=bool))
    tokens = [VOCAB[int(i)] for i in rng.integers(len(VOCAB), size=int(rng.integers(1, 6)))]
    return tax, model, table, store, tokens


@pytest.mark.parametrize("seed", range(12))
def test_beam_finds_exhaustive_argmax(seed):
    tax, model, table, store, tokens = make_instance(seed, sizes=[3, 4] if seed == 0 else None)
    n = len(list(tax.level_sequences()))
    pred = beam_search(model, tokens, tax, table, store, DecodeConfig(mode="beam", beam_size=n))
    path, score = brute_force(model, tax, table, store, tokens)
    assert pred.kbest[0].path == path
    assert pred.cum_logprob == pytest.approx(score, abs=1e-10)


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("lam", [0.5, 1.0])
def test_adapted_beam_finds_fused_argmax(seed, lam):
    tax, model, table, store, tokens = make_instance(seed)
    n = len(list(tax.level_sequences()))
    cfg = DecodeConfig(mode="adapted_beam", beam_size=n, lam=lam)
    pred = adapted_beam_search(model, tokens, tax, table, store, cfg)
    cd = cd_vector(store, mean_pool(table, tokens).values, lam)
    path, score = brute_force(model, tax, table, store, tokens, cd)
    assert pred.kbest[0].path == path
    assert pred.fused_score == pytest.approx(score, abs=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_beam_one_equals_greedy(seed):
    tax, model, table, store, tokens = make_instance(seed, sizes=[3, 5, 2] if seed % 2 else None)
    g = greedy_decode(model, tokens, tax, table, store)
    b = beam_search(model, tokens, tax, table, store, DecodeConfig(mode="beam", beam_size=1))
    assert g.path == b.path
    np.testing.assert_allclose(g.step_logprobs, b.step_logprobs, atol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_lambda_zero_is_standard_beam(seed):
    tax, model, table, store, tokens = make_instance(seed)
    std = beam_search(model, tokens, tax, table, store, DecodeConfig(mode="beam", beam_size=4))
    fused = adapted_beam_search(model, tokens, tax, table, store,
                                DecodeConfig(mode="adapted_beam", beam_size=4, lam=0.0))
    assert [h.path for h in std.kbest] == [h.path for h in fused.kbest]
    for h in fused.kbest:
        assert abs(h.cum_fused - h.cum_logprob) <= 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_equal_cdvs_keep_standard_ranking(seed):
    tax, model, table, _, tokens = make_instance(seed)
    same = CdvStore(tax, np.tile(np.array([0.3, -0.2, 0.9]), (tax.num_classes, 1)),
                    np.ones(tax.num_classes, dtype=bool))
    std = beam_search(model, tokens, tax, table, same, DecodeConfig(mode="beam", beam_size=3))
    fused = adapted_beam_search(model, tokens, tax, table, same,
                                DecodeConfig(mode="adapted_beam", beam_size=3, lam=1.0))
    assert [h.path for h in std.kbest] == [h.path for h in fused.kbest]


@pytest.mark.parametrize("seed", range(6))
def test_kbest_sorted_and_level_valid(seed):
    tax, model, table, store, tokens = make_instance(seed, sizes=[3, 4, 3])
    pred = beam_search(model, tokens, tax, table, store, DecodeConfig(mode="beam", beam_size=5))
    scores = [h.cum_logprob for h in pred.kbest]
    assert scores == sorted(scores, reverse=True)
    assert all(s <= 0 for s in scores)
    for h in pred.kbest:
        assert [tax.class_at(g).level for g in h.path] == [0, 1, 2]


def test_forced_choice_greedy():
    rng = np.random.default_rng(0)
    tax = build_taxonomy([["a"], ["b"]])
    model = random_model(rng, 3, 4, 2)
    table = EmbeddingTable(VOCAB, rng.normal(size=(len(VOCAB), 3)))
    pred = greedy_decode(model, ["w1", "w2"], tax, table)
    assert tax.path_names(pred.path) == ["a", "b"]
    assert pred.cum_logprob == 0.0


def test_greedy_batch_matches_single():
    tax, model, table, store, _ = make_instance(3, sizes=[3, 4])
    docs = [["w1", "w2", "w3"], ["w4"], ["w5", "w6"]]
    batched = greedy_decode_batch(model, docs, tax, table, store)
    for doc, pred in zip(docs, batched):
        single = greedy_decode(model, doc, tax, table, store)
        assert single.path == pred.path


@pytest.mark.parametrize("mode", ["beam", "adapted_beam"])
def test_pnc_chaining_uses_own_parent(mode):
    tax, model, table, store, tokens = make_instance(4, sizes=[3, 3, 2], pnc=True)
    trace = []
    fn = beam_search if mode == "beam" else adapted_beam_search
    fn(model, tokens, tax, table, store, DecodeConfig(mode=mode, beam_size=3), trace=trace)
    assert trace
    for step, prefix, cond in trace:
        if step == 0:
            assert not cond.any()
        else:
            assert np.array_equal(cond, store.vectors[prefix[-1]])


def test_step_only_carry_discards_bonus():
    tax, model, table, store, tokens = make_instance(5)
    cfg = DecodeConfig(mode="adapted_beam", beam_size=2, cd_carry="step_only")
    pred = adapted_beam_search(model, tokens, tax, table, store, cfg)
    for h in pred.kbest:
        assert h.cum_fused == h.cum_logprob
        assert h.rank_score == pytest.approx(h.cum_logprob + h.step_cd[-1])


# -- hand-built fused-score instance ------------------------------------------

TAX = build_taxonomy([["A", "B"], ["C", "D"]])
# P(A)=.6 P(B)=.4; P(C|A)=P(D|A)=.5; P(C|B)=.9 P(D|B)=.1
TABLE_PROBS = {(): [0.6, 0.4, 0, 0], (0,): [0, 0, 0.5, 0.5], (1,): [0, 0, 0.9, 0.1]}


def table_step(step, beam):
    rows = []
    for h in beam:
        p = np.array(TABLE_PROBS[h.path])
        with np.errstate(divide="ignore"):
            rows.append(np.where(p > 0, np.log(p), -np.inf))
    return np.array(rows), [None] * len(beam)


def enumerate_fused(cd):
    scored = []
    for path in [(0, 2), (0, 3), (1, 2), (1, 3)]:
        lp = math.log(TABLE_PROBS[()][path[0]]) + math.log(TABLE_PROBS[path[:1]][path[1]])
        scored.append((-(lp + sum(cd[c] for c in path)), path))
    return min(scored)[1]


@pytest.mark.parametrize("cd, flips", [
    (np.array([0.5, 0.0, 0.0, 0.3]), True),    # A-D overtakes B-C
    (np.array([0.0, 0.0, 0.0, 0.0]), False),
    (np.array([0.1, 0.1, 0.1, 0.1]), False),
    (np.array([0.0, 0.2, 0.0, 0.0]), False),
])
def test_fused_search_flips_only_when_fused_argmax_differs(cd, flips):
    standard = search(table_step, None, 2, beam_size=4)[0].path
    fused = search(table_step, None, 2, beam_size=4, cd=cd)[0].path
    assert standard == enumerate_fused(np.zeros(4)) == (1, 2)
    assert fused == enumerate_fused(cd)
    assert (fused != standard) == flips


def test_ties_break_on_class_indices():
    beam = search(table_step, None, 2, beam_size=4)
    assert [h.path for h in beam] == [(1, 2), (0, 2), (0, 3), (1, 3)]
