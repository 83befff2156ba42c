from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hierseq.metrics import evaluate
from hierseq.taxonomy import ClassId, LabelPath


def P(*idx):
    return LabelPath(tuple(ClassId(j, k) for j, k in enumerate(idx)))


def test_all_correct():
    gold = [P(0, 1), P(1, 2)]
    report = evaluate(gold, gold)
    assert report.path_accuracy == 1 and report.level_accuracy == [1, 1]


def test_one_wrong_at_level_two():
    report = evaluate([P(0, 1), P(1, 3)], [P(0, 1), P(1, 2)])
    assert report.level_accuracy == [Fraction(1), Fraction(1, 2)]
    assert report.path_accuracy == Fraction(1, 2)


def test_length_mismatch():
    with pytest.raises(ValueError):
        evaluate([P(0, 1)], [])


def _tally(preds, gold):
    """Second counting routine: column-wise comparisons over an index matrix."""
    a = np.array([[c.index for c in p] for p in preds])
    b = np.array([[c.index for c in g] for g in gold])
    eq = a == b
    return eq.sum(axis=0).tolist(), int(eq.all(axis=1).sum())


def test_random_instance_matches_independent_tally():
    rng = np.random.default_rng(0)
    gold = [P(*rng.integers(3, size=3)) for _ in range(50)]
    preds = [P(*rng.integers(3, size=3)) for _ in range(50)]
    report = evaluate(preds, gold)
    levels, path = _tally(preds, gold)
    assert report.level_correct == levels and report.path_correct == path
    for j in range(3):
        assert sum(report.confusion[j].values()) == 50


paths = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=40)


@given(paths, paths, st.randoms())
def test_properties(p, g, rnd):
    n = min(len(p), len(g))
    preds, gold = [P(*x) for x in p[:n]], [P(*x) for x in g[:n]]
    report = evaluate(preds, gold)
    assert report.path_accuracy <= min(report.level_accuracy)
    order = list(range(n))
    rnd.shuffle(order)
    shuffled = evaluate([preds[i] for i in order], [gold[i] for i in order])
    assert shuffled.level_correct == report.level_correct
    assert shuffled.path_correct == report.path_correct


def test_render_has_note_and_decimals():
    report = evaluate([P(0, 1), P(1, 3), P(0, 0)], [P(0, 1), P(1, 2), P(0, 0)])
    text = report.render()
    assert text.startswith("#")
    assert "0.666667" in text
    assert report.summary()["path_accuracy"] == round(2 / 3, 6)
