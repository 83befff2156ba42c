import itertools

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from hierseq.errors import DataError
from hierseq.taxonomy import (
    FORWARD,
    REVERSED,
    ClassId,
    LabelPath,
    build_taxonomy,
    level_mask,
    load_taxonomy,
    reverse_path,
    save_taxonomy,
)


def _write(tmp_path, data):
    path = tmp_path / "taxonomy.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def _levels(*sizes):
    return [{"name": f"L{j}", "classes": [f"c{j}_{k}" for k in range(n)]} for j, n in enumerate(sizes)]


@pytest.fixture
def wos_shaped():
    # level sizes of the WOS taxonomy
    return build_taxonomy([[f"a{k}" for k in range(7)], [f"b{k}" for k in range(143)]])


def test_wos_shaped_file(tmp_path):
    tax = load_taxonomy(_write(tmp_path, {"levels": _levels(7, 143)}))
    assert tax.num_levels == 2
    assert tax.level_sizes == (7, 143)


def test_dbpedia_shaped_file(tmp_path):
    tax = load_taxonomy(_write(tmp_path, {"levels": _levels(9, 70, 219)}))
    assert tax.num_levels == 3
    assert tax.num_classes == 298


@pytest.mark.parametrize(
    "data, message",
    [
        ({"levels": _levels(5)}, "at least 2 levels"),
        ({"levels": [{"name": "x", "classes": ["a", "a"]}, {"name": "y", "classes": ["b"]}]}, "duplicate"),
        ({"levels": [{"name": "x", "classes": ["a"]}, {"name": "y", "classes": []}]}, "empty"),
        ({"levels": _levels(1, 1, 1), "edges": [["c0_0", "c2_0"]]}, "adjacent"),
        ({"levels": _levels(2, 2), "edges": [["c0_0", "c1_0"]]}, "no parent"),
    ],
)
def test_invalid_taxonomies(tmp_path, data, message):
    with pytest.raises(DataError, match=message):
        load_taxonomy(_write(tmp_path, data))


def test_same_name_allowed_across_levels():
    tax = build_taxonomy([["x", "y"], ["x", "z"]])
    assert tax.class_id(1, "x") == ClassId(1, 0)


def test_round_trip(tmp_path):
    tax = build_taxonomy([["a", "b"], ["c", "d", "e"]], edges=[("a", "c"), ("a", "d"), ("b", "e")])
    save_taxonomy(tax, tmp_path / "t.yaml")
    again = load_taxonomy(tmp_path / "t.yaml")
    assert again == tax
    assert again.fingerprint() == tax.fingerprint()


def test_reverse_path_examples():
    a, b, c = ClassId(0, 1), ClassId(1, 0), ClassId(2, 3)
    assert reverse_path(LabelPath((a, b, c))).classes == (c, b, a)
    assert reverse_path(LabelPath((a, b))).classes == (b, a)


@st.composite
def taxonomy_and_path(draw):
    sizes = draw(st.lists(st.integers(1, 5), min_size=2, max_size=5))
    tax = build_taxonomy([[f"n{j}_{k}" for k in range(n)] for j, n in enumerate(sizes)])
    path = LabelPath(tuple(ClassId(j, draw(st.integers(0, n - 1))) for j, n in enumerate(sizes)))
    return tax, path


@given(taxonomy_and_path())
def test_reverse_is_involution(case):
    tax, path = case
    assert reverse_path(reverse_path(path)) == path
    assert tax.is_valid_path(reverse_path(path))


def test_level_mask_counts(wos_shaped):
    assert level_mask(wos_shaped, 0, FORWARD).sum() == 7
    assert level_mask(wos_shaped, 1, FORWARD).sum() == 143
    assert level_mask(wos_shaped, 0, REVERSED).sum() == 143
    assert level_mask(wos_shaped, 0).size == 150
    with pytest.raises(IndexError):
        level_mask(wos_shaped, 2)


@settings(max_examples=50)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=5), st.sampled_from([FORWARD, REVERSED]))
def test_masks_partition_vocabulary(sizes, direction):
    tax = build_taxonomy([[f"n{k}" for k in range(n)] for n in sizes])
    masks = np.stack([level_mask(tax, j, direction) for j in range(tax.num_levels)])
    assert (masks.sum(axis=0) == 1).all()


def test_global_index_round_trip(wos_shaped):
    for cid in wos_shaped.all_classes():
        assert wos_shaped.class_at(wos_shaped.global_index(cid)) == cid


def _brute_force_valid(tax, path):
    """Independent validity rule: levels in order, then every adjacent pair an edge."""
    order = path.classes[::-1] if path.reversed else path.classes
    if len(order) != tax.num_levels:
        return False
    for j, c in enumerate(order):
        if c.level != j or not 0 <= c.index < tax.level_sizes[j]:
            return False
    if tax.edges is None:
        return True
    return all((order[j], order[j + 1]) in tax.edges for j in range(len(order) - 1))


@pytest.mark.parametrize("seed", range(5))
def test_path_validation_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, 4)), int(rng.integers(2, 5)), int(rng.integers(2, 5))]
    names = [[f"n{j}_{k}" for k in range(n)] for j, n in enumerate(sizes)]
    edges = []
    for j in range(1, 3):
        for k, child in enumerate(names[j]):
            parents = rng.choice(sizes[j - 1], size=int(rng.integers(1, sizes[j - 1] + 1)), replace=False)
            edges += [(names[j - 1][int(p)], child) for p in parents]
    tax = build_taxonomy(names, edges)
    assert int(np.prod(sizes)) <= 60
    # every level-ordered sequence plus some mis-ordered and out-of-range candidates
    candidates = list(tax.level_sequences())
    candidates += [LabelPath(p.classes[::-1]) for p in candidates[:10]]
    candidates += [LabelPath((ClassId(0, 0), ClassId(1, 9), ClassId(2, 0)))]
    candidates += [reverse_path(p) for p in candidates[:10]]
    for path in candidates:
        assert tax.is_valid_path(path) == _brute_force_valid(tax, path)
    valid = list(tax.valid_paths())
    assert valid == [p for p in tax.level_sequences() if _brute_force_valid(tax, p)]


def test_enumeration_counts():
    tax = build_taxonomy([["a", "b", "c"], ["w", "x", "y", "z"]])
    assert len(list(tax.level_sequences())) == 12
    assert len(set(itertools.islice(tax.level_sequences(), 100))) == 12
