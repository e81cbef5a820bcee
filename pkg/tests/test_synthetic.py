import numpy as np
import pytest

from gradlre.data import dumps_corpus
from gradlre.exceptions import InvalidSplit, UnknownPreset
from gradlre.synthetic import class_counts, generate_synthetic, preset_inventory


@pytest.mark.parametrize("preset, k, share", [("semeval-like", 19, 0.174), ("tacred-like", 42, 0.787)])
def test_inventory_and_no_relation_share(preset, k, share):
    inv = preset_inventory(preset)
    assert len(inv) == k
    assert inv.no_relation == "no_relation"
    corpus = generate_synthetic(preset, 4000, seed=5)
    counts = np.bincount(corpus.labels(), minlength=k)
    assert abs(counts[inv.no_relation_id] - share * 4000) <= 0.5
    assert counts.min() > 0
    assert counts.sum() == 4000


def test_semeval_like_relations_are_directional():
    names = preset_inventory("semeval-like").names
    assert "Cause-Effect(e1,e2)" in names and "Cause-Effect(e2,e1)" in names


def test_class_counts_sum():
    for n in (190, 1000, 4001):
        c = class_counts("semeval-like", n)
        assert c.sum() == n
        assert c[1:].max() - c[1:].min() <= 1


def test_deterministic_and_seed_sensitive():
    a = dumps_corpus(generate_synthetic("semeval-like", 400, seed=1))
    b = dumps_corpus(generate_synthetic("semeval-like", 400, seed=1))
    c = dumps_corpus(generate_synthetic("semeval-like", 400, seed=2))
    assert a == b and a != c


def test_errors():
    with pytest.raises(UnknownPreset):
        generate_synthetic("nope", 1000, 0)
    with pytest.raises(InvalidSplit):
        generate_synthetic("semeval-like", 100, 0)
