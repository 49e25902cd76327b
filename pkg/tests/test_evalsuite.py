import math

import numpy as np
import pytest
import torch

from infovqg.errors import ConfigError, DataError, DegenerateDataError
from infovqg.evalsuite import (ProbeConfig, bleu_n, cider, diversity_inventiveness,
                               diversity_strength, extract_codes, probe_accuracy,
                               relevance_from_questions)
from infovqg.evalsuite.language import cider_pair, document_frequency
from infovqg.model import ModelDims, build_model


# -- BLEU -----------------------------------------------------------------------------

def test_bleu_identity():
    refs = ["what color is the cube ?", "how many balls are there ?"]
    for n in range(1, 5):
        assert bleu_n(refs, refs, n) == pytest.approx(1.0)


def test_bleu_hand_example():
    # 4/4 clipped unigram matches; c=4 < r=5 so BP = exp(1 - 5/4)
    assert bleu_n(["what is the cat"], ["what color is the cat"], 1) == pytest.approx(
        math.exp(1 - 5 / 4), abs=1e-12)
    assert bleu_n(["what is the cat"], ["what color is the cat"], 1) == pytest.approx(0.7788, abs=1e-4)


def test_bleu_disjoint():
    assert bleu_n(["a b c"], ["d e f"], 1) == 0.0


def test_bleu_clipping():
    # "the" appears 3 times in the candidate but once in the reference
    assert bleu_n(["the the the"], ["the cat sat"], 1) == pytest.approx(1 / 3)


def test_bleu_corpus_level_bigram():
    cands = ["a b c d", "x y"]
    refs = ["a b c e", "x y"]
    # unigram 5/6, bigram 3/4 pooled over the corpus; lengths equal so BP = 1
    assert bleu_n(cands, refs, 2) == pytest.approx(math.sqrt(5 / 6 * 3 / 4))


def test_bleu_bad_inputs():
    with pytest.raises(DataError):
        bleu_n([], [], 1)
    with pytest.raises(DataError):
        bleu_n(["a"], [], 1)
    with pytest.raises(ValueError):
        bleu_n(["a"], ["a"], 5)


def test_bleu_appending_matching_ngram_keeps_precision():
    ref = "what color is the big cube ?".split()
    cand = "what is the cube".split()
    before = bleu_n([cand], [ref], 1)
    after = bleu_n([cand + ["color"]], [ref], 1)
    assert after >= before


# -- CIDEr ----------------------------------------------------------------------------

def test_cider_two_image_fixture():
    # four tokens each, so every order 1..4 has at least one n-gram
    refs = ["a b c d", "e f g h"]
    assert cider(refs, refs) == pytest.approx(10.0, abs=1e-6)


def test_cider_single_image_degenerate():
    assert cider(["a b c"], ["a b c"]) == 0.0


def test_cider_no_overlap():
    assert cider(["x y z w", "e f g h"], ["a b c d", "e f g h"]) == pytest.approx(5.0)
    assert cider(["x y z"], ["a b c"], corpus=["a b c", "d e f"]) == 0.0


def test_cider_pair_symmetric():
    df = document_frequency(["a b c d", "a x y", "b c q"])
    ab = cider_pair("a b c", "b c q", df, 3)
    ba = cider_pair("b c q", "a b c", df, 3)
    assert ab == pytest.approx(ba)


def test_cider_hand_unigram_cosine():
    corpus = ["a b", "a c", "d e"]
    df = document_frequency(corpus, max_n=1)
    # idf(a)=log(3/2), idf(b)=idf(c)=log 3; "a b" vs "a c" share only "a"
    ia, ib = math.log(1.5), math.log(3)
    expect = 10 * ia * ia / (ia ** 2 + ib ** 2)
    assert cider_pair("a b", "a c", df, 3, max_n=1) == pytest.approx(expect)


def test_cider_empty():
    with pytest.raises(DataError):
        cider([], [])


# -- diversity ------------------------------------------------------------------------

def test_strength_fixtures():
    assert diversity_strength(["q1", "q2"], ["q1", "q2", "q3", "q4"]) == 50.0
    assert diversity_strength(["q1", "q2"], ["q1", "q2"]) == 100.0
    assert diversity_strength([f"g{i}" for i in range(6)], ["q1", "q2", "q3", "q4"]) == 150.0
    with pytest.raises(DataError):
        diversity_strength(["q1"], [])


def test_inventiveness_fixtures():
    assert diversity_inventiveness(["q1", "q2"], ["q1"]) == 50.0
    assert diversity_inventiveness(["q1", "q2"], ["q1", "q2", "q3"]) == 0.0
    assert diversity_inventiveness(["q1", "q2"], ["q3"]) == 100.0
    with pytest.raises(DataError):
        diversity_inventiveness([], ["q1"])


def test_set_semantics_and_lowercase():
    assert diversity_strength(["What ?", "what ?", "b ?"], ["b ?", "what ?"]) == 100.0
    assert diversity_strength(["b ?", "what ?"], ["what ?", "b ?"]) == \
        diversity_strength(["what ?", "b ?"], ["b ?", "what ?"])


# -- relevance ------------------------------------------------------------------------

def test_relevance_verbatim_templates(records_600, world):
    qs = [r["question"] for r in records_600]
    assert relevance_from_questions(qs, [r["scene"] for r in records_600],
                                    [r["category"] for r in records_600], world) == (100.0, 100.0)


def test_relevance_fixed_junk(records_600, world):
    qs = ["the the the"] * len(records_600)
    assert relevance_from_questions(qs, [r["scene"] for r in records_600],
                                    [r["category"] for r in records_600], world) == (0.0, 0.0)


def test_relevance_counts_category_mismatch(records_600, world):
    # answerable but always a binary question: image relevance 100, category only when binary
    qs = ["is there a cube ?"] * len(records_600)
    img, cat = relevance_from_questions(qs, [r["scene"] for r in records_600],
                                        [r["category"] for r in records_600], world)
    binary = 100.0 * sum(r["category"] == "binary" for r in records_600) / len(records_600)
    assert img == 100.0 and cat == pytest.approx(binary)


# -- probe ----------------------------------------------------------------------------

def test_probe_separable():
    rng = np.random.default_rng(0)
    y = rng.integers(6, size=600)
    x = np.eye(6)[y] + 0.01 * rng.normal(size=(600, 6))
    res = probe_accuracy(x[:400], y[:400], x[400:], y[400:])
    assert res.accuracy > 95 and res.chance == pytest.approx(100 / 6)


def test_probe_random_labels_near_chance():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2000, 16))
    y = rng.permutation(np.arange(2000) % 6)
    res = probe_accuracy(x[:1000], y[:1000], x[1000:], y[1000:])
    assert abs(res.accuracy - 100 / 6) <= 5


def test_probe_single_class():
    with pytest.raises(DegenerateDataError):
        probe_accuracy(np.zeros((10, 2)), np.zeros(10), np.zeros((3, 2)), np.zeros(3))


def test_probe_config_three_layers():
    with pytest.raises(ConfigError):
        ProbeConfig(hidden=(8,))


@pytest.fixture(scope="module")
def untrained(vocab_600, world):
    def make(variant):
        dims = ModelDims(world.feature_dim, len(vocab_600), len(world.categories), 8, 4)
        return build_model(dims, variant, seed=0)
    return make


def test_extract_codes_shape_and_determinism(untrained, examples_600):
    m = untrained("OURS")
    a, cats, answers = extract_codes(m, examples_600[:50], "t")
    b, _, _ = extract_codes(m, examples_600[:50], "t")
    assert a.shape == (50, 4) and np.array_equal(a, b)
    assert len(cats) == len(answers) == 50


def test_extract_codes_variant_without_t(untrained, examples_600):
    with pytest.raises(ConfigError):
        extract_codes(untrained("IA2Q"), examples_600[:5], "t")


def test_extract_codes_are_means(untrained, examples_600):
    from infovqg.corpus import collate
    m = untrained("OURS")
    codes, _, _ = extract_codes(m, examples_600[:8], "z")
    with torch.no_grad():
        mu = m.posterior(collate(examples_600[:8], 6), "z").mu.double().numpy()
    np.testing.assert_array_equal(codes, mu)
