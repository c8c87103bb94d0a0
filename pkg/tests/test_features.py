import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fnv1a64
from tenantmask.errors import EmptyInputError, ShapeError, ValidationError
from tenantmask.features import FeaturizerConfig, SparseVector, featurize, featurize_many, fnv1a_64, simple_lower, tokenize

WORDS = FeaturizerConfig(dims=1 << 18, word_ngrams=(1, 1), char_ngrams=(0, 0))


@pytest.mark.parametrize("key", ["", "a", "w1:kart", "c3:<ka", "w2:kartım kayboldu"])
def test_hash_matches_reference(key):
    assert fnv1a_64(key.encode("utf-8")) == fnv1a64(key)


def test_known_hash_vectors():
    # published FNV-1a 64 test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_single_word_lands_on_its_hash():
    v = featurize(WORDS, "kart")
    assert v.indices.tolist() == [fnv1a64("w1:kart") % (1 << 18)]
    assert v.values.tolist() == [1.0]


def test_counts_are_normalized():
    v = featurize(WORDS, "kart kart iade")
    kart = fnv1a64("w1:kart") % (1 << 18)
    iade = fnv1a64("w1:iade") % (1 << 18)
    got = dict(v.pairs)
    assert got[kart] == pytest.approx(2 / np.sqrt(5), abs=1e-15)
    assert got[iade] == pytest.approx(1 / np.sqrt(5), abs=1e-15)


def test_char_ngrams_use_boundaries():
    cfg = FeaturizerConfig(dims=1 << 18, word_ngrams=(0, 0), char_ngrams=(3, 3))
    v = featurize(cfg, "ab")
    expected = sorted({fnv1a64(k) % (1 << 18) for k in ("c3:<ab", "c3:ab>")})
    assert v.indices.tolist() == expected


def test_word_order_matters_with_bigrams():
    cfg = FeaturizerConfig()
    a, b = featurize(cfg, "kart kayboldu"), featurize(cfg, "kayboldu kart")
    assert a.indices.tolist() != b.indices.tolist()


def test_lowercase_is_per_code_point():
    assert simple_lower("KARTIM") == "kartim"
    v1 = featurize(FeaturizerConfig(), "KART")
    v2 = featurize(FeaturizerConfig(), "kart")
    assert v1.indices.tolist() == v2.indices.tolist()
    keep = FeaturizerConfig(lowercase=False)
    assert featurize(keep, "KART").indices.tolist() != featurize(keep, "kart").indices.tolist()


def test_empty_input():
    with pytest.raises(EmptyInputError):
        featurize(FeaturizerConfig(), "  \t\n")
    with pytest.raises(EmptyInputError):
        tokenize(FeaturizerConfig(), "")


@pytest.mark.parametrize("dims", [1000, 512, 3000])
def test_dims_validation(dims):
    with pytest.raises(ValidationError):
        FeaturizerConfig(dims=dims)


def test_sparse_vector_validation():
    with pytest.raises(ShapeError):
        SparseVector(1024, np.array([3, 2]), np.array([1.0, 1.0]))
    with pytest.raises(ShapeError):
        SparseVector(1024, np.array([1024]), np.array([1.0]))


def test_batch_matches_single():
    cfg = FeaturizerConfig(dims=1 << 12)
    texts = ["kartım kayboldu", "iade istiyorum lütfen", "şifre"]
    X = featurize_many(cfg, texts)
    for i, t in enumerate(texts):
        v = featurize(cfg, t)
        row = X.getrow(i)
        assert row.indices.tolist() == v.indices.tolist()
        assert row.data.tolist() == v.values.tolist()
    assert featurize_many(cfg, []).shape == (0, 1 << 12)


def test_config_roundtrip():
    cfg = FeaturizerConfig(dims=1 << 14, word_ngrams=(1, 3), char_ngrams=(2, 4), lowercase=False)
    assert FeaturizerConfig.from_dict(cfg.to_dict()) == cfg


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=1, max_size=60).filter(lambda s: s.split()))
def test_any_text_gives_unit_vector(text):
    cfg = FeaturizerConfig(dims=1 << 10)
    v = featurize(cfg, text)
    assert v.norm() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(v.indices) > 0)
    assert v.indices.min() >= 0 and v.indices.max() < cfg.dims
    again = featurize(cfg, text)
    assert np.array_equal(again.indices, v.indices) and np.array_equal(again.values, v.values)
