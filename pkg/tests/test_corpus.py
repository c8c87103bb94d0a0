import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tenantmask.corpus import (
    Dataset,
    Example,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split_by_label_partition,
    split_within_class,
    train_test_split,
)
from tenantmask.errors import (
    EmptyDatasetError,
    InvalidPartitionError,
    ParseError,
    UnsplittableClassError,
    ValidationError,
)


def make_dataset(counts, tenant="t"):
    """``counts`` maps label -> number of examples."""
    examples = [
        Example(f"text {label} {i}", tenant, label)
        for label, n in counts.items()
        for i in range(n)
    ]
    return Dataset(tuple(examples), "d", tenant)


def ids(d):
    return Counter((ex.text, ex.label) for ex in d.examples)


def test_load_skips_blank_lines(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"text": "kartım", "label": "kart"}\n\n{"text": "iade", "label": "iade"}\n', encoding="utf-8")
    d = load_dataset(p, "banka1")
    assert len(d) == 2
    assert d.labels == ("iade", "kart")
    assert all(ex.tenant == "banka1" for ex in d)


@pytest.mark.parametrize("bad, line", [
    ('{"text": "a", "label": "x"}\nnot json\n', 2),
    ('{"text": "a"}\n', 1),
    ('{"text": "a", "label": "x"}\n\n[1, 2]\n', 3),
    ('{"text": "   ", "label": "x"}\n', 1),
])
def test_load_reports_line(tmp_path, bad, line):
    p = tmp_path / "d.jsonl"
    p.write_text(bad, encoding="utf-8")
    with pytest.raises(ParseError) as err:
        load_dataset(p, "t")
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_load_empty(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("\n\n", encoding="utf-8")
    with pytest.raises(EmptyDatasetError):
        load_dataset(p, "t")


def test_save_load_roundtrip(tmp_path):
    d = make_dataset({"a": 2, "ç": 3})
    p = tmp_path / "d.jsonl"
    save_dataset(d, p)
    back = load_dataset(p, "t", name="d")
    assert back.examples == d.examples


def test_dataset_rejects_mixed_tenants():
    with pytest.raises(ValidationError):
        Dataset((Example("a", "x", "l"), Example("b", "y", "l")), "d", "x")


def test_partition_77_labels_into_38_and_39():
    d = make_dataset({f"lab{i:02d}": 2 for i in range(77)})
    left, right = split_by_label_partition(d, 38, left_tenant="banka1", right_tenant="banka2")
    assert len(left.labels) == 38 and len(right.labels) == 39
    assert set(left.labels).isdisjoint(right.labels)
    assert left.labels == tuple(f"lab{i:02d}" for i in range(38))
    assert left.tenant == "banka1" and right.tenant == "banka2"
    assert all(ex.tenant == "banka2" for ex in right)
    assert len(left) + len(right) == len(d)


def test_partition_first_seen_order():
    examples = [Example("x", "t", lab) for lab in ("c", "a", "b", "a")]
    d = Dataset(tuple(examples), "d", "t")
    left, right = split_by_label_partition(d, 1, order="first_seen")
    assert left.labels == ("c",)
    assert right.labels == ("a", "b")


@pytest.mark.parametrize("k", [0, 3, -1])
def test_partition_rejects_bad_counts(k):
    d = make_dataset({"a": 1, "b": 1, "c": 1})
    with pytest.raises(InvalidPartitionError):
        split_by_label_partition(d, k)


def test_within_class_halves_26_classes():
    d = make_dataset({f"lab{i:02d}": 10 + i for i in range(26)})
    a, b = split_within_class(d, 0.5, seed=0)
    assert a.labels == b.labels == d.labels
    assert len(a.labels) == 26
    ca = Counter(a.label_names)
    cb = Counter(b.label_names)
    for i in range(26):
        n = 10 + i
        assert ca[f"lab{i:02d}"] == -(-n // 2)
        assert cb[f"lab{i:02d}"] == n // 2


def test_within_class_seven_examples():
    d = make_dataset({"only": 7})
    a, b = split_within_class(d, 0.5, seed=3)
    assert (len(a), len(b)) == (4, 3)


def test_within_class_is_deterministic_and_seed_sensitive():
    d = make_dataset({"a": 30, "b": 31})
    assert split_within_class(d, 0.5, 1) == split_within_class(d, 0.5, 1)
    assert split_within_class(d, 0.5, 1)[0].examples != split_within_class(d, 0.5, 2)[0].examples


def test_within_class_singleton_fails():
    d = make_dataset({"a": 4, "lonely": 1})
    with pytest.raises(UnsplittableClassError) as err:
        split_within_class(d, 0.5, 0)
    assert err.value.labels == ["lonely"]


def test_within_class_bad_fraction():
    with pytest.raises(ValidationError):
        split_within_class(make_dataset({"a": 2}), 1.5, 0)


def test_train_test_split_keeps_every_class_in_train():
    d = make_dataset({"a": 2, "b": 10, "c": 3})
    train, test = train_test_split(d, 0.2, seed=0)
    assert Counter(test.label_names) == {"a": 1, "b": 2, "c": 1}
    assert set(train.label_names) == {"a", "b", "c"}
    assert ids(train) + ids(test) == ids(d)


def test_train_test_split_fraction_edges():
    d = make_dataset({"a": 1, "b": 1})
    train, test = train_test_split(d, 0.0, seed=0)
    assert len(test) == 0 and len(train) == 2
    train, test = train_test_split(d, 1.0, seed=0)
    assert len(train) == 0 and len(test) == 2


label_counts = st.dictionaries(
    st.text("abcçğı", min_size=1, max_size=3), st.integers(2, 9), min_size=2, max_size=6
)


@settings(max_examples=60, deadline=None)
@given(label_counts, st.floats(0.05, 0.95), st.integers(0, 2**16))
def test_within_class_conserves(counts, fraction, seed):
    d = make_dataset(counts)
    a, b = split_within_class(d, fraction, seed)
    assert ids(a) + ids(b) == ids(d)
    assert not (set(ids(a)) & set(ids(b)))


@settings(max_examples=60, deadline=None)
@given(label_counts, st.data())
def test_partition_conserves(counts, data):
    d = make_dataset(counts)
    k = data.draw(st.integers(1, len(counts) - 1))
    left, right = split_by_label_partition(d, k)
    assert ids(left) + ids(right) == ids(d)
    assert set(left.labels) | set(right.labels) == set(d.labels)


def test_default_synthetic_shape():
    datasets = generate_synthetic(SyntheticSpec(examples_per_label=2))
    assert [d.tenant for d in datasets] == ["banka1", "banka2", "firma1", "firma2", "covid"]
    assert [len(d.labels) for d in datasets] == [38, 39, 26, 26, 25]
    assert sum(len(d.labels) for d in datasets) == 154
    assert set(datasets[0].labels).isdisjoint(datasets[1].labels)
    # the mirrored pair shares label names
    assert datasets[2].labels == datasets[3].labels


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(examples_per_label=3, seed=11)
    assert generate_synthetic(spec) == generate_synthetic(spec)
    assert generate_synthetic(spec) != generate_synthetic(SyntheticSpec(examples_per_label=3, seed=12))


def test_synthetic_word_counts():
    spec = SyntheticSpec(examples_per_label=5, word_count_range=(3, 6))
    for d in generate_synthetic(spec):
        for ex in d:
            assert 3 <= len(ex.text.split()) <= 6


@pytest.mark.parametrize("kwargs", [
    {"labels_per_tenant": (1, 2)},
    {"vocab_overlap": 1.5},
    {"mirrors": ((0, 1),)},
    {"mirrors": ((2, 3), (3, 4))},
    {"word_count_range": (5, 2)},
])
def test_synthetic_spec_validation(kwargs):
    with pytest.raises(ValidationError):
        SyntheticSpec(**kwargs)


def test_synthetic_spec_from_dict_rejects_unknown():
    with pytest.raises(ValidationError):
        SyntheticSpec.from_dict({"n_tenants": 5, "colour": "red"})


def test_jsonl_is_utf8(tmp_path):
    d = make_dataset({"şikayet": 1})
    p = tmp_path / "d.jsonl"
    save_dataset(d, p)
    assert json.loads(p.read_text(encoding="utf-8"))["label"] == "şikayet"
