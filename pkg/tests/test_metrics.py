import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import metrics_by_loops
from tenantmask.corpus import Dataset, Example
from tenantmask.errors import EmptyEvaluationError, ValidationError
from tenantmask.metrics import (
    accuracy_score,
    classification_report,
    confusion_matrix,
    evaluate_model,
    macro_f1_score,
)


def test_worked_example():
    rep = classification_report([(0, 0), (0, 1), (1, 1)], [0, 1])
    assert rep.accuracy == pytest.approx(2 / 3, abs=1e-15)
    assert rep.macro_f1 == pytest.approx(2 / 3, abs=1e-15)
    assert rep.micro_f1 == pytest.approx(2 / 3, abs=1e-15)
    assert rep.confusion.counts.tolist() == [[1, 1], [0, 1]]
    c0, c1 = rep.per_class
    assert (c0.precision, c0.recall, c0.support) == (1.0, 0.5, 2)
    assert (c1.precision, c1.recall, c1.support) == (0.5, 1.0, 1)


def test_absent_class_scores_zero():
    # class 2 never occurs as gold or prediction: F1 0 drags macro down
    rep = classification_report([(0, 0), (1, 1)], [0, 1, 2])
    assert rep.per_class[2].f1 == 0.0
    assert rep.macro_f1 == pytest.approx(2 / 3)
    assert rep.accuracy == 1.0


def test_labelset_need_not_start_at_zero():
    rep = classification_report([(5, 5), (5, 6)], range(5, 8))
    assert rep.confusion.labelset == (5, 6, 7)
    assert rep.confusion.counts.tolist() == [[1, 1, 0], [0, 0, 0], [0, 0, 0]]


def test_errors():
    with pytest.raises(EmptyEvaluationError):
        classification_report([], [0])
    with pytest.raises(ValidationError):
        classification_report([(0, 9)], [0, 1])
    with pytest.raises(ValidationError):
        confusion_matrix([(0, 0)], [0, 0])
    with pytest.raises(EmptyEvaluationError):
        accuracy_score([], [])


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 6).flatmap(lambda k: st.tuples(
    st.just(k),
    st.lists(st.tuples(st.integers(0, k - 1), st.integers(0, k - 1)), min_size=1, max_size=20),
)))
def test_against_loop_oracle(case):
    k, pairs = case
    golds, preds = [g for g, _ in pairs], [p for _, p in pairs]
    ref = metrics_by_loops(golds, preds, list(range(k)))
    rep = classification_report(pairs, range(k))
    assert abs(rep.accuracy - ref["accuracy"]) <= 1e-12
    assert abs(rep.macro_f1 - ref["macro_f1"]) <= 1e-12
    assert abs(rep.micro_f1 - ref["micro_f1"]) <= 1e-12
    assert rep.confusion.counts.tolist() == ref["confusion"]
    for got, (_, p, r, f, s) in zip(rep.per_class, ref["per_class"]):
        assert abs(got.precision - p) <= 1e-12 and abs(got.recall - r) <= 1e-12
        assert abs(got.f1 - f) <= 1e-12 and got.support == s
    assert abs(accuracy_score(golds, preds) - ref["accuracy"]) <= 1e-12
    assert abs(macro_f1_score(golds, preds, range(k)) - ref["macro_f1"]) <= 1e-12


def test_report_serializations():
    rep = classification_report([(0, 0), (0, 1), (1, 1)], [0, 1], losses=[0.1, 2.0, 0.3])
    assert rep.mean_loss == pytest.approx(0.8)
    d = json.loads(rep.to_json({0: "kart", 1: "iade"}))
    assert d["n_examples"] == 3
    assert [c["label"] for c in d["per_class"]] == ["kart", "iade"]
    assert "macro_f1" in rep.to_text()
    assert rep.confusion.to_csv(["kart", "iade"]).splitlines() == ["gold\\pred,kart,iade", "kart,1,1", "iade,0,1"]


def test_evaluate_model_masked_vs_unmasked(small_model, small_corpus):
    for d in small_corpus:
        masked = evaluate_model(small_model, d)
        unmasked = evaluate_model(small_model, d, masked=False)
        assert masked.accuracy >= unmasked.accuracy
        r = small_model.label_space.range_of(d.tenant)
        assert masked.confusion.labelset == tuple(range(r.start, r.end))
        assert len(unmasked.confusion.labelset) == small_model.n_classes
        assert np.isfinite(masked.mean_loss)


def test_evaluate_model_empty(small_model):
    with pytest.raises(EmptyEvaluationError):
        evaluate_model(small_model, Dataset((), "empty", "alpha"))


def test_evaluate_model_other_tenant_labels(small_model):
    d = Dataset((Example("x y", "alpha", "alpha_00"),), "d", "alpha")
    with pytest.raises(LookupError):
        evaluate_model(small_model, d, tenant="beta")
