"""Accuracy, per-class precision/recall/F1, macro/micro F1, confusion matrix.

Precision, recall and F1 use the 0/0 -> 0 convention. Macro F1 averages over
the declared label set, so a class with no support still counts (as 0).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvaluationError, ValidationError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    labelset: tuple
    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    def __eq__(self, other):
        return (
            isinstance(other, ConfusionMatrix)
            and self.labelset == other.labelset
            and np.array_equal(self.counts, other.counts)
        )

    def to_csv(self, names=None) -> str:
        """Comma-separated grid; rows are gold, columns predicted."""
        names = list(names) if names is not None else [str(g) for g in self.labelset]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gold\\pred", *names])
        for name, row in zip(names, self.counts.tolist()):
            w.writerow([name, *row])
        return buf.getvalue()


@dataclass(frozen=True)
class ClassScore:
    gid: int
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    per_class: tuple
    macro_f1: float
    micro_f1: float
    mean_loss: float
    confusion: ConfusionMatrix

    @property
    def n_examples(self):
        return self.confusion.total

    def to_dict(self, names=None):
        names = names or {}
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "mean_loss": self.mean_loss,
            "n_examples": self.n_examples,
            "per_class": [
                {
                    "gid": c.gid,
                    "label": names.get(c.gid, str(c.gid)),
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "support": c.support,
                }
                for c in self.per_class
            ],
            "confusion": {
                "labelset": list(self.confusion.labelset),
                "counts": self.confusion.counts.tolist(),
            },
        }

    def to_json(self, names=None) -> str:
        return json.dumps(self.to_dict(names), ensure_ascii=False, indent=2, allow_nan=True)

    def to_text(self, names=None) -> str:
        names = names or {}
        labels = [names.get(c.gid, str(c.gid)) for c in self.per_class]
        width = max([len("label"), *map(len, labels)])
        lines = [f"{'label':<{width}}  precision  recall      f1  support"]
        for name, c in zip(labels, self.per_class):
            lines.append(f"{name:<{width}}  {c.precision:9.4f}  {c.recall:6.4f}  {c.f1:6.4f}  {c.support:7d}")
        lines.append("")
        lines.append(f"{'accuracy':<{width}}  {self.accuracy:.4f}")
        lines.append(f"{'macro_f1':<{width}}  {self.macro_f1:.4f}")
        lines.append(f"{'micro_f1':<{width}}  {self.micro_f1:.4f}")
        lines.append(f"{'mean_loss':<{width}}  {self.mean_loss:.4f}")
        lines.append(f"{'examples':<{width}}  {self.n_examples}")
        return "\n".join(lines) + "\n"


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den != 0)


def confusion_matrix(pairs, labelset) -> ConfusionMatrix:
    labelset = tuple(int(g) for g in labelset)
    if not labelset:
        raise ValidationError("labelset is empty")
    if len(set(labelset)) != len(labelset):
        raise ValidationError("labelset contains duplicates")
    pos = {g: i for i, g in enumerate(labelset)}
    counts = np.zeros((len(labelset), len(labelset)), dtype=np.int64)
    for gold, pred in pairs:
        try:
            counts[pos[int(gold)], pos[int(pred)]] += 1
        except KeyError:
            raise ValidationError(f"pair ({gold}, {pred}) falls outside the labelset") from None
    return ConfusionMatrix(labelset, counts)


def scores_from_confusion(counts):
    """Per-class (precision, recall, f1, support) arrays from a confusion grid."""
    tp = np.diag(counts).astype(np.float64)
    precision = _safe_div(tp, counts.sum(axis=0))
    recall = _safe_div(tp, counts.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return precision, recall, f1, counts.sum(axis=1)


def classification_report(pairs, labelset, losses=None) -> EvaluationReport:
    pairs = list(pairs)
    if not pairs:
        raise EmptyEvaluationError("nothing to evaluate")
    cm = confusion_matrix(pairs, labelset)
    precision, recall, f1, support = scores_from_confusion(cm.counts)
    total = cm.total
    tp = int(np.trace(cm.counts))
    # single-label: every FP of one class is an FN of another, so micro P = R
    micro_p = tp / total
    micro_f1 = micro_p
    mean_loss = 0.0
    if losses is not None:
        losses = np.asarray(losses, dtype=np.float64)
        if losses.shape != (len(pairs),):
            raise ValidationError("need exactly one loss per pair")
        mean_loss = float(losses.mean())
    per_class = tuple(
        ClassScore(g, float(p), float(r), float(f), int(s))
        for g, p, r, f, s in zip(cm.labelset, precision, recall, f1, support)
    )
    return EvaluationReport(
        accuracy=tp / total,
        per_class=per_class,
        macro_f1=float(f1.mean()),
        micro_f1=micro_f1,
        mean_loss=mean_loss,
        confusion=cm,
    )


def accuracy_score(golds, preds) -> float:
    golds, preds = np.asarray(golds), np.asarray(preds)
    if golds.size == 0:
        raise EmptyEvaluationError("nothing to evaluate")
    return float(np.mean(golds == preds))


def macro_f1_score(golds, preds, labels) -> float:
    """Vectorized macro F1 over ``labels`` (integer ids)."""
    labels = np.asarray(list(labels))
    golds, preds = np.asarray(golds), np.asarray(preds)
    pos = np.full(int(max(labels.max(), golds.max(), preds.max())) + 1, -1)
    pos[labels] = np.arange(len(labels))
    gi, pi = pos[golds], pos[preds]
    if (gi < 0).any() or (pi < 0).any():
        raise ValidationError("ids fall outside the label set")
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    np.add.at(counts, (gi, pi), 1)
    return float(scores_from_confusion(counts)[2].mean())


def evaluate_model(m, dataset, tenant=None, masked=True) -> EvaluationReport:
    """Score ``m`` on ``dataset`` through the predictor.

    With ``masked`` every example is predicted inside ``tenant``'s range (the
    dataset's own tenant by default) and the labelset is that range; otherwise
    predictions range over the whole label space. Per-example loss is the
    negative log-probability of the gold class under the mask in use.
    """
    from .features import featurize_many

    tenant = tenant or dataset.tenant
    if not dataset.examples:
        raise EmptyEvaluationError("dataset is empty")
    space = m.label_space
    golds = [space.local_to_global(tenant, ex.label) for ex in dataset.examples]
    X = featurize_many(m.featurizer_config, dataset.texts)
    return evaluate_features(m, X, golds, tenant, masked)


def evaluate_features(m, X, golds, tenant=None, masked=True) -> EvaluationReport:
    """``evaluate_model`` on already featurized rows with gold global ids."""
    from .predictor import score_features

    golds = np.asarray(golds, dtype=np.int64)
    if golds.size == 0:
        raise EmptyEvaluationError("nothing to evaluate")
    space = m.label_space
    if masked and tenant is None:
        raise ValidationError("masked evaluation needs a tenant")
    preds, probs = score_features(m, X, tenant if masked else None)
    gold_p = probs[np.arange(len(golds)), golds]
    with np.errstate(divide="ignore"):
        losses = -np.log(gold_p)
    if masked:
        r = space.range_of(tenant)
        labelset = range(r.start, r.end)
    else:
        labelset = range(space.n_classes)
    return classification_report(zip(golds.tolist(), preds.tolist()), labelset, losses)
