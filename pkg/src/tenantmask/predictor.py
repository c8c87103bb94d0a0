"""Tenant-restricted prediction over a unified model.

A request names its tenant; the model's logits are masked to that tenant's
class interval before normalization, so the answer (and every alternative)
always belongs to the tenant and probabilities are calibrated within it.
``predict_unrestricted`` is the same pipeline with nothing masked, which is
the baseline that can route a query to another tenant's class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .features import featurize, featurize_many
from .labelspace import LabelMask
from .model import LinearModel, logits, logits_batch, masked_softmax

DEFAULT_TOP_K = 3


@dataclass(frozen=True)
class Alternative:
    gid: int
    tenant: str
    label: str
    probability: float


@dataclass(frozen=True)
class Prediction:
    gid: int
    tenant: str
    label: str
    confidence: float
    alternatives: tuple


def _mask(m: LinearModel, tenant):
    if tenant is None:
        return LabelMask.all_true(m.n_classes)
    return m.label_space.mask_for_tenant(tenant)


def _check_k(k):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k!r}")
    return int(k)


def _decide(m: LinearModel, z, mask: LabelMask, k) -> Prediction:
    allowed = mask.allowed
    probs = masked_softmax(z, mask)
    gids = np.flatnonzero(allowed)
    # logits order == probability order; lexsort keys run last-to-first
    order = gids[np.lexsort((gids, -z[gids]))]
    top = order[:min(k, len(gids))]
    space = m.label_space
    alts = []
    for g in top.tolist():
        tenant, label = space.global_to_local(g)
        alts.append(Alternative(g, tenant, label, float(probs[g])))
    best = alts[0]
    return Prediction(best.gid, best.tenant, best.label, best.probability, tuple(alts))


def predict_for_tenant(m: LinearModel, tenant: str, text: str, k: int = DEFAULT_TOP_K) -> Prediction:
    k = _check_k(k)
    mask = _mask(m, tenant)
    z = logits(m, featurize(m.featurizer_config, text))
    return _decide(m, z, mask, k)


def predict_unrestricted(m: LinearModel, text: str, k: int = DEFAULT_TOP_K) -> Prediction:
    k = _check_k(k)
    z = logits(m, featurize(m.featurizer_config, text))
    return _decide(m, z, _mask(m, None), k)


def predict_from_logits(m: LinearModel, z, tenant=None, k: int = DEFAULT_TOP_K) -> Prediction:
    """Decision step alone, for callers that already hold logits."""
    return _decide(m, np.asarray(z, dtype=np.float64), _mask(m, tenant), _check_k(k))


def score_features(m: LinearModel, X, tenant=None):
    """Batch form over featurized rows: ``(predicted gids, probability rows)``."""
    mask = _mask(m, tenant)
    Z = logits_batch(m, X)
    preds = np.where(mask.allowed, Z, -np.inf).argmax(axis=1)
    probs = np.vstack([masked_softmax(z, mask) for z in Z]) if len(Z) else np.zeros((0, m.n_classes))
    return preds, probs


def score_texts(m: LinearModel, texts, tenant=None):
    return score_features(m, featurize_many(m.featurizer_config, texts), tenant)
