"""scikit-learn compatible wrappers.

``HashingFeaturizer`` is a stateless transformer from texts to hashed sparse
features. ``TenantMaskedClassifier`` fits one unified model over every tenant
seen in ``fit`` and restricts ``predict`` to the tenant named per row::

    clf = TenantMaskedClassifier(epochs=5).fit(texts, labels, tenants=tenants)
    clf.predict(["kartım kayboldu"], tenants="banka1")
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ShapeError, ValidationError
from .features import FeaturizerConfig, featurize_many
from .labelspace import LabelSpace
from .model import LinearModel, TrainConfig, logits_batch, masked_softmax, train

DEFAULT_TENANT = "default"


def check_texts(X):
    if isinstance(X, str):
        raise ValidationError("expected a sequence of texts, got a single string")
    texts = list(X)
    for t in texts:
        if not isinstance(t, str):
            raise ValidationError(f"texts must be strings, got {type(t).__name__}")
    return texts


def _broadcast_tenants(tenants, n):
    if tenants is None or isinstance(tenants, str):
        return [tenants] * n
    tenants = list(tenants)
    if len(tenants) != n:
        raise ShapeError(f"{len(tenants)} tenants given for {n} samples")
    return tenants


class HashingFeaturizer(TransformerMixin, BaseEstimator):
    """Texts to L2-normalized hashed n-gram counts (CSR, ``dims`` columns)."""

    def __init__(self, dims=1 << 18, word_ngrams=(1, 2), char_ngrams=(3, 5), lowercase=True):
        self.dims = dims
        self.word_ngrams = word_ngrams
        self.char_ngrams = char_ngrams
        self.lowercase = lowercase

    def get_config(self):
        return FeaturizerConfig(self.dims, tuple(self.word_ngrams), tuple(self.char_ngrams), self.lowercase)

    def fit(self, X=None, y=None):
        self.config_ = self.get_config()
        return self

    def transform(self, X):
        return featurize_many(self.get_config(), check_texts(X))

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.string = True
        tags.input_tags.two_d_array = False
        tags.requires_fit = False
        return tags


class TenantMaskedClassifier(ClassifierMixin, BaseEstimator):
    """One classifier for many tenants, predicting inside a tenant's labels.

    ``X`` is a sequence of texts or a sparse matrix from
    :class:`HashingFeaturizer` with matching settings. ``tenants`` gives the
    tenant of each row (or one tenant for all rows); in ``fit`` it defaults
    to a single tenant. Without tenants at predict time, or with
    ``masked=False``, prediction ranges over every class of every tenant.
    """

    def __init__(
        self,
        dims=1 << 18,
        word_ngrams=(1, 2),
        char_ngrams=(3, 5),
        lowercase=True,
        hidden_dim=64,
        epochs=5,
        learning_rate=0.1,
        batch_size=32,
        l2=1e-6,
        seed=0,
        shuffle=True,
    ):
        self.dims = dims
        self.word_ngrams = word_ngrams
        self.char_ngrams = char_ngrams
        self.lowercase = lowercase
        self.hidden_dim = hidden_dim
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.l2 = l2
        self.seed = seed
        self.shuffle = shuffle

    def _features(self, X, cfg):
        if sp.issparse(X):
            if X.shape[1] != cfg.dims:
                raise ShapeError(f"features have {X.shape[1]} columns, expected {cfg.dims}")
            return sp.csr_matrix(X)
        return featurize_many(cfg, check_texts(X))

    def fit(self, X, y, tenants=None):
        fcfg = FeaturizerConfig(self.dims, tuple(self.word_ngrams), tuple(self.char_ngrams), self.lowercase)
        tcfg = TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            l2=self.l2,
            seed=self.seed,
            shuffle=self.shuffle,
            hidden_dim=self.hidden_dim,
        )
        Xf = self._features(X, fcfg)
        y = list(y)
        if len(y) != Xf.shape[0]:
            raise ShapeError(f"{Xf.shape[0]} samples but {len(y)} labels")
        tenants = [DEFAULT_TENANT if t is None else t for t in _broadcast_tenants(tenants, len(y))]

        labels_by_tenant = {}
        originals = {}
        for t, lab in zip(tenants, y):
            labels_by_tenant.setdefault(t, set()).add(str(lab))
            originals[(t, str(lab))] = lab
        space = LabelSpace.from_tenants((t, sorted(labs)) for t, labs in labels_by_tenant.items())
        gids = np.array([space.local_to_global(t, str(lab)) for t, lab in zip(tenants, y)], dtype=np.int64)

        self.model_, self.trace_ = train(Xf, gids, tcfg, space, fcfg, name="estimator")
        self.original_labels_ = originals
        self._set_fitted_attributes()
        return self

    def _set_fitted_attributes(self):
        space = self.model_.label_space
        self.label_space_ = space
        self.tenants_ = np.array(space.tenants, dtype=object)
        classes = np.empty(space.n_classes, dtype=object)
        classes[:] = list(space.entries)
        self.classes_ = classes

    @classmethod
    def from_model(cls, model: LinearModel):
        """Wrap an already trained model; fit-time settings are copied over."""
        fc = model.featurizer_config
        clf = cls(
            dims=fc.dims,
            word_ngrams=fc.word_ngrams,
            char_ngrams=fc.char_ngrams,
            lowercase=fc.lowercase,
            hidden_dim=model.hidden_dim,
        )
        clf.model_ = model
        clf.trace_ = None
        clf.original_labels_ = {}
        clf._set_fitted_attributes()
        return clf

    def decision_function(self, X):
        """Raw logits over the global class axis, shape (n_samples, n_classes)."""
        check_is_fitted(self, "model_")
        return logits_batch(self.model_, self._features(X, self.model_.featurizer_config))

    def _masks(self, tenants, n, masked):
        space = self.model_.label_space
        rows = _broadcast_tenants(tenants if masked else None, n)
        cache = {}
        out = np.empty((n, space.n_classes), dtype=bool)
        for i, t in enumerate(rows):
            if t not in cache:
                cache[t] = np.ones(space.n_classes, bool) if t is None else space.mask_for_tenant(t).allowed
            out[i] = cache[t]
        return out

    def predict_proba(self, X, tenants=None, masked=True):
        Z = self.decision_function(X)
        masks = self._masks(tenants, len(Z), masked)
        return np.vstack([masked_softmax(z, m) for z, m in zip(Z, masks)]) if len(Z) else Z

    def predict_gids(self, X, tenants=None, masked=True):
        Z = self.decision_function(X)
        masks = self._masks(tenants, len(Z), masked)
        return np.where(masks, Z, -np.inf).argmax(axis=1)

    def predict(self, X, tenants=None, masked=True):
        gids = self.predict_gids(X, tenants, masked)
        entries = self.model_.label_space.entries
        out = np.empty(len(gids), dtype=object)
        out[:] = [self.original_labels_.get(entries[g], entries[g][1]) for g in gids.tolist()]
        return out

    def predict_tenant(self, X, tenants=None, masked=True):
        gids = self.predict_gids(X, tenants, masked)
        entries = self.model_.label_space.entries
        return np.array([entries[g][0] for g in gids.tolist()], dtype=object)

    def score(self, X, y, tenants=None, masked=True, sample_weight=None):
        """Accuracy; with ``tenants`` a prediction must also land in the right tenant."""
        gids = self.predict_gids(X, tenants, masked)
        entries = self.model_.label_space.entries
        y = [str(lab) for lab in y]
        rows = _broadcast_tenants(tenants, len(y))
        correct = np.array([
            entries[g][1] == lab and (t is None or entries[g][0] == t)
            for g, lab, t in zip(gids.tolist(), y, rows)
        ], dtype=np.float64)
        return float(np.average(correct, weights=sample_weight))

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.string = True
        tags.input_tags.sparse = True
        tags.input_tags.two_d_array = False
        return tags
