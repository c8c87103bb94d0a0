"""Linear softmax scorer over hashed features.

The class-by-feature weight matrix is stored factorized as
``head @ encoder.T``: ``encoder`` (D x H) embeds the sparse input and is the
part a single unified model shares across tenants, ``head`` (C x H) plus
``bias`` hold the per-class parameters. Logits stay linear in the input::

    logits(x) = head @ (encoder.T @ x) + bias

Training minimizes mean cross-entropy over all C classes plus
``0.5 * l2 * (|encoder|^2 + |head|^2)`` with plain minibatch SGD.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import CorruptionError, FormatError, InvalidMaskError, ShapeError, ValidationError
from .features import FeaturizerConfig, SparseVector
from .labelspace import LabelMask, LabelSpace
from .metrics import accuracy_score, macro_f1_score

MAGIC = b"MTIC"
FORMAT_VERSION = 1
_LE_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    learning_rate: float = 0.1
    batch_size: int = 32
    l2: float = 1e-6
    seed: int = 0
    shuffle: bool = True
    hidden_dim: int = 64

    def __post_init__(self):
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ValidationError("epochs must be a positive integer")
        # zero is allowed so a frozen run can be traced; negative never is
        if not self.learning_rate >= 0 or math.isinf(self.learning_rate):
            raise ValidationError("learning_rate must be a finite non-negative number")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ValidationError("batch_size must be a positive integer")
        if not self.l2 >= 0:
            raise ValidationError("l2 must be non-negative")
        if not isinstance(self.hidden_dim, int) or self.hidden_dim < 1:
            raise ValidationError("hidden_dim must be a positive integer")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    train_macro_f1: float
    test_accuracy: float
    test_macro_f1: float


@dataclass
class EpochTrace:
    name: str = "model"
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


@dataclass(frozen=True, eq=False)
class LinearModel:
    encoder: np.ndarray
    head: np.ndarray
    bias: np.ndarray
    featurizer_config: FeaturizerConfig
    label_space: LabelSpace

    def __post_init__(self):
        enc = np.ascontiguousarray(self.encoder, dtype=np.float32)
        head = np.ascontiguousarray(self.head, dtype=np.float32)
        bias = np.ascontiguousarray(self.bias, dtype=np.float32)
        if enc.ndim != 2 or head.ndim != 2 or bias.ndim != 1:
            raise ShapeError("encoder and head must be 2-D, bias 1-D")
        C, D = self.label_space.n_classes, self.featurizer_config.dims
        if head.shape[0] != C or bias.shape[0] != C:
            raise ShapeError(f"head/bias rows must equal class count {C}")
        if enc.shape[0] != D:
            raise ShapeError(f"encoder rows must equal feature dims {D}")
        if enc.shape[1] != head.shape[1]:
            raise ShapeError("encoder and head hidden widths differ")
        for name, arr in (("encoder", enc), ("head", head), ("bias", bias)):
            if not np.isfinite(arr).all():
                raise ValidationError(f"{name} contains non-finite values")
            arr.setflags(write=False)
        object.__setattr__(self, "encoder", enc)
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "_head64", head.astype(np.float64))
        object.__setattr__(self, "_bias64", bias.astype(np.float64))

    @property
    def n_classes(self):
        return self.head.shape[0]

    @property
    def dims(self):
        return self.encoder.shape[0]

    @property
    def hidden_dim(self):
        return self.encoder.shape[1]

    def weights(self):
        """Dense C x D weight matrix. Allocates C*D floats."""
        return self._head64 @ self.encoder.T.astype(np.float64)

    @classmethod
    def zeros(cls, featurizer_config, label_space, hidden_dim=1):
        C, D = label_space.n_classes, featurizer_config.dims
        return cls(
            np.zeros((D, hidden_dim), np.float32),
            np.zeros((C, hidden_dim), np.float32),
            np.zeros(C, np.float32),
            featurizer_config,
            label_space,
        )


def logits(m: LinearModel, x: SparseVector) -> np.ndarray:
    if x.dims != m.dims:
        raise ShapeError(f"input has {x.dims} dims, model expects {m.dims}")
    hidden = x.values @ m.encoder[x.indices].astype(np.float64)
    return m._head64 @ hidden + m._bias64


def logits_batch(m: LinearModel, X: sp.csr_matrix) -> np.ndarray:
    """Row-by-row ``logits``; bit-identical to calling it per example."""
    if X.shape[1] != m.dims:
        raise ShapeError(f"input has {X.shape[1]} dims, model expects {m.dims}")
    out = np.empty((X.shape[0], m.n_classes))
    for i in range(X.shape[0]):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        hidden = X.data[lo:hi] @ m.encoder[X.indices[lo:hi]].astype(np.float64)
        out[i] = m._head64 @ hidden + m._bias64
    return out


def _allowed(mask, n):
    allowed = mask.allowed if isinstance(mask, LabelMask) else np.asarray(mask, dtype=bool)
    if allowed.shape != (n,):
        raise ShapeError(f"mask length {allowed.shape} does not match {n} logits")
    if not allowed.any():
        raise InvalidMaskError("mask excludes every class")
    return allowed


def masked_softmax(z, mask) -> np.ndarray:
    """Softmax over the entries ``mask`` allows; excluded entries are exactly 0."""
    z = np.asarray(z, dtype=np.float64)
    allowed = _allowed(mask, z.shape[-1])
    out = np.zeros_like(z)
    sel = z[allowed]
    e = np.exp(sel - sel.max())
    out[allowed] = e / e.sum()
    return out


def masked_log_softmax(z, mask) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    allowed = _allowed(mask, z.shape[-1])
    out = np.full_like(z, -np.inf)
    sel = z[allowed]
    shifted = sel - sel.max()
    out[allowed] = shifted - np.log(np.exp(shifted).sum())
    return out


def _log_softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _compact_columns(X: sp.csr_matrix, dtype):
    """Restrict ``X`` to the columns it touches: returns (cols, X[:, cols])."""
    cols, inverse = np.unique(X.indices, return_inverse=True)
    Xs = sp.csr_matrix(
        (X.data.astype(dtype, copy=False), inverse.reshape(-1), X.indptr),
        shape=(X.shape[0], len(cols)),
    )
    return cols, Xs


def batch_gradients(encoder, head, bias, X: sp.csr_matrix, y, encoder_scale=1.0):
    """Mean cross-entropy and its gradients for one minibatch (no L2 term).

    The encoder gradient is returned only for the rows ``X`` touches, as
    ``(rows, grad_rows)``. The effective encoder is ``encoder_scale * encoder``
    and all gradients are taken with respect to it.
    """
    y = np.asarray(y)
    B = X.shape[0]
    cols, Xs = _compact_columns(X, encoder.dtype)
    enc_rows = encoder[cols]
    hidden = Xs @ enc_rows
    if encoder_scale != 1.0:
        hidden *= encoder_scale
    z = hidden @ head.T + bias
    logp = _log_softmax_rows(z)
    loss = -float(np.mean(logp[np.arange(B), y], dtype=np.float64))
    g = np.exp(logp)
    g[np.arange(B), y] -= 1
    g /= B
    g_head = g.T @ hidden
    g_bias = g.sum(axis=0)
    g_hidden = g @ head
    g_rows = Xs.T @ g_hidden
    return loss, g_head, g_bias, cols, np.asarray(g_rows)


def objective_and_gradient(encoder, head, bias, X, y, l2=0.0):
    """Full regularized objective and dense gradients; for small instances."""
    loss, g_head, g_bias, cols, g_rows = batch_gradients(encoder, head, bias, sp.csr_matrix(X), y)
    g_enc = np.zeros_like(encoder)
    g_enc[cols] = g_rows
    loss += 0.5 * l2 * (float(np.sum(encoder * encoder)) + float(np.sum(head * head)))
    return loss, {"encoder": g_enc + l2 * encoder, "head": g_head + l2 * head, "bias": g_bias}


def _predict_restricted(Z, y, space: LabelSpace, masked):
    """Argmax per row, within the gold tenant's range when ``masked``."""
    if not masked:
        return Z.argmax(axis=1)
    pred = np.empty(len(y), dtype=np.int64)
    owner = space.tenant_ids(y)
    for t, r in enumerate(space.tenant_ranges):
        rows = np.flatnonzero(owner == t)
        if rows.size:
            pred[rows] = Z[rows, r.start:r.end].argmax(axis=1) + r.start
    return pred


def _score_split(encoder, head, bias, X, y, space, masked, chunk=1024):
    X32 = X.astype(np.float32)
    losses, preds = [], []
    for lo in range(0, X.shape[0], chunk):
        Z = np.asarray(X32[lo:lo + chunk] @ encoder, dtype=np.float64) @ head.T.astype(np.float64) + bias
        yy = y[lo:lo + chunk]
        logp = _log_softmax_rows(Z)
        losses.append(-logp[np.arange(len(yy)), yy])
        preds.append(_predict_restricted(Z, yy, space, masked))
    loss = float(np.mean(np.concatenate(losses)))
    pred = np.concatenate(preds)
    labels = range(space.n_classes)
    return loss, accuracy_score(y, pred), macro_f1_score(y, pred, labels)


def _check_xy(X, y, n_classes, dims, what):
    if not sp.issparse(X):
        raise ValidationError(f"{what} features must be a sparse matrix")
    X = sp.csr_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValidationError(f"{what} set is empty")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{what}: {X.shape[0]} rows but {y.shape[0]} labels")
    if X.shape[1] != dims:
        raise ShapeError(f"{what}: features have {X.shape[1]} dims, expected {dims}")
    bad = (y < 0) | (y >= n_classes)
    if bad.any():
        raise ValidationError(f"{what}: class id {int(y[bad][0])} outside [0, {n_classes})")
    X.sort_indices()
    return X, y


def init_params(cfg: TrainConfig, n_classes, dims, rng):
    encoder = rng.standard_normal((dims, cfg.hidden_dim), dtype=np.float32)
    encoder *= np.float32(1.0 / math.sqrt(cfg.hidden_dim))
    head = np.zeros((n_classes, cfg.hidden_dim), np.float32)
    bias = np.zeros(n_classes, np.float32)
    return encoder, head, bias


def train(
    X,
    y,
    cfg: TrainConfig,
    label_space: LabelSpace,
    featurizer_config: FeaturizerConfig,
    eval_set=None,
    masked_eval=True,
    name="model",
):
    """Fit a model by minibatch SGD; returns ``(LinearModel, EpochTrace)``.

    ``X`` holds featurized rows, ``y`` global class ids. The trace records the
    post-epoch training objective (unmasked cross-entropy) and accuracies and
    macro F1 where each example is predicted within its gold tenant's range
    (``masked_eval``), on the training rows and on ``eval_set`` if given.
    """
    C, D = label_space.n_classes, featurizer_config.dims
    X, y = _check_xy(X, y, C, D, "train")
    if eval_set is not None:
        eval_set = _check_xy(eval_set[0], eval_set[1], C, D, "eval")

    rng = np.random.default_rng(cfg.seed)
    encoder, head, bias = init_params(cfg, C, D, rng)
    lr = np.float32(cfg.learning_rate)
    decay = 1.0 - cfg.learning_rate * cfg.l2
    n = X.shape[0]
    trace = EpochTrace(name)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        # encoder L2 decay is applied lazily through a scalar multiplier
        scale = 1.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            _, g_head, g_bias, cols, g_rows = batch_gradients(encoder, head, bias, X[idx], y[idx], scale)
            head -= lr * (g_head + np.float32(cfg.l2) * head)
            bias -= lr * g_bias
            scale *= decay
            if scale != 0.0:
                encoder[cols] -= (lr / np.float32(scale)) * g_rows
        if scale != 1.0:
            encoder *= np.float32(scale)
        if not (np.isfinite(encoder).all() and np.isfinite(head).all() and np.isfinite(bias).all()):
            raise ValidationError(f"training diverged in epoch {epoch}; lower the learning rate")

        tr_loss, tr_acc, tr_f1 = _score_split(encoder, head, bias, X, y, label_space, masked_eval)
        te_acc = te_f1 = float("nan")
        if eval_set is not None:
            _, te_acc, te_f1 = _score_split(encoder, head, bias, *eval_set, label_space, masked_eval)
        trace.records.append(EpochRecord(epoch, tr_loss, tr_acc, tr_f1, te_acc, te_f1))

    return LinearModel(encoder, head, bias, featurizer_config, label_space), trace


# -- persistence -----------------------------------------------------------


def _block(payload: dict) -> bytes:
    raw = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def to_bytes(m: LinearModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    buf.write(_block(m.featurizer_config.to_dict()))
    buf.write(_block(m.label_space.to_dict()))
    buf.write(struct.pack("<III", m.n_classes, m.dims, m.hidden_dim))
    for arr in (m.bias, m.head, m.encoder):
        buf.write(arr.astype(_LE_F32, copy=False).tobytes(order="C"))
    return buf.getvalue()


def serialized_size(n_classes, dims, hidden_dim, header_bytes):
    return header_bytes + 4 * (n_classes + n_classes * hidden_dim + dims * hidden_dim)


class _Reader:
    def __init__(self, raw):
        self.raw = memoryview(raw)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.raw):
            raise CorruptionError(f"file truncated while reading {what}")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def json_block(self, what):
        (length,) = struct.unpack("<I", self.take(4, what))
        try:
            return json.loads(bytes(self.take(length, what)).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptionError(f"unreadable {what} block") from exc

    def floats(self, count, what):
        return np.frombuffer(self.take(4 * count, what), dtype=_LE_F32).astype(np.float32)


def from_bytes(raw: bytes) -> LinearModel:
    r = _Reader(raw)
    if bytes(r.take(4, "magic")) != MAGIC:
        raise FormatError("not a model file (bad magic bytes)")
    (version,) = struct.unpack("<H", r.take(2, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {version}")
    try:
        fcfg = FeaturizerConfig.from_dict(r.json_block("featurizer"))
        space = LabelSpace.from_dict(r.json_block("label space"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CorruptionError):
            raise
        raise CorruptionError(f"invalid header: {exc}") from exc
    C, D, H = struct.unpack("<III", r.take(12, "shape"))
    if C != space.n_classes or D != fcfg.dims:
        raise CorruptionError("shape header disagrees with embedded configuration")
    bias = r.floats(C, "bias")
    head = r.floats(C * H, "head").reshape(C, H)
    encoder = r.floats(D * H, "encoder").reshape(D, H)
    if r.pos != len(r.raw):
        raise CorruptionError(f"{len(r.raw) - r.pos} unexpected trailing bytes")
    return LinearModel(encoder, head, bias, fcfg, space)


def save(m: LinearModel, path) -> int:
    """Write ``m`` to ``path``; returns the number of bytes written."""
    raw = to_bytes(m)
    with open(path, "wb") as fh:
        fh.write(raw)
    return len(raw)


def load(path) -> LinearModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
