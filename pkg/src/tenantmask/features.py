"""Hashed word and character n-gram features.

Texts are mapped into a fixed ``dims``-dimensional space with the hashing
trick, so a model never needs a vocabulary file. Every n-gram is hashed with
64-bit FNV-1a over the UTF-8 bytes of ``"<namespace>:<ngram>"`` where the
namespace is ``w<n>`` for word n-grams and ``c<n>`` for character n-grams.
Character n-grams are taken inside each token padded with ``<`` and ``>``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import EmptyInputError, ShapeError, ValidationError

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 20)
def _index(key: str, dims: int) -> int:
    return fnv1a_64(key.encode("utf-8")) % dims


@dataclass(frozen=True)
class FeaturizerConfig:
    dims: int = 1 << 18
    word_ngrams: tuple = (1, 2)
    char_ngrams: tuple = (3, 5)
    lowercase: bool = True

    def __post_init__(self):
        object.__setattr__(self, "word_ngrams", tuple(self.word_ngrams))
        object.__setattr__(self, "char_ngrams", tuple(self.char_ngrams))
        dims = self.dims
        if not isinstance(dims, int) or dims < 1 << 10 or dims & (dims - 1):
            raise ValidationError(f"dims must be a power of two >= 1024, got {dims!r}")
        for name in ("word_ngrams", "char_ngrams"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValidationError(f"{name} must satisfy 0 <= min <= max")
        if self.word_ngrams[0] == 0 and self.word_ngrams[1] > 0:
            raise ValidationError("word_ngrams minimum must be >= 1")
        if self.char_ngrams[0] == 0 and self.char_ngrams[1] > 0:
            raise ValidationError("char_ngrams minimum must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["word_ngrams"] = list(self.word_ngrams)
        d["char_ngrams"] = list(self.char_ngrams)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            dims=int(d["dims"]),
            word_ngrams=tuple(d["word_ngrams"]),
            char_ngrams=tuple(d["char_ngrams"]),
            lowercase=bool(d["lowercase"]),
        )


@dataclass(frozen=True)
class SparseVector:
    dims: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ShapeError("indices and values must be 1-D arrays of equal length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dims):
            raise ShapeError("indices must be strictly increasing and inside [0, dims)")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def pairs(self):
        return list(zip(self.indices.tolist(), self.values.tolist()))

    @property
    def nnz(self):
        return len(self.indices)

    def norm(self):
        return float(np.sqrt(np.dot(self.values, self.values)))

    @classmethod
    def from_pairs(cls, dims, pairs):
        pairs = sorted(pairs)
        return cls(dims, [i for i, _ in pairs], [v for _, v in pairs])


def simple_lower(text: str) -> str:
    """Per-code-point lowercasing; never changes the number of code points."""
    out = []
    for ch in text:
        low = ch.lower()
        out.append(low if len(low) == 1 else low[0])
    return "".join(out)


def tokenize(cfg: FeaturizerConfig, text: str):
    if not isinstance(text, str):
        raise ValidationError(f"text must be a string, got {type(text).__name__}")
    text = text.strip()
    if not text:
        raise EmptyInputError("text is empty")
    if cfg.lowercase:
        text = simple_lower(text)
    return text.split()


@lru_cache(maxsize=1 << 18)
def _char_indices(token: str, lo: int, hi: int, dims: int):
    padded = f"<{token}>"
    out = []
    for n in range(lo, hi + 1):
        for i in range(len(padded) - n + 1):
            out.append(_index(f"c{n}:{padded[i:i + n]}", dims))
    return tuple(out)


def ngram_indices(cfg: FeaturizerConfig, tokens):
    """Hashed index of every n-gram occurrence, duplicates kept."""
    dims = cfg.dims
    out = []
    w_lo, w_hi = cfg.word_ngrams
    for n in range(max(w_lo, 1), w_hi + 1):
        for i in range(len(tokens) - n + 1):
            out.append(_index(f"w{n}:" + " ".join(tokens[i:i + n]), dims))
    c_lo, c_hi = cfg.char_ngrams
    if c_hi > 0:
        for tok in tokens:
            out.extend(_char_indices(tok, c_lo, c_hi, dims))
    return out


def _normalized_counts(cfg, text):
    counts = Counter(ngram_indices(cfg, tokenize(cfg, text)))
    if not counts:
        raise EmptyInputError("text produced no n-grams")
    idx = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
    val = np.array([counts[i] for i in idx.tolist()], dtype=np.float64)
    val /= np.sqrt(np.dot(val, val))
    return idx, val


def featurize(cfg: FeaturizerConfig, text: str) -> SparseVector:
    idx, val = _normalized_counts(cfg, text)
    return SparseVector(cfg.dims, idx, val)


def featurize_many(cfg: FeaturizerConfig, texts) -> sp.csr_matrix:
    """Row-stacked features as a CSR matrix (float64, sorted indices)."""
    indptr = [0]
    indices, data = [], []
    for text in texts:
        idx, val = _normalized_counts(cfg, text)
        indices.append(idx)
        data.append(val)
        indptr.append(indptr[-1] + len(idx))
    if not indices:
        return sp.csr_matrix((0, cfg.dims), dtype=np.float64)
    return sp.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.asarray(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, cfg.dims),
    )


def row_vector(X: sp.csr_matrix, i: int) -> SparseVector:
    lo, hi = X.indptr[i], X.indptr[i + 1]
    return SparseVector(X.shape[1], X.indices[lo:hi], X.data[lo:hi])
