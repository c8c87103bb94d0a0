"""Datasets: loading, the three partitioning procedures, synthetic corpora.

Dataset files are UTF-8 JSON Lines, one ``{"text": ..., "label": ...}``
record per line.
"""

from __future__ import annotations

import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDatasetError,
    InvalidPartitionError,
    ParseError,
    UnsplittableClassError,
    ValidationError,
)

DEFAULT_TENANTS = ("banka1", "banka2", "firma1", "firma2", "covid")
# covid's 25 is inferred: 154 total - 77 banking - 2 x 26 company
DEFAULT_LABELS_PER_TENANT = (38, 39, 26, 26, 25)


@dataclass(frozen=True)
class Example:
    text: str
    tenant: str
    label: str

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValidationError("example text is empty")
        if not isinstance(self.label, str) or not self.label:
            raise ValidationError("example label is empty")


@dataclass(frozen=True)
class Dataset:
    """Examples of a single tenant plus the label set they are declared over.

    ``labels`` defaults to the labels observed in ``examples``; splits that
    can leave a class empty on one side still declare it.
    """

    examples: tuple
    name: str
    tenant: str
    labels: tuple = field(default=None)

    def __post_init__(self):
        examples = tuple(self.examples)
        object.__setattr__(self, "examples", examples)
        for ex in examples:
            if ex.tenant != self.tenant:
                raise ValidationError(
                    f"dataset {self.name!r} mixes tenants {self.tenant!r} and {ex.tenant!r}"
                )
        observed = {ex.label for ex in examples}
        declared = sorted(observed) if self.labels is None else sorted(set(self.labels))
        missing = observed.difference(declared)
        if missing:
            raise ValidationError(f"labels {sorted(missing)} are used but not declared")
        object.__setattr__(self, "labels", tuple(declared))

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def texts(self):
        return [ex.text for ex in self.examples]

    @property
    def label_names(self):
        return [ex.label for ex in self.examples]

    def by_label(self):
        groups = defaultdict(list)
        for i, ex in enumerate(self.examples):
            groups[ex.label].append(i)
        return groups

    def with_tenant(self, tenant, name=None):
        examples = tuple(replace(ex, tenant=tenant) for ex in self.examples)
        return Dataset(examples, name or tenant, tenant, self.labels)

    def subset(self, indices, name, labels=None):
        return Dataset(
            tuple(self.examples[i] for i in sorted(indices)),
            name,
            self.tenant,
            self.labels if labels is None else labels,
        )


def load_dataset(path, tenant: str, name=None) -> Dataset:
    path = Path(path)
    examples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(record, dict):
                raise ParseError("record must be an object", lineno)
            for key in ("text", "label"):
                if not isinstance(record.get(key), str):
                    raise ParseError(f"missing or non-string field {key!r}", lineno)
            try:
                examples.append(Example(record["text"], tenant, record["label"]))
            except ValidationError as exc:
                raise ParseError(str(exc), lineno) from None
    if not examples:
        raise EmptyDatasetError(f"{path.name} contains no records")
    return Dataset(tuple(examples), name or tenant, tenant)


def save_dataset(d: Dataset, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in d.examples:
            fh.write(json.dumps({"text": ex.text, "label": ex.label}, ensure_ascii=False) + "\n")


def _ordered_labels(d: Dataset, order):
    if order == "lexicographic":
        return sorted(d.labels)
    if order == "first_seen":
        seen = dict.fromkeys(ex.label for ex in d.examples)
        return list(seen) + [lab for lab in d.labels if lab not in seen]
    raise ValidationError(f"unknown label order {order!r}")


def split_by_label_partition(d: Dataset, left_label_count: int, order="lexicographic",
                             left_tenant=None, right_tenant=None):
    """Split by category: the first ``left_label_count`` labels go left."""
    labels = _ordered_labels(d, order)
    if not 1 <= left_label_count < len(labels):
        raise InvalidPartitionError(
            f"left_label_count must be in [1, {len(labels)}), got {left_label_count}"
        )
    left_labels = set(labels[:left_label_count])
    left_idx = [i for i, ex in enumerate(d.examples) if ex.label in left_labels]
    right_idx = [i for i, ex in enumerate(d.examples) if ex.label not in left_labels]
    left = d.subset(left_idx, f"{d.name}-left", tuple(left_labels))
    right = d.subset(right_idx, f"{d.name}-right", tuple(set(labels) - left_labels))
    if left_tenant:
        left = left.with_tenant(left_tenant)
    if right_tenant:
        right = right.with_tenant(right_tenant)
    return left, right


def _check_fraction(fraction, what):
    if not 0 <= fraction <= 1:
        raise ValidationError(f"{what} must lie in [0, 1], got {fraction}")


def _ceil_share(fraction, n):
    # round first so 0.7 * 10 is 7, not 8
    return math.ceil(round(fraction * n, 9))


def _class_shuffles(d: Dataset, fraction, seed):
    groups = d.by_label()
    if 0 < fraction < 1:
        tiny = [lab for lab, idx in groups.items() if len(idx) < 2]
        if tiny:
            raise UnsplittableClassError(tiny)
    rng = np.random.default_rng(seed)
    for label in sorted(groups):
        idx = np.asarray(groups[label])
        yield label, idx[rng.permutation(len(idx))].tolist()


def split_within_class(d: Dataset, fraction: float, seed: int):
    """Halve every class: per class, a seeded shuffle sends the first
    ``ceil(fraction * n)`` examples left and the rest right. Both sides keep
    the full declared label set and the original example order."""
    _check_fraction(fraction, "fraction")
    left, right = [], []
    for _, idx in _class_shuffles(d, fraction, seed):
        cut = _ceil_share(fraction, len(idx))
        left += idx[:cut]
        right += idx[cut:]
    return d.subset(left, f"{d.name}-a"), d.subset(right, f"{d.name}-b")


def train_test_split(d: Dataset, test_fraction: float = 0.2, seed: int = 0):
    """Stratified split returning ``(train, test)``.

    The test side takes ``ceil(test_fraction * n)`` of each class, capped at
    ``n - 1`` while ``test_fraction < 1`` so every class survives in train.
    """
    _check_fraction(test_fraction, "test_fraction")
    train, test = [], []
    for _, idx in _class_shuffles(d, test_fraction, seed):
        cut = _ceil_share(test_fraction, len(idx))
        if test_fraction < 1:
            cut = min(cut, len(idx) - 1)
        test += idx[:cut]
        train += idx[cut:]
    return d.subset(train, f"{d.name}-train"), d.subset(test, f"{d.name}-test")


# -- synthetic corpora -----------------------------------------------------

_ONSETS = ("b", "c", "ç", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "ş", "t", "v", "y", "z")
_VOWELS = ("a", "e", "ı", "i", "o", "ö", "u", "ü")
_CODAS = ("", "", "", "n", "r", "l", "k", "m", "t", "ş")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a multi-tenant corpus.

    Each label owns a private word pool; a sentence draws each word from the
    shared pool with probability ``vocab_overlap`` and from its label's pool
    otherwise. ``mirrors`` lists ``(source, copy)`` tenant index pairs: the
    copy reuses the source's label names and pools, so the two tenants are
    indistinguishable without knowing which one was asked.
    """

    n_tenants: int = 5
    labels_per_tenant: tuple = DEFAULT_LABELS_PER_TENANT
    examples_per_label: int = 40
    vocab_overlap: float = 0.75
    word_count_range: tuple = (3, 113)
    seed: int = 0
    tenant_names: tuple = None
    mirrors: tuple = ((2, 3),)
    label_pool_size: int = 12
    shared_pool_size: int = 300

    def __post_init__(self):
        object.__setattr__(self, "labels_per_tenant", tuple(self.labels_per_tenant))
        object.__setattr__(self, "word_count_range", tuple(self.word_count_range))
        object.__setattr__(self, "mirrors", tuple(tuple(p) for p in self.mirrors))
        if self.n_tenants < 1 or len(self.labels_per_tenant) != self.n_tenants:
            raise ValidationError("labels_per_tenant needs one count per tenant")
        if any(c < 1 for c in self.labels_per_tenant):
            raise ValidationError("every tenant needs at least one label")
        if self.examples_per_label < 1:
            raise ValidationError("examples_per_label must be positive")
        if not 0 <= self.vocab_overlap <= 1:
            raise ValidationError("vocab_overlap must lie in [0, 1]")
        lo, hi = self.word_count_range
        if not 1 <= lo <= hi <= 1000:
            raise ValidationError("word_count_range must satisfy 1 <= min <= max <= 1000")
        if self.label_pool_size < 1 or self.shared_pool_size < 1:
            raise ValidationError("pool sizes must be positive")
        names = self.tenant_names
        if names is None:
            names = DEFAULT_TENANTS if self.n_tenants == 5 else tuple(f"tenant{i + 1}" for i in range(self.n_tenants))
        names = tuple(names)
        if len(names) != self.n_tenants or len(set(names)) != len(names):
            raise ValidationError("tenant_names must be unique, one per tenant")
        object.__setattr__(self, "tenant_names", names)
        copies = set()
        sources = {src for src, _ in self.mirrors}
        for src, dst in self.mirrors:
            if not (0 <= src < self.n_tenants and 0 <= dst < self.n_tenants) or src == dst:
                raise ValidationError(f"invalid mirror pair ({src}, {dst})")
            if self.labels_per_tenant[src] != self.labels_per_tenant[dst]:
                raise ValidationError(f"mirrored tenants {src} and {dst} need equal label counts")
            if dst in copies or src in copies or dst in sources:
                raise ValidationError("a tenant can be mirrored only once and not chained")
            copies.add(dst)

    @property
    def total_labels(self):
        return sum(self.labels_per_tenant)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**d)


def _unique_words(rng, count):
    words, seen = [], set()
    while len(words) < count:
        n_syl = int(rng.integers(2, 5))
        w = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] + _CODAS[rng.integers(len(_CODAS))]
            for _ in range(n_syl)
        )
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def generate_synthetic(spec: SyntheticSpec):
    rng = np.random.default_rng(spec.seed)
    mirror_of = {dst: src for src, dst in spec.mirrors}
    owners = [t for t in range(spec.n_tenants) if t not in mirror_of]
    n_pools = sum(spec.labels_per_tenant[t] for t in owners)
    words = _unique_words(rng, spec.shared_pool_size + n_pools * spec.label_pool_size)
    shared = words[:spec.shared_pool_size]
    pools = iter(
        words[spec.shared_pool_size + i * spec.label_pool_size:spec.shared_pool_size + (i + 1) * spec.label_pool_size]
        for i in range(n_pools)
    )

    label_defs = {}
    base_offset = defaultdict(int)
    for t in owners:
        base = re.sub(r"\d+$", "", spec.tenant_names[t]) or "label"
        start = base_offset[base]
        base_offset[base] += spec.labels_per_tenant[t]
        label_defs[t] = [(f"{base}_{start + k:02d}", next(pools)) for k in range(spec.labels_per_tenant[t])]
    for dst, src in mirror_of.items():
        label_defs[dst] = label_defs[src]

    lo, hi = spec.word_count_range
    datasets = []
    for t in range(spec.n_tenants):
        tenant = spec.tenant_names[t]
        examples = []
        for label, pool in label_defs[t]:
            for _ in range(spec.examples_per_label):
                n_words = int(rng.integers(lo, hi + 1))
                from_shared = rng.random(n_words) < spec.vocab_overlap
                shared_pick = rng.integers(len(shared), size=n_words)
                own_pick = rng.integers(len(pool), size=n_words)
                text = " ".join(
                    shared[s] if use_shared else pool[o]
                    for use_shared, s, o in zip(from_shared, shared_pick, own_pick)
                )
                examples.append(Example(text, tenant, label))
        datasets.append(Dataset(tuple(examples), tenant, tenant))
    return datasets
