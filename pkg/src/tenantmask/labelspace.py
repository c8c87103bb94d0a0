"""Unified label space over all tenants, and per-tenant masks.

Each tenant owns one contiguous interval of global class ids. Registering a
tenant appends a new interval; ids already handed out never move, so a model
trained on a space stays valid for every prefix of later registrations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConflictError, InvalidMaskError, NotFoundError, UnknownTenantError, ValidationError


@dataclass(frozen=True)
class TenantRange:
    tenant: str
    start: int
    end: int

    def __len__(self):
        return self.end - self.start

    def __contains__(self, gid):
        return self.start <= gid < self.end


@dataclass(frozen=True)
class LabelMask:
    """Boolean selector over the global class axis."""

    allowed: np.ndarray

    def __post_init__(self):
        allowed = np.asarray(self.allowed, dtype=bool)
        if allowed.ndim != 1:
            raise InvalidMaskError("mask must be one-dimensional")
        if not allowed.any():
            raise InvalidMaskError("mask excludes every class")
        allowed.setflags(write=False)
        object.__setattr__(self, "allowed", allowed)

    def __len__(self):
        return len(self.allowed)

    @classmethod
    def all_true(cls, n_classes):
        return cls(np.ones(n_classes, dtype=bool))

    @classmethod
    def interval(cls, n_classes, start, end):
        allowed = np.zeros(n_classes, dtype=bool)
        allowed[start:end] = True
        return cls(allowed)


@dataclass(frozen=True)
class LabelSpace:
    entries: tuple = ()
    tenant_ranges: tuple = ()
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        index = {(tenant, name): gid for gid, (tenant, name) in enumerate(self.entries)}
        object.__setattr__(self, "_index", index)

    @property
    def n_classes(self):
        return len(self.entries)

    @property
    def tenants(self):
        return [r.tenant for r in self.tenant_ranges]

    def __len__(self):
        return len(self.entries)

    def __contains__(self, tenant):
        return any(r.tenant == tenant for r in self.tenant_ranges)

    def range_of(self, tenant) -> TenantRange:
        for r in self.tenant_ranges:
            if r.tenant == tenant:
                return r
        raise UnknownTenantError(f"unknown tenant {tenant!r}")

    def labels_of(self, tenant):
        r = self.range_of(tenant)
        return [name for _, name in self.entries[r.start:r.end]]

    def tenant_of(self, gid) -> str:
        return self.global_to_local(gid)[0]

    def tenant_ids(self, gids) -> np.ndarray:
        """Index into ``tenant_ranges`` of the owner of each gid."""
        starts = np.array([r.start for r in self.tenant_ranges])
        return np.searchsorted(starts, np.asarray(gids), side="right") - 1

    def register_tenant(self, tenant: str, labels: Iterable[str]) -> "LabelSpace":
        return register_tenant(self, tenant, labels)

    def mask_for_tenant(self, tenant: str) -> LabelMask:
        return mask_for_tenant(self, tenant)

    def global_to_local(self, gid):
        return global_to_local(self, gid)

    def local_to_global(self, tenant, label):
        return local_to_global(self, tenant, label)

    def to_dict(self):
        return {
            "tenants": [
                {"tenant": r.tenant, "labels": self.labels_of(r.tenant)}
                for r in self.tenant_ranges
            ]
        }

    @classmethod
    def from_dict(cls, data):
        space = cls()
        for item in data["tenants"]:
            space = space.register_tenant(item["tenant"], item["labels"])
        return space

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "LabelSpace":
        return cls.from_dict(json.loads(raw.decode("utf-8")))

    def manifest(self):
        """Tenant intervals with label names in id order, for export."""
        return [
            {
                "tenant": r.tenant,
                "range_start": r.start,
                "range_end": r.end,
                "labels": self.labels_of(r.tenant),
            }
            for r in self.tenant_ranges
        ]

    @classmethod
    def from_tenants(cls, tenant_labels) -> "LabelSpace":
        """Build from ``(tenant, labels)`` pairs, registered in the given order."""
        space = cls()
        for tenant, labels in tenant_labels:
            space = space.register_tenant(tenant, labels)
        return space


def register_tenant(space: LabelSpace, tenant: str, labels: Iterable[str]) -> LabelSpace:
    labels = list(labels)
    if not isinstance(tenant, str) or not tenant:
        raise ValidationError("tenant id must be a non-empty string")
    if tenant in space:
        raise ConflictError(f"tenant {tenant!r} is already registered")
    if not labels:
        raise ValidationError(f"tenant {tenant!r} needs at least one label")
    seen = set()
    for name in labels:
        if not isinstance(name, str) or not name:
            raise ValidationError("label names must be non-empty strings")
        if name in seen:
            raise ValidationError(f"duplicate label {name!r} for tenant {tenant!r}")
        seen.add(name)
    start = space.n_classes
    return LabelSpace(
        entries=space.entries + tuple((tenant, name) for name in labels),
        tenant_ranges=space.tenant_ranges + (TenantRange(tenant, start, start + len(labels)),),
    )


def mask_for_tenant(space: LabelSpace, tenant: str) -> LabelMask:
    r = space.range_of(tenant)
    return LabelMask.interval(space.n_classes, r.start, r.end)


def global_to_local(space: LabelSpace, gid: int):
    if isinstance(gid, (bool, np.bool_)) or not isinstance(gid, (int, np.integer)):
        raise NotFoundError(f"class id must be an integer, got {gid!r}")
    if not 0 <= gid < space.n_classes:
        raise NotFoundError(f"class id {gid} outside [0, {space.n_classes})")
    return space.entries[int(gid)]


def local_to_global(space: LabelSpace, tenant: str, label: str) -> int:
    try:
        return space._index[(tenant, label)]
    except KeyError:
        space.range_of(tenant)
        raise NotFoundError(f"tenant {tenant!r} has no label {label!r}") from None
