"""N dedicated models versus one tenant-masked unified model.

``run_comparison`` trains one model per tenant on that tenant alone and one
unified model on every tenant's training split, evaluates all of them on the
same test splits, serializes every model and compares accuracy against the
bytes each deployment needs.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import model as model_io
from .corpus import train_test_split
from .errors import HarnessError, ValidationError
from .features import FeaturizerConfig, featurize_many
from .labelspace import LabelSpace
from .metrics import evaluate_features
from .model import TrainConfig, train

CURVE_COLUMNS = ("epoch", "train_loss", "train_accuracy", "train_macro_f1", "test_accuracy", "test_macro_f1")


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    seed: int = 0


@dataclass(frozen=True)
class TenantComparison:
    tenant: str
    dedicated_accuracy: float
    unified_masked_accuracy: float
    unified_unmasked_accuracy: float
    dedicated_bytes: int
    test_examples: int


@dataclass(frozen=True)
class ComparisonReport:
    per_tenant: tuple
    mean_dedicated_accuracy: float
    mean_unified_masked_accuracy: float
    mean_unified_unmasked_accuracy: float
    accuracy_delta: float
    dedicated_total_bytes: int
    unified_bytes: int
    memory_savings_fraction: float

    @classmethod
    def build(cls, per_tenant, unified_bytes):
        per_tenant = tuple(per_tenant)
        dedicated = float(np.mean([t.dedicated_accuracy for t in per_tenant]))
        masked = float(np.mean([t.unified_masked_accuracy for t in per_tenant]))
        unmasked = float(np.mean([t.unified_unmasked_accuracy for t in per_tenant]))
        dedicated_bytes = [t.dedicated_bytes for t in per_tenant]
        return cls(
            per_tenant=per_tenant,
            mean_dedicated_accuracy=dedicated,
            mean_unified_masked_accuracy=masked,
            mean_unified_unmasked_accuracy=unmasked,
            accuracy_delta=dedicated - masked,
            dedicated_total_bytes=int(sum(dedicated_bytes)),
            unified_bytes=int(unified_bytes),
            memory_savings_fraction=memory_savings(dedicated_bytes, unified_bytes),
        )

    def to_dict(self):
        d = asdict(self)
        d["per_tenant"] = [asdict(t) for t in self.per_tenant]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_text(self):
        width = max(len("tenant"), *(len(t.tenant) for t in self.per_tenant))
        lines = [f"{'tenant':<{width}}  dedicated  unified(masked)  unified(unmasked)  test_n"]
        for t in self.per_tenant:
            lines.append(
                f"{t.tenant:<{width}}  {t.dedicated_accuracy:9.4f}  {t.unified_masked_accuracy:15.4f}"
                f"  {t.unified_unmasked_accuracy:17.4f}  {t.test_examples:6d}"
            )
        lines.append(
            f"{'mean':<{width}}  {self.mean_dedicated_accuracy:9.4f}  {self.mean_unified_masked_accuracy:15.4f}"
            f"  {self.mean_unified_unmasked_accuracy:17.4f}"
        )
        lines += [
            "",
            f"accuracy delta (dedicated - unified masked): {self.accuracy_delta:+.4f}",
            f"dedicated models total: {self.dedicated_total_bytes} bytes",
            f"unified model:          {self.unified_bytes} bytes",
            f"memory savings:         {self.memory_savings_fraction:.2%}",
        ]
        return "\n".join(lines) + "\n"


@dataclass
class ComparisonResult:
    report: ComparisonReport
    traces: list
    model_paths: dict = field(default_factory=dict)


def memory_savings(dedicated_bytes, unified_bytes) -> float:
    """Fraction of memory saved by one unified model: ``1 - unified / sum``."""
    dedicated_bytes = list(dedicated_bytes)
    if not dedicated_bytes:
        raise ValidationError("need at least one dedicated model size")
    if any(not b > 0 for b in dedicated_bytes) or not unified_bytes > 0:
        raise ValidationError("model sizes must be positive")
    return 1.0 - unified_bytes / sum(dedicated_bytes)


def _step(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except HarnessError:
        raise
    except Exception as exc:
        raise HarnessError(name, exc) from exc


def _run_tasks(tasks, n_jobs):
    """Run ``(name, fn, args)`` tasks; results come back in task order."""
    if n_jobs <= 1:
        return [_step(name, fn, *args) for name, fn, args in tasks]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        futures = [pool.submit(_step, name, fn, *args) for name, fn, args in tasks]
        return [f.result() for f in futures]


def run_comparison(
    datasets,
    train_cfg: TrainConfig = TrainConfig(),
    split_cfg: SplitConfig = SplitConfig(),
    featurizer_cfg: FeaturizerConfig = FeaturizerConfig(),
    model_dir=None,
    n_jobs: int = 1,
) -> ComparisonResult:
    """Train and compare; model files go to ``model_dir`` (a temp dir if None)."""
    datasets = list(datasets)
    if not datasets:
        raise ValidationError("need at least one tenant dataset")
    tenants = [d.tenant for d in datasets]
    if len(set(tenants)) != len(tenants):
        raise ValidationError("tenant ids must be unique")

    splits = [_step(f"split {d.tenant}", train_test_split, d, split_cfg.test_fraction, split_cfg.seed)
              for d in datasets]
    if any(len(test) == 0 for _, test in splits):
        raise ValidationError("every tenant needs a non-empty test split")
    X_train = [_step(f"featurize {d.tenant}", featurize_many, featurizer_cfg, tr.texts) for d, (tr, _) in zip(datasets, splits)]
    X_test = [_step(f"featurize {d.tenant}", featurize_many, featurizer_cfg, te.texts) for d, (_, te) in zip(datasets, splits)]

    unified_space = LabelSpace.from_tenants([(d.tenant, d.labels) for d in datasets])
    local_spaces = [LabelSpace.from_tenants([(d.tenant, d.labels)]) for d in datasets]

    def gids(space, ds):
        return np.array([space.local_to_global(ex.tenant, ex.label) for ex in ds.examples], dtype=np.int64)

    tasks = []
    for d, space, (tr, te), Xtr, Xte in zip(datasets, local_spaces, splits, X_train, X_test):
        tasks.append((
            f"train dedicated {d.tenant}",
            train,
            (Xtr, gids(space, tr), train_cfg, space, featurizer_cfg, (Xte, gids(space, te)), True, f"dedicated-{d.tenant}"),
        ))
    Xu_tr = sp.vstack(X_train, format="csr")
    yu_tr = np.concatenate([gids(unified_space, tr) for tr, _ in splits])
    Xu_te = sp.vstack(X_test, format="csr")
    yu_te = np.concatenate([gids(unified_space, te) for _, te in splits])
    tasks.append((
        "train unified",
        train,
        (Xu_tr, yu_tr, train_cfg, unified_space, featurizer_cfg, (Xu_te, yu_te), True, "unified"),
    ))
    trained = _run_tasks(tasks, n_jobs)
    dedicated_models = [m for m, _ in trained[:-1]]
    unified, _ = trained[-1]
    traces = [t for _, t in trained]

    tmp = None
    if model_dir is None:
        tmp = tempfile.TemporaryDirectory()
        model_dir = tmp.name
    model_dir = Path(model_dir)
    try:
        model_dir.mkdir(parents=True, exist_ok=True)
        paths = {}
        for d, m in zip(datasets, dedicated_models):
            p = model_dir / f"dedicated-{d.tenant}.bin"
            _step(f"save dedicated {d.tenant}", model_io.save, m, p)
            paths[f"dedicated-{d.tenant}"] = p
        p = model_dir / "unified.bin"
        _step("save unified", model_io.save, unified, p)
        paths["unified"] = p
        sizes = {name: os.path.getsize(p) for name, p in paths.items()}
    finally:
        if tmp is not None:
            tmp.cleanup()
            paths = {}

    rows = []
    for d, m, space, (_, te), Xte in zip(datasets, dedicated_models, local_spaces, splits, X_test):
        ded = _step(f"evaluate dedicated {d.tenant}", evaluate_features, m, Xte, gids(space, te), d.tenant, True)
        yu = gids(unified_space, te)
        masked = _step(f"evaluate unified masked {d.tenant}", evaluate_features, unified, Xte, yu, d.tenant, True)
        unmasked = _step(f"evaluate unified unmasked {d.tenant}", evaluate_features, unified, Xte, yu, d.tenant, False)
        rows.append(TenantComparison(
            tenant=d.tenant,
            dedicated_accuracy=ded.accuracy,
            unified_masked_accuracy=masked.accuracy,
            unified_unmasked_accuracy=unmasked.accuracy,
            dedicated_bytes=sizes[f"dedicated-{d.tenant}"],
            test_examples=len(te),
        ))
    report = ComparisonReport.build(rows, sizes["unified"])
    return ComparisonResult(report, traces, paths)


def emit_epoch_curves(traces, out_dir):
    """One CSV per trace named ``<trace name>.csv``; returns the paths."""
    traces = list(traces)
    if not traces:
        raise ValidationError("no traces to write")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for trace in traces:
        path = out_dir / f"{trace.name}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_COLUMNS)
            for rec in trace:
                # repr is the shortest string that parses back to the same float
                w.writerow([rec.epoch] + [repr(float(getattr(rec, c))) for c in CURVE_COLUMNS[1:]])
        paths.append(path)
    return paths


def read_epoch_curve(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in rows]


def write_outputs(result: ComparisonResult, out_dir):
    """Report (JSON and text) and epoch curves under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(result.report.to_json(), encoding="utf-8")
    (out_dir / "report.txt").write_text(result.report.to_text(), encoding="utf-8")
    return emit_epoch_curves(result.traces, out_dir / "curves")
