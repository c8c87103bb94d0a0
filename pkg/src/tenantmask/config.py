"""Run configuration files (YAML; plain JSON is accepted too).

Every section maps onto a config dataclass and unknown keys are rejected,
so a typo fails loudly instead of silently running with a default.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .corpus import SyntheticSpec
from .errors import ValidationError
from .features import FeaturizerConfig
from .harness import SplitConfig
from .model import TrainConfig

CONFIG_ENV = "TENANTMASK_CONFIG"
_TUPLE_FIELDS = {"word_ngrams", "char_ngrams", "labels_per_tenant", "word_count_range", "tenant_names"}


@dataclass
class DatasetRef:
    tenant: str
    path: Path


@dataclass
class RunConfig:
    featurizer: FeaturizerConfig = field(default_factory=FeaturizerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    synthetic: SyntheticSpec = None
    datasets: list = None
    output_dir: Path = Path("runs/default")
    n_jobs: int = 1

    def with_seed(self, seed):
        """Same run with ``seed`` for training, splitting and synthesis."""
        out = dataclasses.replace(
            self,
            train=dataclasses.replace(self.train, seed=seed),
            split=dataclasses.replace(self.split, seed=seed),
        )
        if self.synthetic is not None:
            out.synthetic = dataclasses.replace(self.synthetic, seed=seed)
        return out


def _section(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ValidationError(f"section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"unknown keys in {name!r}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        if key == "mirrors" and isinstance(value, list):
            value = tuple(tuple(p) for p in value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"section {name!r}: {exc}") from None


def parse_run_config(data, base_dir=Path(".")) -> RunConfig:
    if not isinstance(data, dict):
        raise ValidationError("run configuration must be a mapping")
    top = {"featurizer", "train", "split", "synthetic", "datasets", "output_dir", "n_jobs"}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ValidationError(f"unknown top-level keys: {', '.join(unknown)}")
    base_dir = Path(base_dir)
    cfg = RunConfig(
        featurizer=_section(FeaturizerConfig, data.get("featurizer"), "featurizer"),
        train=_section(TrainConfig, data.get("train"), "train"),
        split=_section(SplitConfig, data.get("split"), "split"),
        n_jobs=int(data.get("n_jobs", 1)),
    )
    if "output_dir" in data:
        cfg.output_dir = Path(data["output_dir"])
    has_synth, has_data = data.get("synthetic") is not None, data.get("datasets") is not None
    if has_synth == has_data:
        raise ValidationError("give exactly one of 'synthetic' or 'datasets'")
    if has_synth:
        cfg.synthetic = _section(SyntheticSpec, data["synthetic"], "synthetic")
    else:
        refs = []
        for item in data["datasets"]:
            if not isinstance(item, dict) or set(item) != {"tenant", "path"}:
                raise ValidationError("each dataset entry needs exactly 'tenant' and 'path'")
            path = Path(item["path"])
            if not path.is_absolute():
                path = base_dir / path
            if not path.is_file():
                raise ValidationError(f"dataset for tenant {item['tenant']!r} not found: {item['path']}")
            refs.append(DatasetRef(item["tenant"], path))
        cfg.datasets = refs
    if cfg.n_jobs < 1:
        raise ValidationError("n_jobs must be >= 1")
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ValidationError(f"cannot parse {path.name}: {exc}") from None
    return parse_run_config(data or {}, base_dir=path.parent)


def default_config_text() -> str:
    return resources.files("tenantmask").joinpath("configs/default.cfg").read_text(encoding="utf-8")


def resolve_config(path=None) -> RunConfig:
    """Explicit path, else ``$TENANTMASK_CONFIG``, else the bundled default."""
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        return load_run_config(path)
    return parse_run_config(yaml.safe_load(default_config_text()))
