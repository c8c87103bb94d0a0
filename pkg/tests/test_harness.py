import json

import pytest

from conftest import SMALL_FEATURES, SMALL_TRAIN
from tenantmask.errors import HarnessError, ValidationError
from tenantmask.harness import (
    CURVE_COLUMNS,
    SplitConfig,
    emit_epoch_curves,
    memory_savings,
    read_epoch_curve,
    run_comparison,
    write_outputs,
)
from tenantmask.model import TrainConfig, load


def test_memory_savings_examples():
    assert abs(memory_savings([1.6e9] * 5, 1.6e9) - 0.8) <= 1e-12
    assert memory_savings([2, 2], 1) == 0.75
    assert memory_savings([10], 10) == 0.0


def test_memory_savings_validation():
    with pytest.raises(ValidationError):
        memory_savings([], 1)
    with pytest.raises(ValidationError):
        memory_savings([0, 1], 1)


@pytest.fixture(scope="module")
def comparison(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cmp")
    return run_comparison(small_corpus, SMALL_TRAIN, SplitConfig(0.25, 0), SMALL_FEATURES, model_dir=out / "models"), out


def test_report_structure(comparison, small_corpus):
    result, out = comparison
    rep = result.report
    assert [t.tenant for t in rep.per_tenant] == [d.tenant for d in small_corpus]
    assert rep.accuracy_delta == pytest.approx(rep.mean_dedicated_accuracy - rep.mean_unified_masked_accuracy)
    assert rep.dedicated_total_bytes == sum(t.dedicated_bytes for t in rep.per_tenant)
    assert rep.memory_savings_fraction == pytest.approx(1 - rep.unified_bytes / rep.dedicated_total_bytes)
    for t in rep.per_tenant:
        assert t.unified_masked_accuracy >= t.unified_unmasked_accuracy
        assert t.test_examples == 3 * len(small_corpus[[d.tenant for d in small_corpus].index(t.tenant)].labels)
    assert set(result.model_paths) == {"dedicated-alpha", "dedicated-beta", "dedicated-gamma", "unified"}
    for name, path in result.model_paths.items():
        assert path.stat().st_size > 0
        m = load(path)
        assert m.n_classes == (10 if name == "unified" else len(m.label_space.labels_of(m.label_space.tenants[0])))


def test_report_bytes_are_file_sizes(comparison):
    result, _ = comparison
    sizes = {t.tenant: t.dedicated_bytes for t in result.report.per_tenant}
    for tenant, n in sizes.items():
        assert result.model_paths[f"dedicated-{tenant}"].stat().st_size == n
    assert result.model_paths["unified"].stat().st_size == result.report.unified_bytes


def test_outputs_and_curves(comparison, tmp_path):
    result, _ = comparison
    paths = write_outputs(result, tmp_path)
    assert len(paths) == 4
    assert sorted(p.name for p in paths) == ["dedicated-alpha.csv", "dedicated-beta.csv", "dedicated-gamma.csv", "unified.csv"]
    rows = read_epoch_curve(tmp_path / "curves" / "unified.csv")
    assert len(rows) == SMALL_TRAIN.epochs
    assert tuple(rows[0]) == CURVE_COLUMNS
    trace = result.traces[-1]
    assert [r["train_loss"] for r in rows] == [rec.train_loss for rec in trace]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["unified_bytes"] == result.report.unified_bytes
    assert "memory savings" in (tmp_path / "report.txt").read_text()


def test_curve_files_have_header_plus_one_line_per_epoch(small_corpus, tmp_path):
    cfg = TrainConfig(epochs=6, learning_rate=1.0, hidden_dim=4)
    result = run_comparison(small_corpus[:1], cfg, SplitConfig(0.25, 0), SMALL_FEATURES)
    paths = emit_epoch_curves(result.traces, tmp_path)
    assert len(paths) == 2
    for p in paths:
        assert len(p.read_text().splitlines()) == 7


def test_single_tenant_unified_equals_dedicated(small_corpus):
    result = run_comparison(small_corpus[:1], SMALL_TRAIN, SplitConfig(0.25, 0), SMALL_FEATURES)
    t = result.report.per_tenant[0]
    assert t.dedicated_accuracy == t.unified_masked_accuracy == t.unified_unmasked_accuracy
    assert t.dedicated_bytes == result.report.unified_bytes
    assert result.report.memory_savings_fraction == 0.0
    assert result.model_paths == {}


def test_parallel_matches_serial(small_corpus, tmp_path):
    a = run_comparison(small_corpus, SMALL_TRAIN, SplitConfig(0.25, 0), SMALL_FEATURES, tmp_path / "a", n_jobs=1)
    b = run_comparison(small_corpus, SMALL_TRAIN, SplitConfig(0.25, 0), SMALL_FEATURES, tmp_path / "b", n_jobs=4)
    assert a.report == b.report
    for name, path in a.model_paths.items():
        assert path.read_bytes() == b.model_paths[name].read_bytes()


def test_failures_name_the_step(small_corpus):
    d = small_corpus[0]
    lonely = d.subset([0] + [i for i, ex in enumerate(d.examples) if ex.label != d.examples[0].label], "lonely")
    with pytest.raises(HarnessError) as err:
        run_comparison([lonely], SMALL_TRAIN, SplitConfig(0.25, 0), SMALL_FEATURES)
    assert "split alpha" in str(err.value)
    assert err.value.code == "harness_step_failed"


def test_duplicate_tenants_rejected(small_corpus):
    with pytest.raises(ValidationError):
        run_comparison([small_corpus[0], small_corpus[0]], SMALL_TRAIN, SplitConfig(), SMALL_FEATURES)
