import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tenantmask.corpus import SyntheticSpec, generate_synthetic
from tenantmask.features import FeaturizerConfig, featurize_many
from tenantmask.labelspace import LabelSpace
from tenantmask.model import TrainConfig, train

SMALL_SPEC = SyntheticSpec(
    n_tenants=3,
    labels_per_tenant=(4, 3, 3),
    examples_per_label=12,
    vocab_overlap=0.3,
    word_count_range=(3, 10),
    seed=5,
    tenant_names=("alpha", "beta", "gamma"),
    mirrors=(),
)
SMALL_FEATURES = FeaturizerConfig(dims=1 << 12)
SMALL_TRAIN = TrainConfig(epochs=4, learning_rate=1.0, hidden_dim=8, seed=1)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic(SMALL_SPEC)


@pytest.fixture(scope="session")
def small_model(small_corpus):
    space = LabelSpace.from_tenants((d.tenant, d.labels) for d in small_corpus)
    texts, gids = [], []
    for d in small_corpus:
        texts += d.texts
        gids += [space.local_to_global(ex.tenant, ex.label) for ex in d.examples]
    X = featurize_many(SMALL_FEATURES, texts)
    m, _ = train(X, np.array(gids), SMALL_TRAIN, space, SMALL_FEATURES)
    return m


@pytest.fixture(scope="session")
def small_model_file(small_model, tmp_path_factory):
    from tenantmask.model import save

    path = tmp_path_factory.mktemp("model") / "unified.bin"
    save(small_model, path)
    return path


# -- acceptance summary: one PASS/FAIL line per criterion -------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        prev = _CRITERIA.get(number, (title, True))[1]
        _CRITERIA[number] = (title, prev and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title}")
