from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from crashscore.fixtures import PlantedSignal, crash_fixture, planted_signal_dataset, single_feature_dataset  # noqa: E402
from crashscore.forest import ForestParams, train_forest  # noqa: E402
from crashscore.ingestion import stratified_split  # noqa: E402

settings.register_profile("crashscore", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("crashscore")


@pytest.fixture(scope="session")
def crash_data():
    """Fixture crash records, balanced dataset and its grouped 80/20 split."""
    records, data = crash_fixture(seed=0)
    train, test = stratified_split(data, 0.2, 0)
    return records, data, train, test


@pytest.fixture(scope="session")
def crash_model(crash_data):
    """100-tree forest on the crash fixture; shared by scoring, grid and validation tests."""
    _, _, train, _ = crash_data
    return train_forest(train, ForestParams(n_estimators=100, seed=0))


@pytest.fixture(scope="session")
def planted():
    data = planted_signal_dataset(PlantedSignal(), seed=0)
    train, test = stratified_split(data, 0.2, 0)
    return data, train, test


@pytest.fixture(scope="session")
def planted_model(planted):
    _, train, _ = planted
    return train_forest(train, ForestParams(n_estimators=100, seed=0))


@pytest.fixture(scope="session")
def single_feature():
    data = single_feature_dataset(seed=0)
    train, test = stratified_split(data, 0.25, 0)
    model = train_forest(train, ForestParams(n_estimators=30, seed=0))
    return data, train, test, model


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
