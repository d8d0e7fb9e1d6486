import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hod import pipeline
from hod.nn import TrainConfig
from hod.preprocess import Mode

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def short_series():
    """One minute per touch kind; enough to train a usable small model."""
    return pipeline.training_series(minutes=1.0, seed=7)


@pytest.fixture(scope="session")
def gradient_dataset(short_series):
    return pipeline.training_dataset(Mode.GRADIENT, seed=7, series=short_series)


@pytest.fixture(scope="session")
def small_tdnn(gradient_dataset):
    model, info = pipeline.fit("tdnn", 20, gradient_dataset, seed=3,
                               config=TrainConfig(learning_rate=0.5, epochs=6, batch_size=64))
    assert info["val_accuracy"] > 0.97
    return model


@pytest.fixture(scope="session")
def gradient_spec():
    return pipeline.default_spec(Mode.GRADIENT)


@pytest.fixture(scope="session")
def full_gradient_dataset():
    """Four minutes per touch kind: the training set behind the headline models."""
    return pipeline.training_dataset(Mode.GRADIENT, minutes=4.0, seed=0)


@pytest.fixture(scope="session")
def tdnn50(full_gradient_dataset):
    model, info = pipeline.fit("tdnn", 50, full_gradient_dataset, seed=0)
    model.info = info
    return model


@pytest.fixture(scope="session")
def lstm1(full_gradient_dataset):
    model, info = pipeline.fit("lstm", 1, full_gradient_dataset, seed=0)
    model.info = info
    return model


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
