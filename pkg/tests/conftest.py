import os
import shutil

import numpy as np
import pytest

from attribution_leakage.structs import Dataset
from attribution_leakage.surrogate import ConditionalOracle
from attribution_leakage.synthetic import (
    DummyFeatureProcess,
    Lemma1Process,
    Lemma3Process,
    LinearGaussianProcess,
)


def get_test_runlog_dir():
    conftest_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(conftest_dir, "runlogs")


@pytest.fixture(scope="session", autouse=True)
def clean_test_runlogs():
    test_runlog_dir = get_test_runlog_dir()

    os.environ["RUNLOG_DIR"] = test_runlog_dir

    if os.path.exists(test_runlog_dir):
        shutil.rmtree(test_runlog_dir)
    os.makedirs(test_runlog_dir, exist_ok=True)

    yield test_runlog_dir


@pytest.fixture
def temp_runlog_dir(clean_test_runlogs):
    test_runlog_dir = get_test_runlog_dir()

    os.makedirs(test_runlog_dir, exist_ok=True)

    original_dir = os.environ.get("RUNLOG_DIR")
    os.environ["RUNLOG_DIR"] = test_runlog_dir

    yield test_runlog_dir

    if original_dir:
        os.environ["RUNLOG_DIR"] = original_dir
    else:
        os.environ.pop("RUNLOG_DIR", None)


@pytest.fixture
def lemma1():
    return Lemma1Process()


@pytest.fixture
def lemma3():
    return Lemma3Process()


@pytest.fixture
def lemma1_oracle(lemma1):
    return ConditionalOracle(lemma1)


@pytest.fixture
def lemma3_oracle(lemma3):
    return ConditionalOracle(lemma3)


@pytest.fixture
def linear_process():
    return LinearGaussianProcess(weights=[2.0, -1.0, 0.5, 0.0])


@pytest.fixture
def dummy_oracle():
    return ConditionalOracle(DummyFeatureProcess(num_features=2))


@pytest.fixture
def lemma3_inputs():
    return np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])


@pytest.fixture
def small_dataset():
    features = np.array(
        [[0.0, 1.0, 2.0], [1.0, 0.5, -1.0], [2.0, -0.5, 0.0], [-1.0, 1.5, 3.0]]
    )
    return Dataset(features=features, labels=[0, 1, 1, 0], num_classes=2)


@pytest.fixture
def write_config(tmp_path):
    """Writes an INI run config under tmp_path and returns its path."""

    def _write(text: str, name: str = "run.ini") -> str:
        path = tmp_path / name
        path.write_text(text.replace("{tmp}", str(tmp_path)), encoding="utf-8")
        return str(path)

    return _write
