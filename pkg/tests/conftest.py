import numpy as np
import pytest

from plda_map.data import LabeledDataset
from oracles import sample_plda

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def balanced_data():
    """p=3 data from a known model with a non-trivial transform."""
    rng = np.random.default_rng(7)
    M = np.array([[2.0, 0.3, 0.0], [0.1, 1.0, -0.4], [0.0, 0.5, 0.7]])
    mu0 = np.array([1.0, -2.0, 0.5])
    labels, x = sample_plda(rng, [3.0, 1.0, 0.2], K=400, n=20, M=M, mu0=mu0)
    return LabeledDataset(labels, x)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
