import numpy as np
import pytest

from oracles import random_sparse, suite


@pytest.fixture(scope="session")
def suite_matrices():
    return suite()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def m200():
    return random_sparse(7, 200, density=0.03)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
