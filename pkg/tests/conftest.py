import numpy as np
import pytest

from regsir.dynamics import EpidemicParams, MonodLaw

from . import oracles as O


@pytest.fixture
def law():
    return MonodLaw(O.K)


@pytest.fixture
def params():
    # c chosen so that c * S(0) = CS at S(0) = 80 million
    return EpidemicParams(c=O.CS / 80e6, gamma=O.GAMMA, alpha=O.ALPHA, u=O.U, epsilon=1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
