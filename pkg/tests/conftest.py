import numpy as np
import pytest

from gmm_landscape import ExpectationEngine, TrueMixture

# lines printed by the acceptance module, echoed once at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def engine():
    return ExpectationEngine()


@pytest.fixture(scope="session")
def gh_engine():
    return ExpectationEngine(rule="gauss_hermite")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def three_line():
    return TrueMixture([[-6.0, 0.0, 6.0]])
