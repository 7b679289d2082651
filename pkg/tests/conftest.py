import numpy as np
import pytest

from pdsubgrad import problems


@pytest.fixture(scope="session")
def small_l1ls():
    return problems.gen_l1_ls(20, 20, 0.02, seed=7)


@pytest.fixture(scope="session")
def flat_l1ls():
    return problems.gen_l1_ls(20, 20, 0.0, seed=3)


@pytest.fixture
def toy():
    return problems.toy_divergent()


@pytest.fixture(scope="session")
def constrained2():
    return problems.gen_constrained(2, 2, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
