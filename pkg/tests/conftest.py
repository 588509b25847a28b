import sys

import numpy as np
import pytest

from igloo import tensor as T


@pytest.fixture(autouse=True)
def checked_mode():
    # finite-value checking on for every test; individual tests may toggle
    prior = T.set_checked(True)
    yield
    T.set_checked(prior)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    # the acceptance tests record one verdict line per criterion; show them
    # after capture ends so a plain pytest run always ends with the list
    lines = []
    for name, module in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            lines = getattr(module, "CRITERION_LINES", [])
            break
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
