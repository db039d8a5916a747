import numpy as np
import pytest

from mcflab.mesh import primitives


@pytest.fixture(scope="session")
def sphere2():
    return primitives.icosphere(4, 2.0)


@pytest.fixture(scope="session")
def unit_sphere():
    return primitives.icosphere(4, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
