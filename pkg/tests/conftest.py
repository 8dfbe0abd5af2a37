import numpy as np
import pytest

from graphfk.instances import edgeless_instance, flux_triangle, random_instance, two_vertex

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def inst6():
    return random_instance()


@pytest.fixture(scope="session")
def inst6_positive():
    return random_instance(potential="positive", seed=77)


@pytest.fixture(scope="session")
def edgeless6():
    return edgeless_instance()


@pytest.fixture(scope="session")
def pair():
    return two_vertex()


@pytest.fixture(scope="session")
def triangle():
    return flux_triangle(np.pi / 3)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
