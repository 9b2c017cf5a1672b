import numpy as np
import pytest

from rank1lab.surface import SurfaceModel


@pytest.fixture(scope="session")
def octagon():
    return SurfaceModel("constant-octagon")


@pytest.fixture(scope="session")
def perturbed():
    return SurfaceModel("perturbed-octagon")


@pytest.fixture(scope="session")
def cylinder():
    return SurfaceModel("flat-cylinder-funnels")


@pytest.fixture(scope="session")
def driver():
    return SurfaceModel("synthetic-driver")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
