import numpy as np
import pytest

from batrom import CellConfig, ParameterPoint, build_mesh, simulate
from batrom.fom import Discretization
from batrom.rom import offline_build


@pytest.fixture(scope="session")
def config():
    return CellConfig()


@pytest.fixture(scope="session")
def mesh(config):
    return build_mesh(20, 10, config)


@pytest.fixture(scope="session")
def small_mesh(config):
    return build_mesh(6, 4, config)


@pytest.fixture(scope="session")
def disc(config, mesh):
    return Discretization(config, mesh)


@pytest.fixture(scope="session")
def small_disc(config, small_mesh):
    return Discretization(config, small_mesh)


@pytest.fixture(scope="session")
def traj(config, mesh, disc):
    """Discharge at 1C with recorded Newton iterates."""
    return simulate(ParameterPoint(1.0), config, mesh, disc=disc, record_iterates=True)


@pytest.fixture(scope="session")
def train_rates():
    return np.linspace(0.01, 4.0, 5)


@pytest.fixture(scope="session")
def artifact(config, mesh, disc, train_rates):
    """Reduced model over the charge rate, five equidistant training points."""
    return offline_build([ParameterPoint(c) for c in train_rates], config, mesh, disc=disc)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
