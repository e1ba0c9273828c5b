from pathlib import Path

import pytest

from slowfol.examples import fhn_like_system, motivating_system
from slowfol.lp import WeightedNormConfig
from slowfol.noise import sample_noise

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "slowfol" / "configs"

# acceptance lines collected across the session and echoed in the summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR


@pytest.fixture(scope="session")
def motivating():
    return motivating_system()


@pytest.fixture(scope="session")
def fhn():
    return fhn_like_system()


@pytest.fixture(scope="session")
def mcfg(motivating):
    return WeightedNormConfig.for_spec(motivating, dt=1e-3)


@pytest.fixture(scope="session")
def mnoise(motivating, mcfg):
    """Quadratic-example noise at eps = 0.1, covering [-T, 1]."""
    return sample_noise(motivating, 123, -mcfg.T, 1.0, mcfg.dt, eps=0.1)


@pytest.fixture(scope="session")
def fcfg(fhn):
    return WeightedNormConfig.for_spec(fhn, dt=1e-2, tol=1e-10)


@pytest.fixture(scope="session")
def fnoise(fhn, fcfg):
    return sample_noise(fhn, 7, -fcfg.T, 1.0, fcfg.dt, eps=0.1)
