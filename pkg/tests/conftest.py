import numpy as np
import pytest

from robustmimo.duality import random_transceiver
from robustmimo.model import SystemConfig, random_instance

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    """Callable recording one PASS/FAIL line for the terminal summary."""
    store = request.config.stash[_ACCEPTANCE_KEY]

    def record(line):
        store.append(line)
        print(line)

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg():
    return SystemConfig()


def scalar_instance(h, sigma_e2=0.0):
    """Single-user, single-antenna instance with estimate `h`."""
    from robustmimo.model import make_instance
    return make_instance([np.array([[h]], dtype=complex)], [np.eye(1)], [np.eye(1)], sigma_e2)


def random_case(rng, K=2, N=4, M=(2, 2), direction="uplink"):
    inst = random_instance(rng, K, N, M)
    return inst, random_transceiver(rng, inst, direction)
