import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qpcp.proof import build_honest_proof
from qpcp.quantum import random_circuit, simulate

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_circuit():
    return random_circuit(3, 6, np.random.default_rng(7))


@pytest.fixture
def honest(small_circuit):
    return build_honest_proof(simulate(small_circuit))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
