import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cfisac.channels import GeneratorConfig, generate

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_line():
    """Two APs with 8 antennas and three UEs on the line."""
    return generate(GeneratorConfig(setup="line", n_ues=3, n_tx_antennas=8, n_rx_antennas=8), 3)


@pytest.fixture(scope="session")
def small_square():
    return generate(GeneratorConfig(setup="square", n_ues=3), 5)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


ACCEPTANCE = []  # (criterion, passed, detail) filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
