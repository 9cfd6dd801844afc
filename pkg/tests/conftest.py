import numpy as np
import pytest

from rlmfcs.baths import BathConfig
from rlmfcs.fcs_analytic import QuadratureSpec
from rlmfcs.scattering import ModelParams


@pytest.fixture
def params():
    return ModelParams(tau=1.0, epsilon=0.3)


@pytest.fixture
def biased():
    """Unequal temperatures and symmetric bias."""
    return BathConfig(beta1=2.5, beta2=4.0, mu1=0.5, mu2=-0.5)


@pytest.fixture
def quad():
    return QuadratureSpec()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
