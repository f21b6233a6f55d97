import numpy as np
import pytest

from resonant_kg.phase import PhaseModel


@pytest.fixture
def two_mode_model():
    """S = t2**2/2 + x2 with two harmonics and gamma = 1."""
    return PhaseModel.from_terms({(2, 0): 0.5, (0, 1): 1.0}, mode_count=2, gamma=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
