"""Session-wide spectra shared by the unit and acceptance suites."""

import pytest

from mirrorspec.model import ModelParams
from mirrorspec.spectrum import converged_spectrum


@pytest.fixture(scope="session")
def zeta_b1():
    return converged_spectrum(ModelParams.zeta_family(1.0, 1.0), "oscillator", want=10, tol=1e-8)


@pytest.fixture(scope="session")
def zeta_b1_grid():
    return converged_spectrum(ModelParams.zeta_family(1.0, 1.0), "grid", want=10, tol=1e-8)


@pytest.fixture(scope="session")
def mn11_b1():
    return converged_spectrum(ModelParams.mn_family(1.0, 1, 1), "oscillator", want=10, tol=1e-8)


@pytest.fixture(scope="session")
def zeta_quarter():
    """H(1) at b = 1/4, certified far enough for Weyl fits and heat traces."""
    return converged_spectrum(ModelParams.zeta_family(0.25, 1.0), "oscillator", want=400, tol=1e-8)


@pytest.fixture(scope="session")
def mn11_quarter():
    return converged_spectrum(ModelParams.mn_family(0.25, 1, 1), "oscillator", want=400, tol=1e-8)



#: (number, title, passed, detail) lines recorded by the acceptance suite
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {title}: {detail}")
