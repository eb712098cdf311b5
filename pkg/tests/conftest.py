"""Shared parameter sets, hypothesis strategies and the acceptance report."""

from __future__ import annotations

import math

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from lambdaspec.model import ModelParams, build_expansion

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FIG2 = dict(omega1=8.5, omega2=8.5, delta=35.0, gamma1=5.0, gamma2=5.0)
FIG2A = ModelParams(**FIG2, eta1=0.01, eta2=0.01, n_max=8)
FIG2B = ModelParams(**FIG2, eta1=0.05, eta2=0.05, n_max=8)
FIG4 = ModelParams(**{**FIG2, "delta": 15.0}, eta1=0.05, eta2=0.05, n_max=10)
# generic angles so that no term vanishes by symmetry
GENERIC = ModelParams(
    omega1=10.0, omega2=7.0, delta=10.0, gamma1=3.0, gamma2=2.0,
    eta1=0.03, eta2=0.02, phi1=0.3, phi2=2.5, psi=0.4, n_max=20,
)

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def fig2a_exp():
    return build_expansion(FIG2A)


@pytest.fixture(scope="session")
def generic_exp():
    return build_expansion(GENERIC)


@st.composite
def cooling_params(draw, n_max: int = 4):
    """Random parameters with blue detuning and non-degenerate angles."""
    omega1 = draw(st.floats(2.0, 15.0))
    omega2 = draw(st.floats(2.0, 15.0))
    gamma1 = draw(st.floats(0.5, 8.0))
    gamma2 = draw(st.floats(0.5, 8.0))
    delta = draw(st.floats(1.0, 40.0))
    eta1 = draw(st.floats(0.005, 0.05))
    eta2 = draw(st.floats(0.005, 0.05))
    phi1 = draw(st.floats(0.0, 0.5))
    phi2 = draw(st.floats(math.pi - 0.5, math.pi))
    psi = draw(st.floats(0.1, 1.4))
    return ModelParams(
        omega1=omega1, omega2=omega2, delta=delta, gamma1=gamma1, gamma2=gamma2,
        eta1=eta1, eta2=eta2, phi1=phi1, phi2=phi2, psi=psi, n_max=n_max,
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
