import numpy as np
import pytest

from nullflow.background import MinkowskiCone, SchwarzschildCone, build_analytic
from nullflow.sphere import SphereGrid


def schwarzschild(n_theta=16, n_phi=1, lam=(1.0, 4.0, 301), m=1.0, r0=0.0):
    return build_analytic(SchwarzschildCone(m, r0), SphereGrid(n_theta, n_phi), np.linspace(*lam))


def minkowski(n_theta=16, n_phi=1, lam=(1.0, 4.0, 301)):
    return build_analytic(MinkowskiCone(r0=0.0), SphereGrid(n_theta, n_phi), np.linspace(*lam))


@pytest.fixture(scope="session")
def schw16():
    return schwarzschild(16)


@pytest.fixture(scope="session")
def schw2d():
    return schwarzschild(12, 8)


@pytest.fixture(scope="session")
def mink16():
    return minkowski(16)


@pytest.fixture(scope="session")
def flow16(schw16):
    from nullflow.flow import FlowConfig, run_to_mots

    theta = schw16.grid.mesh[0]
    return run_to_mots(3.0 + 0.3 * np.cos(theta), schw16, FlowConfig(output_interval=0.05))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
