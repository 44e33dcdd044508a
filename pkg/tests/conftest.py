import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from openexciton.model import DipoleModel, Environment, ExcitonSystem, SpectralDensity

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

DIMER_H = np.array([[-75.0, 100.0], [100.0, 75.0]])  # eigenvalues -125, +125
ROOM = 277.0

FMO_H = np.array([
    [1410.0, -87.7, 5.5, -5.9, 6.7, -13.7, -9.9],
    [-87.7, 1530.0, 30.8, 8.2, 0.7, 11.8, 4.3],
    [5.5, 30.8, 1210.0, -53.5, -2.2, -9.6, 6.0],
    [-5.9, 8.2, -53.5, 1320.0, -70.7, -17.0, -63.3],
    [6.7, 0.7, -2.2, -70.7, 1480.0, 81.1, -1.3],
    [-13.7, 11.8, -9.6, -17.0, 81.1, 1630.0, 39.7],
    [-9.9, 4.3, 6.0, -63.3, -1.3, 39.7, 1440.0],
])
FMO_DIPOLES = np.array([
    [0.74101, 0.56060, 0.36964],
    [0.85714, -0.50378, 0.10733],
    [0.19712, -0.95741, 0.21097],
    [0.79924, 0.53357, 0.27661],
    [0.73693, -0.65576, -0.16406],
    [0.13502, 0.87922, -0.45689],
    [0.49511, 0.70834, 0.50310],
])


def dimer(lam=35.0, invnu=50.0, shift=0.0, temperature=ROOM):
    system = ExcitonSystem.from_hamiltonian(DIMER_H)
    env = Environment.uniform(2, SpectralDensity.drude_lorentz(lam, invnu, shift), temperature)
    return system, env


def fmo(lam=35.0, invnu=50.0, temperature=100.0):
    system = ExcitonSystem.from_hamiltonian(FMO_H)
    env = Environment.uniform(7, SpectralDensity.drude_lorentz(lam, invnu), temperature)
    return system, env, DipoleModel(FMO_DIPOLES)


ORTHOGONAL_DIMER_DIPOLES = DipoleModel([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@pytest.fixture
def dimer_system():
    return dimer()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def _report(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
