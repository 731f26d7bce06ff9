import numpy as np
import pytest

from spinqoc.propagation import Dynamics
from spinqoc.spin_model import SpinSystem, coupling_operator, gdw30, spectrum

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def gdw():
    return gdw30()


@pytest.fixture(scope="session")
def gdw_spectral(gdw):
    return spectrum(gdw)


@pytest.fixture(scope="session")
def gdw_dynamics(gdw, gdw_spectral):
    return Dynamics(gdw_spectral.energies, gdw_spectral.to_eigenbasis(coupling_operator(gdw)))


def small_system(spin=0.5):
    """A light system with unequal gaps: field along z, drive along x."""
    return SpinSystem(spin=spin, g_factor=2.0, zfs_d=300.0 if spin > 0.5 else 0.0, zfs_e=40.0 if spin > 0.5 else 0.0,
                      static_field=(0.0, 0.0, 0.05), drive_direction=(1.0, 0.0, 0.0))


def small_dynamics(spin=0.5):
    s = small_system(spin)
    sp = spectrum(s)
    return s, sp, Dynamics(sp.energies, sp.to_eigenbasis(coupling_operator(s)))


def random_unitary(d, rng):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
