import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.linalg import expm

from conftest import small_dynamics
from spinqoc.analytic_rwa import (
    RotationSpec,
    amplitude_for_duration,
    axis_phase,
    drive_element,
    ladder,
    monochromatic_for,
    propagate_schedule,
    rwa_rotation,
    sequence_duration,
    sequence_pulse_schedule,
    sequence_unitary,
    su2_rotation,
)
from spinqoc.pulse import TransitionNotDriven, pi_pulse_duration
from spinqoc.qoct import gate_fidelity
from spinqoc.targets import superposition_target

SX = np.array([[0, 1], [1, 0]])
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1, -1])


@settings(max_examples=40)
@given(st.floats(-7, 7), st.floats(0, np.pi), st.floats(0, 2 * np.pi))
def test_su2_matches_exponential(theta, pol, az):
    n = np.array([np.sin(pol) * np.cos(az), np.sin(pol) * np.sin(az), np.cos(pol)])
    ref = expm(-0.5j * theta * (n[0] * SX + n[1] * SY + n[2] * SZ))
    assert_allclose(su2_rotation(theta, n), ref, atol=1e-12)


def test_rotation_spec():
    s = RotationSpec(1, 2, np.pi, "Y")
    assert_allclose(s.axis, [0, 1, 0], atol=1e-15)
    assert_allclose(RotationSpec(0, 1, 1.0, "-X").axis, [-1, 0, 0], atol=1e-15)
    for bad in [(1, 1), (2, 1), (-1, 0)]:
        with pytest.raises(ValueError):
            RotationSpec(*bad, np.pi)


def test_rwa_rotation_embedding():
    U = rwa_rotation(RotationSpec(2, 5, np.pi), 8)
    assert_allclose(U.conj().T @ U, np.eye(8), atol=1e-15)
    # pi about X: |2> -> -i|5>, everything else untouched
    assert_allclose(U[5, 2], -1j, atol=1e-15)
    keep = [0, 1, 3, 4, 6, 7]
    assert_allclose(U[np.ix_(keep, keep)], np.eye(6))
    with pytest.raises(ValueError):
        rwa_rotation(RotationSpec(2, 8, np.pi), 8)


def test_axis_phase():
    mu = 0.6 * np.exp(0.7j)
    assert axis_phase(mu, "X") == pytest.approx(-0.7)
    assert axis_phase(mu, "y") == pytest.approx(-0.7 - np.pi / 2)
    with pytest.raises(TransitionNotDriven):
        axis_phase(0.0)
    with pytest.raises(ValueError):
        axis_phase(mu, "Z")


def test_monochromatic_for_timing(gdw_spectral):
    lam = 1e-4
    p = monochromatic_for(RotationSpec(3, 4, np.pi / 2), lam, gdw_spectral, t_start=2.0)
    mu = drive_element(gdw_spectral, 3, 4)
    assert p.duration == pytest.approx(0.5 * pi_pulse_duration(lam, mu, 2.0))
    assert p.frequency == pytest.approx(gdw_spectral.adjacent_frequencies()[3])
    assert p.t_start == 2.0
    with pytest.raises(ValueError):
        monochromatic_for(RotationSpec(3, 4, -np.pi / 2), lam, gdw_spectral)


def test_sequence_bookkeeping(gdw_spectral):
    specs = ladder(0, 7)
    assert [(s.j, s.k) for s in specs] == [(m, m + 1) for m in range(7)]
    sched = sequence_pulse_schedule(specs, 1e-3, gdw_spectral)
    assert sched.t_start == 0.0
    assert sched.duration == pytest.approx(sequence_duration(specs, 1e-3, gdw_spectral))
    lam = amplitude_for_duration(specs, 10.0, gdw_spectral)
    assert sequence_duration(specs, lam, gdw_spectral) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        ladder(3, 3)
    with pytest.raises(ValueError):
        sequence_unitary([], 8)


def test_ladder_maps_ground_to_top():
    U = sequence_unitary(ladder(0, 7), 8)
    psi = U[:, 0]
    assert abs(psi[7]) == pytest.approx(1.0)


def test_superposition_ladder_reaches_target():
    # pi/2 about -X on (0, 1), then pi pulses carry the |1> half up to |7>
    U = sequence_unitary(ladder(0, 7, first_angle=np.pi / 2, first_axis="-X"), 8)
    target = superposition_target().vector
    assert abs(np.vdot(target, U[:, 0])) ** 2 == pytest.approx(1.0, abs=1e-14)
    # about +X the same sequence lands on an orthogonal state
    U_wrong = sequence_unitary(ladder(0, 7, first_angle=np.pi / 2), 8)
    assert abs(np.vdot(target, U_wrong[:, 0])) ** 2 < 1e-14


def _rwa_infidelity(dyn, sp, spec, lam, g=2.0):
    U = propagate_schedule(dyn, monochromatic_for(spec, lam, sp, g))
    d = dyn.dim
    idx = [spec.j, spec.k]
    # compare on the driven block, up to the drift phases left outside it
    block = U[np.ix_(idx, idx)]
    return 1.0 - gate_fidelity(block, rwa_rotation(spec, d)[np.ix_(idx, idx)])


@pytest.mark.parametrize("axis", ["X", "Y", "-X"])
def test_spin_half_converges_to_rwa(axis):
    s, sp, dyn = small_dynamics(0.5)
    spec = RotationSpec(0, 1, np.pi / 2, axis)
    lams = np.array([4e-4, 2e-4, 1e-4])
    inf = [_rwa_infidelity(dyn, sp, spec, lam) for lam in lams]
    slope = np.polyfit(np.log(lams), np.log(inf), 1)[0]
    assert abs(slope - 2) < 0.2
    assert inf[-1] < 1e-5


def test_rwa_axis_sign_spin_half():
    # with the signed drive element the realized rotation is R_X, not R_-X
    s, sp, dyn = small_dynamics(0.5)
    spec = RotationSpec(0, 1, np.pi / 2, "X")
    U = propagate_schedule(dyn, monochromatic_for(spec, 5e-5, sp))
    R = rwa_rotation(spec, 2)
    R_opp = rwa_rotation(RotationSpec(0, 1, np.pi / 2, "-X"), 2)
    assert gate_fidelity(U, R) > 0.999
    assert gate_fidelity(U, R_opp) < 0.01
