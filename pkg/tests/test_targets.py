import numpy as np
import pytest
from numpy.testing import assert_allclose

from spinqoc.targets import (
    GateTarget,
    StateTarget,
    basis_state,
    deutsch_gate,
    identity_gate,
    level_flip,
    parse_angle,
    parse_target,
    superposition_target,
    toffoli,
)


@pytest.mark.parametrize("theta", [0.0, np.pi / 4, np.pi / 2, 1.234])
def test_deutsch_unitary_and_structure(theta):
    U = deutsch_gate(theta).matrix
    assert_allclose(U.conj().T @ U, np.eye(8), atol=1e-15)
    assert_allclose(U[:6, :6], np.eye(6))
    assert_allclose(U[6:, 6:], [[1j * np.cos(theta), np.sin(theta)], [np.sin(theta), 1j * np.cos(theta)]])


def test_deutsch_pi_half_is_toffoli():
    assert_allclose(deutsch_gate(np.pi / 2).matrix, toffoli().matrix, atol=1e-15)
    assert toffoli().matrix[6, 7] == 1 and toffoli().matrix[6, 6] == 0


def test_deutsch_needs_three_qubits():
    with pytest.raises(ValueError):
        deutsch_gate(0.3, d=4)


def test_validation():
    with pytest.raises(ValueError):
        GateTarget("bad", np.array([[1, 1], [0, 1]]))
    with pytest.raises(ValueError):
        StateTarget("bad", np.array([1.0, 1.0]))
    with pytest.raises(IndexError):
        basis_state(8)
    with pytest.raises(IndexError):
        level_flip(0, 0, 2)


def test_states():
    v = superposition_target().vector
    assert_allclose(v, np.r_[1, 0, 0, 0, 0, 0, 0, -1j] / np.sqrt(2))
    assert basis_state(3).vector[3] == 1 and basis_state(3).label == "state:3"
    assert identity_gate(3).dim == 3


@pytest.mark.parametrize("text, value", [
    ("pi", np.pi), ("pi/4", np.pi / 4), ("3pi/4", 3 * np.pi / 4), ("3*pi/4", 3 * np.pi / 4),
    ("0.5", 0.5), ("-pi/2", -np.pi / 2), ("1/2", 0.5),
])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value)


def test_parse_angle_rejects_garbage():
    for bad in ("", "pie", "x/2"):
        with pytest.raises(ValueError):
            parse_angle(bad)


def test_parse_target():
    assert_allclose(parse_target("deutsch:pi/4").matrix, deutsch_gate(np.pi / 4).matrix)
    assert parse_target("Toffoli").label == "toffoli"
    assert_allclose(parse_target("state:7").vector, basis_state(7).vector)
    assert_allclose(parse_target("ghz07").vector, superposition_target().vector)
    assert_allclose(parse_target("flip:0-1", 2).matrix, [[0, 1], [1, 0]])
    assert parse_target("identity", 3).dim == 3
    with pytest.raises(ValueError):
        parse_target("cnot")
