"""Target gates and states, expressed in the drift eigenbasis."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GateTarget:
    label: str
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        U = np.asarray(self.matrix, dtype=complex)
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise ValueError("gate must be a square matrix")
        if np.abs(U.conj().T @ U - np.eye(len(U))).max() > 1e-12:
            raise ValueError(f"gate {self.label!r} is not unitary")
        object.__setattr__(self, "matrix", U)

    @property
    def dim(self) -> int:
        return len(self.matrix)


@dataclass(frozen=True)
class StateTarget:
    label: str
    vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex)
        if v.ndim != 1:
            raise ValueError("state must be a vector")
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError(f"state {self.label!r} is not normalized")
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return len(self.vector)


def deutsch_gate(theta: float, d: int = 8) -> GateTarget:
    """Identity on levels 0-5, [[i cos t, sin t], [sin t, i cos t]] on levels 6, 7."""
    if d != 8:
        raise ValueError("the Deutsch gate is defined on three qubits (d = 8)")
    U = np.eye(8, dtype=complex)
    c, s = np.cos(theta), np.sin(theta)
    U[6:, 6:] = [[1j * c, s], [s, 1j * c]]
    return GateTarget(f"deutsch({theta:.6g})", U)


def toffoli(d: int = 8) -> GateTarget:
    gate = deutsch_gate(np.pi / 2, d)
    U = gate.matrix.copy()
    U[6:, 6:] = [[0, 1], [1, 0]]  # exact zeros instead of i cos(pi/2)
    return GateTarget("toffoli", U)


def level_flip(j: int, k: int, d: int) -> GateTarget:
    """Swap levels j and k, identity elsewhere (Pauli X for d = 2)."""
    if not (0 <= j < d and 0 <= k < d) or j == k:
        raise IndexError(f"need two distinct levels in 0..{d - 1}, got {j}, {k}")
    U = np.eye(d, dtype=complex)
    U[[j, k]] = U[[k, j]]
    return GateTarget(f"flip:{j}-{k}", U)


def identity_gate(d: int) -> GateTarget:
    return GateTarget("identity", np.eye(d))


def basis_state(j: int, d: int = 8) -> StateTarget:
    if not 0 <= j < d:
        raise IndexError(f"level {j} outside 0..{d - 1}")
    v = np.zeros(d, dtype=complex)
    v[j] = 1.0
    return StateTarget(f"state:{j}", v)


def superposition_target(d: int = 8) -> StateTarget:
    """(|0> - i|d-1>) / sqrt(2)."""
    v = np.zeros(d, dtype=complex)
    v[0] = 1 / np.sqrt(2)
    v[d - 1] = -1j / np.sqrt(2)
    return StateTarget("ghz07" if d == 8 else f"ghz0{d - 1}", v)


_ANGLE = re.compile(r"^\s*(-?[\d.]*)\s*\*?\s*(pi)?\s*(?:/\s*([\d.]+))?\s*$")


def parse_angle(text: str) -> float:
    """Parse '0.3', 'pi', 'pi/4', '3pi/4' or '3*pi/4'."""
    m = _ANGLE.match(text)
    if not m or not (m.group(1) or m.group(2)):
        raise ValueError(f"cannot parse angle {text!r}")
    num = float(m.group(1)) if m.group(1) not in ("", "-") else (-1.0 if m.group(1) == "-" else 1.0)
    val = num * (np.pi if m.group(2) else 1.0)
    if m.group(3):
        val /= float(m.group(3))
    return val


def parse_target(name: str, d: int = 8) -> GateTarget | StateTarget:
    """Resolve 'deutsch:pi/4', 'toffoli', 'identity', 'flip:0-1', 'state:7' or 'ghz07'."""
    key = name.strip().lower()
    if key == "toffoli":
        return toffoli(d)
    if key == "identity":
        return identity_gate(d)
    if key == "ghz07":
        return superposition_target(d)
    if key.startswith("deutsch:"):
        return deutsch_gate(parse_angle(key.split(":", 1)[1]), d)
    if key.startswith("flip:"):
        j, k = key.split(":", 1)[1].split("-")
        return level_flip(int(j), int(k), d)
    if key.startswith("state:"):
        return basis_state(int(key.split(":", 1)[1]), d)
    raise ValueError(f"unknown target {name!r}")
