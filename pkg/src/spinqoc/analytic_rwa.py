"""Resonant two-level rotations in the rotating-wave approximation.

A weak pulse ``lambda cos(w_jk t + phi)`` resonant with levels j < k acts,
in the interaction picture, as exp(-i theta/2 n.sigma) on span{|j>, |k>}
and as the identity elsewhere, with n = (cos a, -sin a, 0),
a = arg(mu) + phi and theta = 2 pi lambda g mu_B |mu| t. Here ``mu`` is the
signed drive element: the Zeeman-type coupling -g mu_B b.S flips its sign
relative to <j|b.S|k> (for g > 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .pulse import MonochromaticPulse, PulseSequence, TransitionNotDriven, pi_pulse_duration
from .spin_model import SpectralData

_AXES = {"X": 0.0, "Y": -np.pi / 2, "-X": np.pi, "-Y": np.pi / 2}


@dataclass(frozen=True)
class RotationSpec:
    """Rotation by ``theta`` about ``n = (cos a, -sin a, 0)`` in the (j, k) block.

    ``axis_angle`` is ``a``; 0 is the X axis and -pi/2 the Y axis. A string
    ("X", "Y", "-X", "-Y") is accepted for convenience.
    """

    j: int
    k: int
    theta: float
    axis_angle: float | str = 0.0

    def __post_init__(self):
        if self.j == self.k:
            raise ValueError("rotation needs two distinct levels")
        if self.j < 0 or self.k < 0:
            raise ValueError("level indices must be non-negative")
        if self.j > self.k:
            raise ValueError("use j < k")
        if isinstance(self.axis_angle, str):
            object.__setattr__(self, "axis_angle", _AXES[self.axis_angle.upper()])

    @property
    def axis(self) -> np.ndarray:
        a = self.axis_angle
        return np.array([np.cos(a), -np.sin(a), 0.0])


_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)


def su2_rotation(theta: float, axis) -> np.ndarray:
    """exp(-i theta/2 n.sigma) in closed form."""
    n = np.asarray(axis, dtype=float)
    ns = n[0] * _SX + n[1] * _SY + n[2] * np.diag([1.0, -1.0])
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * ns


def rwa_rotation(spec: RotationSpec, d: int) -> np.ndarray:
    """Embed the block rotation of ``spec`` into a d x d identity."""
    if spec.k >= d:
        raise ValueError(f"level {spec.k} outside dimension {d}")
    U = np.eye(d, dtype=complex)
    idx = np.ix_([spec.j, spec.k], [spec.j, spec.k])
    U[idx] = su2_rotation(spec.theta, spec.axis)
    return U


def axis_phase(mu: complex, axis: str = "X") -> float:
    """Drive phase selecting an X or Y rotation for matrix element ``mu``."""
    if abs(mu) < 1e-12:
        raise TransitionNotDriven("transition not driven: zero coupling matrix element")
    axis = axis.upper()
    if axis == "X":
        return -float(np.angle(mu))
    if axis == "Y":
        return -float(np.angle(mu)) - np.pi / 2
    raise ValueError(f"axis must be 'X' or 'Y', got {axis!r}")


def drive_element(spectral: SpectralData, j: int, k: int, g_factor: float = 2.0) -> complex:
    """<j|b.S|k> with the sign of the -g mu_B coupling folded in."""
    return -np.sign(g_factor) * spectral.transition_elements[j, k]


def monochromatic_for(spec: RotationSpec, amplitude: float, spectral: SpectralData,
                      g_factor: float = 2.0, t_start: float = 0.0) -> MonochromaticPulse:
    """Resonant pulse realizing ``spec`` at drive amplitude ``amplitude`` (T)."""
    if spec.theta <= 0:
        raise ValueError("rotation angle must be positive; choose the axis for the sign")
    mu = drive_element(spectral, spec.j, spec.k, g_factor)
    phase = axis_phase(mu, "X") + spec.axis_angle
    duration = spec.theta / np.pi * pi_pulse_duration(amplitude, mu, g_factor)
    return MonochromaticPulse(
        amplitude=amplitude,
        frequency=float(spectral.transition_frequencies[spec.j, spec.k]),
        phase=phase,
        t_start=t_start,
        t_end=t_start + duration,
    )


def sequence_unitary(specs: Sequence[RotationSpec], d: int) -> np.ndarray:
    """Product of block rotations, first spec applied first."""
    if not specs:
        raise ValueError("empty rotation sequence")
    U = np.eye(d, dtype=complex)
    for s in specs:
        U = rwa_rotation(s, d) @ U
    return U


def sequence_pulse_schedule(specs: Sequence[RotationSpec], amplitude: float, spectral: SpectralData,
                            g_factor: float = 2.0) -> PulseSequence:
    """Concatenated resonant pulses, all at the same amplitude, with no gaps."""
    if not specs:
        raise ValueError("empty rotation sequence")
    segments = []
    t = 0.0
    for s in specs:
        p = monochromatic_for(s, amplitude, spectral, g_factor, t_start=t)
        segments.append(p)
        t = p.t_end
    return PulseSequence(tuple(segments))


def sequence_duration(specs: Sequence[RotationSpec], amplitude: float, spectral: SpectralData,
                      g_factor: float = 2.0) -> float:
    """Total time of :func:`sequence_pulse_schedule` without building it."""
    return sum(
        s.theta / np.pi * pi_pulse_duration(amplitude, drive_element(spectral, s.j, s.k, g_factor), g_factor)
        for s in specs
    )


def amplitude_for_duration(specs: Sequence[RotationSpec], duration: float, spectral: SpectralData,
                           g_factor: float = 2.0) -> float:
    """Common amplitude that makes the whole sequence last ``duration`` ns."""
    return sequence_duration(specs, 1.0, spectral, g_factor) / duration


def ladder(j: int, k: int, first_angle: float = np.pi, first_axis: float | str = "X") -> list[RotationSpec]:
    """Adjacent-level rotations climbing from level j to level k > j.

    The first rotation can be partial (e.g. pi/2 about -X for a superposition).
    """
    if k <= j:
        raise ValueError("ladder needs k > j")
    specs = [RotationSpec(j, j + 1, first_angle, first_axis)]
    specs += [RotationSpec(m, m + 1, np.pi, "X") for m in range(j + 1, k)]
    return specs


def propagate_schedule(dynamics, schedule, steps_per_period: int = 40):
    """Interaction-picture propagator of a monochromatic schedule.

    Each segment gets its own grid so that window edges fall on grid nodes.
    ``dynamics`` is a :class:`~spinqoc.propagation.Dynamics`.
    """
    from .propagation import TimeGrid, propagate_unitary

    segments = schedule.segments if isinstance(schedule, PulseSequence) else (schedule,)
    U = np.eye(dynamics.dim, dtype=complex)
    for seg in segments:
        grid = TimeGrid.resolving(seg.t_end, dynamics.nu_max(seg), steps_per_period, t0=seg.t_start)
        U = propagate_unitary(dynamics, None, seg, grid).final @ U
    return U
