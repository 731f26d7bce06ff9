"""Control pulse shapes.

Two parameterizations are supported: rectangular-window monochromatic
pulses (the resonant baseline) and the truncated Fourier expansion

    f(t) = u_0 / sqrt(T) + sum_k (2 / sqrt(T)) [u_{2k} cos(w_k t) + u_{2k-1} sin(w_k t)]

with w_k = 2 pi k / T. Times are in ns, amplitudes in tesla, frequencies in
GHz (ordinary, not angular).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spin_model import MU_B


class TransitionNotDriven(ValueError):
    """The drive has no matrix element between the requested levels."""


@dataclass(frozen=True)
class MonochromaticPulse:
    """``amplitude * cos(2 pi frequency t + phase)`` on ``[t_start, t_end]``."""

    amplitude: float
    frequency: float
    phase: float = 0.0
    t_start: float = 0.0
    t_end: float = 1.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def max_frequency(self) -> float:
        return abs(self.frequency)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        window = (t >= self.t_start) & (t <= self.t_end)
        return np.where(window, self.amplitude * np.cos(2 * np.pi * self.frequency * t + self.phase), 0.0)


@dataclass(frozen=True)
class PulseSequence:
    """Back-to-back monochromatic segments (no gaps)."""

    segments: tuple[MonochromaticPulse, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("empty pulse sequence")
        for a, b in zip(self.segments, self.segments[1:]):
            if abs(a.t_end - b.t_start) > 1e-9 * max(1.0, abs(b.t_start)):
                raise ValueError("segments must be contiguous")

    @property
    def t_start(self) -> float:
        return self.segments[0].t_start

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def max_frequency(self) -> float:
        return max(s.max_frequency for s in self.segments)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        # half-open windows so a shared boundary is not counted twice
        for i, s in enumerate(self.segments):
            last = i == len(self.segments) - 1
            win = (t >= s.t_start) & ((t <= s.t_end) if last else (t < s.t_end))
            out = np.where(win, s.amplitude * np.cos(2 * np.pi * s.frequency * t + s.phase), out)
        return out


@dataclass(frozen=True)
class FourierPulse:
    """Truncated Fourier pulse on ``[0, t_f]``.

    ``coefficients`` holds ``(u_0, u_1, ..., u_2K)``: odd indices multiply
    sines, even indices (k >= 1) cosines. With ``constrained=True`` the
    pulse is forced to have zero mean and to vanish at both ends by setting
    ``u_0 = 0`` and ``u_2K = -sum_{k<K} u_2k``.
    """

    t_f: float
    n_modes: int
    coefficients: np.ndarray = field(repr=False)
    constrained: bool = False

    def __post_init__(self):
        if self.t_f <= 0:
            raise ValueError("t_f must be positive")
        if self.n_modes < 0:
            raise ValueError("n_modes must be non-negative")
        u = np.array(self.coefficients, dtype=float)
        if u.shape != (2 * self.n_modes + 1,):
            raise ValueError(f"expected {2 * self.n_modes + 1} coefficients, got shape {u.shape}")
        if self.constrained:
            u[0] = 0.0
            if self.n_modes > 0:
                u[2 * self.n_modes] = -u[2:2 * self.n_modes:2].sum()
        u.setflags(write=False)
        object.__setattr__(self, "coefficients", u)

    @classmethod
    def zeros(cls, t_f: float, n_modes: int, constrained: bool = True) -> "FourierPulse":
        return cls(t_f, n_modes, np.zeros(2 * n_modes + 1), constrained)

    @classmethod
    def from_cutoff(cls, t_f: float, cutoff: float, coefficients=None, constrained: bool = True):
        """Pulse whose highest mode does not exceed ``cutoff`` (GHz)."""
        K = cutoff_modes(t_f, cutoff)
        if coefficients is None:
            coefficients = np.zeros(2 * K + 1)
        return cls(t_f, K, coefficients, constrained)

    @property
    def frequencies(self) -> np.ndarray:
        """Mode frequencies k / t_f in GHz, k = 1..K."""
        return np.arange(1, self.n_modes + 1) / self.t_f

    @property
    def max_frequency(self) -> float:
        return self.n_modes / self.t_f

    @property
    def sines(self) -> np.ndarray:
        return self.coefficients[1::2]

    @property
    def cosines(self) -> np.ndarray:
        return self.coefficients[2::2]

    def with_coefficients(self, u) -> "FourierPulse":
        return FourierPulse(self.t_f, self.n_modes, u, self.constrained)

    def basis(self, t) -> np.ndarray:
        """Basis functions df/du_m at times ``t``, shape (2K+1, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        K = self.n_modes
        out = np.empty((2 * K + 1, t.size))
        out[0] = 1.0
        arg = 2 * np.pi * np.outer(np.arange(1, K + 1), t) / self.t_f
        out[1::2] = 2.0 * np.sin(arg)
        out[2::2] = 2.0 * np.cos(arg)
        return out / np.sqrt(self.t_f)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        out = np.empty(flat.size)
        chunk = max(1, 2_000_000 // max(1, 2 * self.n_modes + 1))
        for s in range(0, flat.size, chunk):
            out[s:s + chunk] = self.coefficients @ self.basis(flat[s:s + chunk])
        return out.reshape(t.shape) if t.ndim else float(out[0])

    def sample_midpoints(self, n_steps: int) -> np.ndarray:
        """Values at ``(n + 1/2) t_f / n_steps`` for n = 0..n_steps-1, via FFT."""
        K = self.n_modes
        if K >= n_steps:
            raise ValueError("grid too coarse for the number of Fourier modes")
        u = self.coefficients
        spec = np.zeros(n_steps, dtype=complex)
        k = np.arange(1, K + 1)
        spec[1:K + 1] = (u[2::2] - 1j * u[1::2]) * np.exp(1j * np.pi * k / n_steps)
        series = np.fft.ifft(spec) * n_steps
        return (u[0] + 2.0 * series.real) / np.sqrt(self.t_f)

    def project_midpoints(self, values: np.ndarray) -> np.ndarray:
        """Return ``sum_n values[n] * basis_m(t_n)`` on the midpoint grid, for every m.

        This is the transpose of :meth:`sample_midpoints`.
        """
        values = np.asarray(values, dtype=float)
        n_steps = values.size
        K = self.n_modes
        k = np.arange(1, K + 1)
        c = np.fft.fft(values)[1:K + 1] * np.exp(-1j * np.pi * k / n_steps)
        out = np.empty(2 * K + 1)
        out[0] = values.sum()
        out[1::2] = -2.0 * c.imag
        out[2::2] = 2.0 * c.real
        return out / np.sqrt(self.t_f)

    def term_amplitudes(self) -> np.ndarray:
        """Peak value of each individual term: |u_0|/sqrt(T), |2 u_m|/sqrt(T)."""
        amp = 2.0 * np.abs(self.coefficients) / np.sqrt(self.t_f)
        amp[0] *= 0.5
        return amp

    def peak_amplitude(self, n_samples: int | None = None) -> float:
        """Largest |f(t)| of the summed waveform, sampled on a fine grid."""
        n = n_samples or max(2048, 16 * self.n_modes)
        return float(np.abs(self(np.linspace(0.0, self.t_f, n + 1))).max())


def cutoff_modes(t_f: float, cutoff: float) -> int:
    """Largest K with K / t_f <= cutoff (GHz)."""
    return int(np.floor(cutoff * t_f * (1 + 1e-12)))


def evaluate(pulse, t):
    """Pulse amplitude (tesla) at time(s) ``t`` (ns)."""
    return pulse(t)


def rabi_angular_frequency(amplitude: float, element: complex, g_factor: float) -> float:
    """Resonant rotation rate lambda g mu_B |mu_jk| in rad/ns.

    This is the one place where the GHz -> rad/ns factor 2 pi enters the
    resonant-pulse bookkeeping.
    """
    return 2 * np.pi * amplitude * abs(g_factor) * MU_B * abs(element)


def pi_pulse_duration(amplitude: float, element: complex, g_factor: float) -> float:
    """Duration (ns) of a resonant pi rotation at drive amplitude ``amplitude`` (T)."""
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    if abs(element) < 1e-12:
        raise TransitionNotDriven("transition not driven: zero coupling matrix element")
    return np.pi / rabi_angular_frequency(amplitude, element, g_factor)


def pi_pulse_amplitude(duration: float, element: complex, g_factor: float) -> float:
    """Inverse of :func:`pi_pulse_duration`: the amplitude giving a pi rotation in ``duration``."""
    if abs(element) < 1e-12:
        raise TransitionNotDriven("transition not driven: zero coupling matrix element")
    return 1.0 / (2.0 * duration * abs(g_factor) * MU_B * abs(element))


def peak_amplitude_bound_residuals(pulse: FourierPulse, b_max: float) -> np.ndarray:
    """Per-term ``amplitude - b_max``; all entries <= 0 means the bound holds."""
    return pulse.term_amplitudes() - b_max


def power_spectrum(pulse: FourierPulse) -> tuple[np.ndarray, np.ndarray]:
    """Return (frequencies in GHz, power) with power summing to the integral of f^2.

    Frequency 0 carries u_0^2, mode k carries 2 (u_2k^2 + u_2k-1^2).
    """
    u = pulse.coefficients
    freqs = np.arange(pulse.n_modes + 1) / pulse.t_f
    power = np.empty(pulse.n_modes + 1)
    power[0] = u[0] ** 2
    power[1:] = 2.0 * (u[1::2] ** 2 + u[2::2] ** 2)
    return freqs, power


def export_pulse(pulse: FourierPulse, path, n_samples: int = 2000) -> None:
    """Write the coefficient block and a uniform (t_ns, f_T) table."""
    buf = io.StringIO()
    buf.write("# spinqoc fourier pulse\n")
    buf.write(f"# t_f_ns = {float(pulse.t_f)!r}\n")
    buf.write(f"# n_modes = {pulse.n_modes}\n")
    buf.write(f"# constrained = {int(pulse.constrained)}\n")
    buf.write(f"# u0 = {float(pulse.coefficients[0])!r}\n")
    buf.write("# coefficients: k u_sin u_cos\n")
    for k in range(1, pulse.n_modes + 1):
        buf.write(f"# {k} {float(pulse.coefficients[2 * k - 1])!r} {float(pulse.coefficients[2 * k])!r}\n")
    buf.write("# samples: t_ns f_T\n")
    t = np.linspace(0.0, pulse.t_f, n_samples + 1)
    np.savetxt(buf, np.column_stack([t, pulse(t)]), fmt="%.12e")
    Path(path).write_text(buf.getvalue())


def load_pulse(path) -> FourierPulse:
    """Read a pulse written by :func:`export_pulse` (coefficients are authoritative)."""
    header = {}
    coeffs = {}
    for line in Path(path).read_text().splitlines():
        if not line.startswith("#"):
            continue
        body = line[1:].strip()
        if "=" in body:
            key, val = (s.strip() for s in body.split("=", 1))
            header[key] = val
            continue
        parts = body.split()
        if len(parts) == 3 and parts[0].isdigit():
            coeffs[int(parts[0])] = (float(parts[1]), float(parts[2]))
    K = int(header["n_modes"])
    u = np.zeros(2 * K + 1)
    u[0] = float(header["u0"])
    for k, (s, c) in coeffs.items():
        u[2 * k - 1] = s
        u[2 * k] = c
    # the stored coefficients already satisfy the constraints; re-imposing them
    # would perturb the last cosine by rounding, so load unconstrained first
    pulse = FourierPulse(float(header["t_f_ns"]), K, u, False)
    if int(header.get("constrained", "0")):
        object.__setattr__(pulse, "constrained", True)
    return pulse
