"""Giant-spin model: spin matrices, drift Hamiltonian, control coupling.

All energies are ordinary frequencies in GHz; the propagators convert to
angular frequency. Magnetic fields are in tesla.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Bohr magneton over Planck's constant, GHz / T.
MU_B = 13.9962449


@dataclass(frozen=True)
class SpinSystem:
    """Physical parameters of a single giant spin.

    Attributes
    ----------
    spin : float
        Spin quantum number S (integer or half-integer).
    g_factor : float
        Isotropic g factor.
    zfs_d, zfs_e : float
        Axial and rhombic anisotropy constants, MHz.
    static_field : tuple of float
        Static field vector B, tesla.
    drive_direction : tuple of float
        Unit vector along which the control field points.
    """

    spin: float
    g_factor: float = 2.0
    zfs_d: float = 0.0
    zfs_e: float = 0.0
    static_field: tuple[float, float, float] = (0.0, 0.0, 0.0)
    drive_direction: tuple[float, float, float] = (0.0, 1.0, 0.0)

    def __post_init__(self):
        _check_spin(self.spin)
        b = np.asarray(self.drive_direction, dtype=float)
        B = np.asarray(self.static_field, dtype=float)
        if b.shape != (3,) or B.shape != (3,):
            raise ValueError("static_field and drive_direction must be 3-vectors")
        if abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise ValueError(f"drive_direction must be a unit vector, |b| = {np.linalg.norm(b)!r}")
        object.__setattr__(self, "static_field", tuple(float(x) for x in B))
        object.__setattr__(self, "drive_direction", tuple(float(x) for x in b))

    @property
    def dim(self) -> int:
        return int(round(2 * self.spin + 1))

    @classmethod
    def from_config(cls, block: dict) -> "SpinSystem":
        """Build from a config mapping with keys spin, g, D_MHz, E_MHz, B_T, b_dir."""
        allowed = {"spin", "g", "D_MHz", "E_MHz", "B_T", "b_dir"}
        unknown = set(block) - allowed
        if unknown:
            raise ValueError(f"unknown system keys: {sorted(unknown)}")
        if "spin" not in block:
            raise ValueError("system block needs 'spin'")
        return cls(
            spin=float(block["spin"]),
            g_factor=float(block.get("g", 2.0)),
            zfs_d=float(block.get("D_MHz", 0.0)),
            zfs_e=float(block.get("E_MHz", 0.0)),
            static_field=tuple(block.get("B_T", (0.0, 0.0, 0.0))),
            drive_direction=tuple(block.get("b_dir", (0.0, 1.0, 0.0))),
        )

    def to_config(self) -> dict:
        return {
            "spin": self.spin,
            "g": self.g_factor,
            "D_MHz": self.zfs_d,
            "E_MHz": self.zfs_e,
            "B_T": list(self.static_field),
            "b_dir": list(self.drive_direction),
        }


def gdw30() -> SpinSystem:
    """The Gd(III) polyoxometalate qudit: S=7/2, B = 0.15 T along x, drive along y."""
    return SpinSystem(
        spin=3.5,
        g_factor=2.0,
        zfs_d=1281.0,
        zfs_e=294.0,
        static_field=(0.15, 0.0, 0.0),
        drive_direction=(0.0, 1.0, 0.0),
    )


@dataclass(frozen=True)
class SpectralData:
    """Eigen-decomposition of the drift Hamiltonian.

    ``eigenvectors[:, j]`` is level ``|j>``; levels are in ascending energy.
    ``transition_frequencies[j, k] = E_k - E_j`` (GHz) and
    ``transition_elements[j, k] = <j| b.S |k>``.
    """

    energies: np.ndarray
    eigenvectors: np.ndarray
    transition_frequencies: np.ndarray
    transition_elements: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def adjacent_frequencies(self) -> np.ndarray:
        return np.diff(self.energies)

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        W = self.eigenvectors
        return W.conj().T @ op @ W


def _check_spin(S: float) -> None:
    two_s = 2 * S
    if abs(two_s - round(two_s)) > 1e-12 or round(two_s) < 1:
        raise ValueError(f"spin must be a positive integer or half-integer, got {S!r}")


def spin_operators(S: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (Sx, Sy, Sz) in the |S, m> basis ordered m = S, S-1, ..., -S."""
    _check_spin(S)
    d = int(round(2 * S + 1))
    m = S - np.arange(d)
    # <m+1| S+ |m> on the superdiagonal
    raise_ = np.diag(np.sqrt(S * (S + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    lower = raise_.conj().T
    Sx = 0.5 * (raise_ + lower)
    Sy = -0.5j * (raise_ - lower)
    Sz = np.diag(m).astype(complex)
    return Sx, Sy, Sz


def _field_dot_spin(vec, ops) -> np.ndarray:
    return sum(c * op for c, op in zip(vec, ops))


def build_drift_hamiltonian(system: SpinSystem) -> np.ndarray:
    """Zero-field splitting plus static Zeeman term, in GHz.

    H0 = D [Sz^2 - S(S+1)/3] + E (Sx^2 - Sy^2) - g mu_B B.S
    """
    S = system.spin
    Sx, Sy, Sz = spin_operators(S)
    d = system.dim
    D = system.zfs_d * 1e-3
    E = system.zfs_e * 1e-3
    H = D * (Sz @ Sz - S * (S + 1) / 3 * np.eye(d)) + E * (Sx @ Sx - Sy @ Sy)
    H = H - system.g_factor * MU_B * _field_dot_spin(system.static_field, (Sx, Sy, Sz))
    return 0.5 * (H + H.conj().T)


def coupling_operator(system: SpinSystem) -> np.ndarray:
    """Control operator V = -g mu_B b.S, GHz per tesla of drive amplitude."""
    ops = spin_operators(system.spin)
    return -system.g_factor * MU_B * _field_dot_spin(system.drive_direction, ops)


def diagonalize(H0: np.ndarray, coupling: np.ndarray | None = None) -> SpectralData:
    """Diagonalize a Hermitian drift Hamiltonian.

    Each eigenvector is rephased so that its largest-magnitude component is
    real and positive (ties go to the lowest index), which makes the basis
    reproducible. ``coupling`` is the b.S operator whose matrix elements are
    reported; when omitted, ``transition_elements`` is zero.
    """
    H0 = np.asarray(H0)
    if H0.ndim != 2 or H0.shape[0] != H0.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H0.shape}")
    scale = max(np.abs(H0).max(), 1.0)
    if np.abs(H0 - H0.conj().T).max() > 1e-12 * scale:
        raise ValueError("drift Hamiltonian is not Hermitian")
    energies, W = np.linalg.eigh(H0)
    W = W.astype(complex)
    for j in range(W.shape[1]):
        col = W[:, j]
        mags = np.abs(col)
        i = int(np.argmax(mags >= mags.max() * (1 - 1e-9)))
        W[:, j] = col * (np.conj(col[i]) / mags[i])
    freqs = energies[None, :] - energies[:, None]
    if coupling is None:
        elements = np.zeros_like(W)
    else:
        elements = W.conj().T @ coupling @ W
        elements = 0.5 * (elements + elements.conj().T)
    return SpectralData(energies, W, freqs, elements)


def spectrum(system: SpinSystem) -> SpectralData:
    """Spectral data of ``system`` with transition elements of b.S."""
    ops = spin_operators(system.spin)
    return diagonalize(build_drift_hamiltonian(system), _field_dot_spin(system.drive_direction, ops))
