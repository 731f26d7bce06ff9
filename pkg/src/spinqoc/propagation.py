"""Time evolution under H(t) = H0 + f(t) V.

Everything runs in the eigenbasis of H0, where the drift is a vector of
level energies (GHz) and the interaction-picture coupling is

    V~(t)_jk = V_jk exp(i 2 pi (E_j - E_k) t).

Each step of length h applies exp(-i 2 pi h f(t_mid) V~(t_mid)) (exponential
midpoint rule). Because V~(t) = D(t) V D(t)^+ with D diagonal, every step is
D Q diag(exp(-i 2 pi h f v)) Q^+ D^+ where V = Q diag(v) Q^+ is diagonalized
once, so no general matrix exponential is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STEPS_PER_PERIOD = 40
_CHUNK = 1 << 15


class StepSizeError(ValueError):
    """The time grid does not resolve the fastest frequency in the problem."""

    def __init__(self, required_steps: int, n_steps: int):
        self.required_steps = required_steps
        super().__init__(
            f"time grid with {n_steps} steps is too coarse; need n_steps >= {required_steps}"
        )


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``n_steps`` steps on ``[t0, t0 + duration]`` (ns)."""

    t_f: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.t_f > self.t0:
            raise ValueError("t_f must exceed t0")

    @property
    def duration(self) -> float:
        return self.t_f - self.t0

    @property
    def h(self) -> float:
        return self.duration / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_steps + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.t0 + self.h * (np.arange(self.n_steps) + 0.5)

    @classmethod
    def resolving(cls, t_f: float, nu_max: float, steps_per_period: int = STEPS_PER_PERIOD,
                  t0: float = 0.0) -> "TimeGrid":
        return cls(t_f, required_steps(t_f - t0, nu_max, steps_per_period), t0)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_f, self.n_steps * factor, self.t0)


def required_steps(duration: float, nu_max: float, steps_per_period: int = STEPS_PER_PERIOD) -> int:
    """Smallest N with h = duration / N <= 1 / (steps_per_period * nu_max)."""
    return max(1, int(np.ceil(duration * steps_per_period * nu_max * (1 - 1e-12))))


@dataclass
class EvolutionTrace:
    """Result of a propagation.

    ``final`` is U(t_f); ``unitaries`` (when stored) has shape
    ``(n_steps + 1, d, d)`` with ``unitaries[n] = U(t_n)``.
    """

    final: np.ndarray
    grid: TimeGrid
    frame: str = "interaction"
    unitaries: np.ndarray | None = None

    def max_unitarity_error(self) -> float:
        mats = self.unitaries if self.unitaries is not None else self.final[None]
        d = mats.shape[-1]
        err = np.conj(np.swapaxes(mats, -1, -2)) @ mats - np.eye(d)
        return float(np.abs(err).max())


def _as_energies(H0) -> np.ndarray:
    H0 = np.asarray(H0)
    if H0.ndim == 1:
        return H0.astype(float)
    off = H0 - np.diag(np.diag(H0))
    if np.abs(off).max() > 1e-12 * max(1.0, np.abs(H0).max()):
        raise ValueError("H0 must be diagonal here; rotate to its eigenbasis first")
    return np.real(np.diag(H0)).astype(float)


def interaction_coupling(H0, V: np.ndarray, t) -> np.ndarray:
    """Interaction-picture coupling exp(i 2pi H0 t) V exp(-i 2pi H0 t).

    ``H0`` is the drift in its eigenbasis (vector of energies or diagonal
    matrix). A scalar ``t`` gives a (d, d) matrix; an array gives (n, d, d).
    """
    E = _as_energies(H0)
    t = np.asarray(t, dtype=float)
    phase = np.exp(2j * np.pi * np.multiply.outer(t, E))
    return phase[..., :, None] * V * np.conj(phase[..., None, :])


class Dynamics:
    """Drift energies plus control operator, both in the drift eigenbasis.

    A non-diagonal ``H0`` is diagonalized on entry; ``V`` is rotated into the
    same basis, and :attr:`basis` holds the rotation so callers can map back.
    """

    def __init__(self, H0, V):
        H0 = np.asarray(H0)
        V = np.asarray(V, dtype=complex)
        self.basis = None
        if H0.ndim == 2 and np.abs(H0 - np.diag(np.diag(H0))).max() > 1e-12 * max(1.0, np.abs(H0).max()):
            E, W = np.linalg.eigh(H0)
            self.basis = W
            V = W.conj().T @ V @ W
            H0 = E
        self.energies = _as_energies(H0)
        self.V = 0.5 * (V + V.conj().T)
        self.dim = len(self.energies)
        v, Q = np.linalg.eigh(self.V)
        # one Newton-Schulz polar step: Q is reused for every step, so its
        # rounding-level non-unitarity would otherwise accumulate linearly in N
        Q = 0.5 * Q @ (3 * np.eye(self.dim) - Q.conj().T @ Q)
        self._v = v
        self._Q = Q

    @property
    def spread(self) -> float:
        """Largest |E_j - E_k| in GHz."""
        return float(self.energies.max() - self.energies.min())

    def nu_max(self, pulse) -> float:
        return max(self.spread, float(getattr(pulse, "max_frequency", 0.0)))

    def check_grid(self, pulse, grid: TimeGrid, steps_per_period: int = STEPS_PER_PERIOD) -> None:
        need = required_steps(grid.duration, self.nu_max(pulse), steps_per_period)
        if grid.n_steps < need:
            raise StepSizeError(need, grid.n_steps)

    def sample(self, pulse, grid: TimeGrid, lo: int = 0, hi: int | None = None) -> np.ndarray:
        """Pulse values at grid midpoints ``lo:hi``."""
        hi = grid.n_steps if hi is None else hi
        sampler = getattr(pulse, "sample_midpoints", None)
        if sampler is not None and grid.t0 == 0.0 and np.isclose(grid.t_f, pulse.t_f, rtol=1e-14, atol=0):
            return sampler(grid.n_steps)[lo:hi]
        return np.asarray(pulse(grid.midpoints[lo:hi]), dtype=float)

    def _rotating_basis(self, t: np.ndarray) -> np.ndarray:
        # rows of D(t) Q with D(t) = diag(exp(i 2pi E t))
        return np.exp(2j * np.pi * np.outer(t, self.energies))[:, :, None] * self._Q[None]

    def step_unitaries(self, f_mid: np.ndarray, t_mid: np.ndarray, h: float) -> np.ndarray:
        """Interaction-picture step propagators, shape (n, d, d)."""
        M = self._rotating_basis(t_mid)
        ph = np.exp(-2j * np.pi * h * np.outer(f_mid, self._v))
        steps = (M * ph[:, None, :]) @ np.conj(np.swapaxes(M, 1, 2))
        steps[f_mid == 0.0] = np.eye(self.dim)
        return steps

    def lab_step_unitaries(self, f_mid: np.ndarray, h: float) -> np.ndarray:
        """Lab-frame steps by symmetric drift/kick/drift splitting."""
        half = np.exp(-1j * np.pi * h * self.energies)
        kick = (self._Q[None] * np.exp(-2j * np.pi * h * np.outer(f_mid, self._v))[:, None, :]) @ self._Q.conj().T
        return half[None, :, None] * kick * half[None, None, :]

    def all_steps(self, pulse, grid: TimeGrid) -> np.ndarray:
        f = self.sample(pulse, grid)
        return self.step_unitaries(f, grid.midpoints, grid.h)


def ordered_product(steps: np.ndarray) -> np.ndarray:
    """steps[n-1] @ ... @ steps[0] via pairwise reduction."""
    d = steps.shape[-1]
    prod = steps
    while prod.shape[0] > 1:
        if prod.shape[0] % 2:
            prod = np.concatenate([prod, np.eye(d, dtype=prod.dtype)[None]])
        prod = prod[1::2] @ prod[0::2]
    return prod[0]


def cumulative_products(steps: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Return P with P[0] = start and P[n+1] = steps[n] @ P[n].

    ``start`` may be (d, d) or (d, m). Blocked scan: sqrt(N)-sized blocks are
    scanned in parallel, then the block totals are chained, so only
    O(sqrt(N)) Python-level iterations run.
    """
    N, d = steps.shape[0], steps.shape[-1]
    start = np.asarray(start, dtype=complex)
    out = np.empty((N + 1,) + start.shape, dtype=complex)
    out[0] = start
    if N == 0:
        return out
    b = max(1, int(np.sqrt(N)))
    nb = -(-N // b)
    pad = nb * b - N
    S = steps if not pad else np.concatenate([steps, np.broadcast_to(np.eye(d), (pad, d, d))])
    S = S.reshape(nb, b, d, d)
    Q = np.empty_like(S)
    Q[:, 0] = S[:, 0]
    for j in range(1, b):
        Q[:, j] = S[:, j] @ Q[:, j - 1]
    C = np.empty((nb,) + start.shape, dtype=complex)
    C[0] = start
    for i in range(1, nb):
        C[i] = Q[i - 1, -1] @ C[i - 1]
    out[1:] = (Q @ C[:, None]).reshape((-1,) + start.shape)[:N]
    return out


def backward_products(steps: np.ndarray, final: np.ndarray) -> np.ndarray:
    """Return B with B[N] = final and B[n] = steps[n]^+ @ B[n+1]."""
    adj = np.conj(np.swapaxes(steps[::-1], 1, 2))
    return cumulative_products(adj, final)[::-1]


def _frame_in(dyn: Dynamics, M):
    return M if dyn.basis is None else dyn.basis.conj().T @ M @ dyn.basis


def _frame_out(dyn: Dynamics, M):
    if dyn.basis is None:
        return M
    return dyn.basis @ M @ dyn.basis.conj().T


def propagate_unitary(H0, V, pulse, grid: TimeGrid, frame: str = "interaction", store: bool = False,
                      validate: bool = True) -> EvolutionTrace:
    """Evolution operator from ``grid.t0`` to ``grid.t_f``.

    ``frame="interaction"`` integrates i dU/dt = f(t) V~(t) U;
    ``frame="lab"`` integrates the full H0 + f V with a split-step scheme and
    satisfies U_lab = exp(-i 2pi H0 t_f) U_int exp(i 2pi H0 t0).
    """
    if frame not in ("interaction", "lab"):
        raise ValueError(f"unknown frame {frame!r}")
    dyn = H0 if isinstance(H0, Dynamics) else Dynamics(H0, V)
    if validate:
        dyn.check_grid(pulse, grid)
    d = dyn.dim
    eye = np.eye(d, dtype=complex)
    N = grid.n_steps
    h = grid.h
    mids = grid.midpoints

    def chunk_steps(lo, hi):
        f = dyn.sample(pulse, grid, lo, hi)
        if frame == "interaction":
            return dyn.step_unitaries(f, mids[lo:hi], h)
        return dyn.lab_step_unitaries(f, h)

    if store:
        steps = chunk_steps(0, N)
        mats = cumulative_products(steps, eye)
        if dyn.basis is not None:
            mats = dyn.basis @ mats @ dyn.basis.conj().T
        return EvolutionTrace(mats[-1].copy(), grid, frame, mats)

    U = eye
    for lo in range(0, N, _CHUNK):
        U = ordered_product(chunk_steps(lo, min(N, lo + _CHUNK))) @ U
    return EvolutionTrace(_frame_out(dyn, U), grid, frame)


def propagate_state(H0, V, pulse, grid: TimeGrid, psi0, frame: str = "interaction",
                    validate: bool = True) -> np.ndarray:
    """Propagate a single normalized state vector step by step."""
    psi = np.array(psi0, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    dyn = H0 if isinstance(H0, Dynamics) else Dynamics(H0, V)
    if validate:
        dyn.check_grid(pulse, grid)
    psi = _frame_in(dyn, psi[:, None])[:, 0] if dyn.basis is not None else psi
    N = grid.n_steps
    mids = grid.midpoints
    for lo in range(0, N, _CHUNK):
        hi = min(N, lo + _CHUNK)
        f = dyn.sample(pulse, grid, lo, hi)
        steps = (dyn.step_unitaries(f, mids[lo:hi], grid.h) if frame == "interaction"
                 else dyn.lab_step_unitaries(f, grid.h))
        for S in steps:
            psi = S @ psi
    if dyn.basis is not None:
        psi = dyn.basis @ psi
    return psi


def frobenius(A: np.ndarray, B: np.ndarray) -> complex:
    """Normalized Frobenius product Tr(A^+ B) / d (batched over leading axes)."""
    d = A.shape[-1]
    return np.sum(np.conj(A) * B, axis=(-2, -1)) / d


@dataclass
class CostateTrace:
    """Costate B(t_n) at every grid node, shape (n_steps + 1, d, d)."""

    costates: np.ndarray
    grid: TimeGrid

    @property
    def final(self) -> np.ndarray:
        return self.costates[-1]


def propagate_costate(H0, V, pulse, grid: TimeGrid, U_target: np.ndarray, forward: EvolutionTrace,
                      validate: bool = True) -> CostateTrace:
    """Backward-propagate the costate from B(t_f) = (U_target . U(t_f)) U_target.

    The costate obeys the same equation of motion as U, integrated from the
    final time towards t0 with the same step propagators.
    """
    if forward.grid != grid:
        raise ValueError("forward trace was computed on a different time grid")
    if forward.frame != "interaction":
        raise ValueError("costate propagation needs an interaction-picture forward trace")
    dyn = H0 if isinstance(H0, Dynamics) else Dynamics(H0, V)
    if validate:
        dyn.check_grid(pulse, grid)
    U_f = _frame_in(dyn, forward.final)
    Ut = _frame_in(dyn, np.asarray(U_target, dtype=complex))
    B_f = frobenius(Ut, U_f) * Ut
    B = backward_products(dyn.all_steps(pulse, grid), B_f)
    if dyn.basis is not None:
        B = dyn.basis @ B @ dyn.basis.conj().T
    return CostateTrace(B, grid)
