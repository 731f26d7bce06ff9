"""Fidelity functionals, adjoint gradients and constrained pulse optimization.

The decision vector is the coefficient vector ``u`` of a constrained
:class:`~spinqoc.pulse.FourierPulse`. The optimizer works on the free
coordinates ``x = (u_1, u_3, ..., u_2K-1, u_2, u_4, ..., u_2K-2)``: ``u_0`` is
pinned to zero and ``u_2K`` is minus the sum of the other cosines, so both
linear equalities hold at every iterate. The per-term amplitude bound
``|2 u_m / sqrt(T)| <= b_max`` becomes a box on ``x`` plus a slab
``|sum of free cosines| <= b_max sqrt(T) / 2``; projection onto that set is
exact and cheap.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .propagation import (
    STEPS_PER_PERIOD,
    Dynamics,
    TimeGrid,
    backward_products,
    cumulative_products,
    frobenius,
    interaction_coupling,
    required_steps,
)
from .pulse import FourierPulse, cutoff_modes
from .spin_model import SpinSystem, coupling_operator, spectrum
from .targets import GateTarget, StateTarget, basis_state

log = logging.getLogger(__name__)

GATE_THRESHOLD = 0.99
STATE_THRESHOLD = 1.0 - 1e-7


def gate_fidelity(U: np.ndarray, U_target: np.ndarray) -> float:
    """|Tr(U^+ U_target) / d|^2, insensitive to global phase."""
    U = np.asarray(U)
    U_target = np.asarray(U_target)
    if U.shape != U_target.shape or U.ndim != 2:
        raise ValueError(f"shape mismatch: {U.shape} vs {U_target.shape}")
    return float(min(1.0, abs(frobenius(U, U_target)) ** 2))


def state_fidelity(psi: np.ndarray, target: np.ndarray) -> float:
    """|<target|psi>|^2."""
    psi = np.asarray(psi)
    target = np.asarray(target)
    if psi.shape != target.shape:
        raise ValueError(f"shape mismatch: {psi.shape} vs {target.shape}")
    return float(min(1.0, abs(np.vdot(target, psi)) ** 2))


@dataclass
class ControlProblem:
    """A Fourier-pulse optimization on a fixed time grid.

    ``target`` is a :class:`GateTarget`, or a :class:`StateTarget` together
    with ``initial_state`` (a level index or an eigenbasis vector). Targets
    and states live in the eigenbasis of the drift Hamiltonian.
    """

    system: SpinSystem
    t_f: float
    n_modes: int
    target: GateTarget | StateTarget
    b_max: float
    initial_state: int | np.ndarray | None = None
    threshold: float | None = None
    max_iter: int = 1000
    seed: int = 0
    restarts: int = 5
    n_steps: int | None = None
    init: str = "random"
    init_scale: float = 0.05
    steps_per_period: int = STEPS_PER_PERIOD

    def __post_init__(self):
        if not self.b_max > 0:
            raise ValueError("b_max must be positive")
        if self.n_modes < 1:
            raise ValueError("need at least one Fourier mode")
        if self.init not in ("random", "resonant"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.is_state:
            if self.initial_state is None:
                raise ValueError("state problems need an initial state")
        if self.target.dim != self.system.dim:
            raise ValueError("target dimension does not match the spin system")
        if self.threshold is None:
            self.threshold = STATE_THRESHOLD if self.is_state else GATE_THRESHOLD
        top = max(self.targeted_frequencies(), default=0.0)
        if self.n_modes / self.t_f < top:
            warnings.warn(
                f"cutoff {self.n_modes / self.t_f:.3g} GHz is below targeted transition {top:.3g} GHz",
                stacklevel=2,
            )

    @classmethod
    def with_cutoff(cls, system, t_f, cutoff, target, b_max, **kw) -> "ControlProblem":
        """Same as the constructor with K derived from a cutoff in GHz."""
        return cls(system, t_f, cutoff_modes(t_f, cutoff), target, b_max, **kw)

    @property
    def is_state(self) -> bool:
        return isinstance(self.target, StateTarget)

    @cached_property
    def spectral(self):
        return spectrum(self.system)

    @cached_property
    def dynamics(self) -> Dynamics:
        V = self.spectral.to_eigenbasis(coupling_operator(self.system))
        return Dynamics(self.spectral.energies, V)

    @cached_property
    def grid(self) -> TimeGrid:
        nu = max(self.dynamics.spread, self.n_modes / self.t_f)
        need = required_steps(self.t_f, nu, self.steps_per_period)
        return TimeGrid(self.t_f, max(need, self.n_steps or 0))

    @cached_property
    def psi0(self) -> np.ndarray | None:
        if not self.is_state:
            return None
        if isinstance(self.initial_state, (int, np.integer)):
            return basis_state(int(self.initial_state), self.system.dim).vector
        v = np.asarray(self.initial_state, dtype=complex)
        if abs(np.linalg.norm(v) - 1) > 1e-10:
            raise ValueError("initial state must be normalized")
        return v

    @property
    def coefficient_bound(self) -> float:
        """Largest |u_m| allowed by the per-term amplitude bound."""
        return 0.5 * self.b_max * np.sqrt(self.t_f)

    def targeted_frequencies(self) -> list[float]:
        """Adjacent-level frequencies the target has to drive (GHz)."""
        E = self.spectral.energies
        if self.is_state:
            # levels with weight in the initial or target state
            psi0 = self.psi0
            levels = np.flatnonzero((np.abs(psi0) > 1e-12) | (np.abs(self.target.vector) > 1e-12))
        else:
            U = self.target.matrix
            levels = np.flatnonzero(np.abs(U - np.diag(np.diag(U))).sum(axis=0) > 1e-12)
            if levels.size == 0:
                levels = np.arange(len(E))
        lo, hi = int(levels.min()), int(levels.max())
        return [float(E[m + 1] - E[m]) for m in range(lo, hi)]

    def pulse(self, u=None) -> FourierPulse:
        if u is None:
            return FourierPulse.zeros(self.t_f, self.n_modes, constrained=True)
        return FourierPulse(self.t_f, self.n_modes, u, constrained=True)

    def config_dict(self) -> dict:
        return {
            "system": self.system.to_config(),
            "t_f_ns": self.t_f,
            "n_modes": self.n_modes,
            "target": self.target.label,
            "initial_state": (int(self.initial_state) if isinstance(self.initial_state, (int, np.integer))
                              else None),
            "b_max_T": self.b_max,
            "threshold": self.threshold,
            "max_iter": self.max_iter,
            "seed": self.seed,
            "restarts": self.restarts,
            "n_steps": self.grid.n_steps,
            "init": self.init,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.config_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# objective and gradient


def _fidelity_and_gradient(problem: ControlProblem, u: np.ndarray, need_grad: bool = True):
    """Fidelity G(u) and dG/du for the full coefficient vector.

    ``u`` is used as given; the equality constraints are not re-imposed, so
    every component is an independent variable here.
    """
    pulse = FourierPulse(problem.t_f, problem.n_modes, u, constrained=False)
    dyn = problem.dynamics
    grid = problem.grid
    f = dyn.sample(pulse, grid)
    steps = dyn.step_unitaries(f, grid.midpoints, grid.h)
    d = dyn.dim
    if problem.is_state:
        psi = cumulative_products(steps, problem.psi0[:, None])
        amp = np.vdot(problem.target.vector, psi[-1, :, 0])
        G = abs(amp) ** 2
        if not need_grad:
            return G, None
        chi = backward_products(steps, (amp * problem.target.vector)[:, None])
        Vt = interaction_coupling(dyn.energies, dyn.V, grid.midpoints)
        z = np.einsum("ni,nij,nj->n", np.conj(chi[1:, :, 0]), Vt, psi[1:, :, 0])
    else:
        Ut = problem.target.matrix
        U = cumulative_products(steps, np.eye(d))
        tau = frobenius(Ut, U[-1])
        G = abs(tau) ** 2
        if not need_grad:
            return G, None
        B = backward_products(steps, tau * Ut)
        Vt = interaction_coupling(dyn.energies, dyn.V, grid.midpoints)
        z = frobenius(B[1:], Vt @ U[1:])
    dG_df = 4 * np.pi * grid.h * z.imag
    return float(G), pulse.project_midpoints(dG_df)


def fidelity(problem: ControlProblem, u) -> float:
    return _fidelity_and_gradient(problem, np.asarray(u, dtype=float), need_grad=False)[0]


def gate_gradient(problem: ControlProblem, u) -> np.ndarray:
    """dG/du_m for a gate problem, exact for the discretized propagation."""
    if problem.is_state:
        raise ValueError("gate_gradient needs a gate target")
    return _fidelity_and_gradient(problem, np.asarray(u, dtype=float))[1]


def state_gradient(problem: ControlProblem, u) -> np.ndarray:
    """dG/du_m for a state-transfer problem."""
    if not problem.is_state:
        raise ValueError("state_gradient needs a state target")
    return _fidelity_and_gradient(problem, np.asarray(u, dtype=float))[1]


# ---------------------------------------------------------------------------
# constraint handling


def free_to_full(x: np.ndarray, n_modes: int) -> np.ndarray:
    K = n_modes
    u = np.zeros(2 * K + 1)
    u[1::2] = x[:K]
    u[2:2 * K:2] = x[K:]
    u[2 * K] = -x[K:].sum()
    return u


def full_to_free(u: np.ndarray, n_modes: int) -> np.ndarray:
    K = n_modes
    return np.concatenate([u[1::2], u[2:2 * K:2]])


def grad_full_to_free(g: np.ndarray, n_modes: int) -> np.ndarray:
    K = n_modes
    return np.concatenate([g[1::2], g[2:2 * K:2] - g[2 * K]])


def project_feasible(x: np.ndarray, n_modes: int, bound: float) -> np.ndarray:
    """Euclidean projection onto {|x_i| <= bound, |sum of cosine part| <= bound}."""
    K = n_modes
    out = np.clip(x, -bound, bound)
    y = x[K:]
    c = out[K:]
    total = c.sum()
    if abs(total) <= bound * (1 - 1e-14):
        return out
    sign = np.sign(total)
    target = sign * bound * (1 - 1e-14)
    # sum(clip(y - nu)) is non-increasing in nu; bisect for the target sum
    lo, hi = (0.0, sign * (np.abs(y).max() + bound))
    if sign < 0:
        lo, hi = hi, lo
    # invariant: sum at lo >= target >= sum at hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        s = np.clip(y - mid, -bound, bound).sum()
        if s >= target:
            lo = mid
        else:
            hi = mid
    nu = hi if sign > 0 else lo
    out[K:] = np.clip(y - nu, -bound, bound)
    return out


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizationResult:
    """Outcome of :func:`optimize`."""

    coefficients: np.ndarray
    fidelity: float
    history: list = field(default_factory=list)
    n_fev: int = 0
    n_gev: int = 0
    termination: str = ""
    restarts_used: int = 0
    seed: int = 0
    t_f: float = 0.0
    n_modes: int = 0
    b_max: float = 0.0
    n_steps: int = 0
    config_hash: str = ""

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def pulse(self) -> FourierPulse:
        return FourierPulse(self.t_f, self.n_modes, self.coefficients, constrained=True)

    @property
    def converged(self) -> bool:
        return self.termination == "threshold"

    def to_dict(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "termination": self.termination,
            "restarts_used": self.restarts_used,
            "n_fev": self.n_fev,
            "n_gev": self.n_gev,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "t_f_ns": self.t_f,
            "n_modes": self.n_modes,
            "b_max_T": self.b_max,
            "n_steps": self.n_steps,
            "peak_amplitude_T": self.pulse.peak_amplitude(),
            "coefficients": [float(c) for c in self.coefficients],
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizationResult":
        keys = ("fidelity", "termination", "restarts_used", "n_fev", "n_gev", "seed", "config_hash")
        return cls(
            coefficients=np.asarray(data["coefficients"], dtype=float),
            history=list(data.get("history", [])),
            t_f=data["t_f_ns"],
            n_modes=data["n_modes"],
            b_max=data["b_max_T"],
            n_steps=data["n_steps"],
            **{k: data[k] for k in keys},
        )


class _Counter:
    def __init__(self, problem: ControlProblem):
        self.problem = problem
        self.n_fev = 0
        self.n_gev = 0

    def __call__(self, x):
        """Infidelity and its gradient with respect to the free coordinates."""
        K = self.problem.n_modes
        G, g = _fidelity_and_gradient(self.problem, free_to_full(x, K))
        self.n_fev += 1
        self.n_gev += 1
        return 1.0 - G, -grad_full_to_free(g, K)


def _two_loop(g: np.ndarray, S: Sequence[np.ndarray], Y: Sequence[np.ndarray]) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    s, y = S[-1], Y[-1]
    q *= (s @ y) / (y @ y)
    for a, rho, s, y in reversed(alphas):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize_projected(fun: Callable, x0: np.ndarray, project: Callable, f_target: float,
                       max_iter: int, gtol: float = 1e-9, memory: int = 10,
                       initial_step: float = 1.0, stall_window: int = 100):
    """Projected limited-memory quasi-Newton descent with a projected-gradient fallback.

    Every trial point is projected onto the feasible set, and a step is
    accepted only under an Armijo decrease along the projection arc, so the
    objective is monotone and every iterate is feasible. When the
    quasi-Newton arc fails, a spectral (Barzilai-Borwein) projected gradient
    step is tried before giving up.

    Returns ``(x, f, history, reason)``.
    """
    x = project(np.asarray(x0, dtype=float))
    f, g = fun(x)
    S: deque = deque(maxlen=memory)
    Y: deque = deque(maxlen=memory)
    history = []
    bb = None
    reason = "max_iter"
    best_window = deque(maxlen=stall_window)
    for it in range(max_iter + 1):
        pg = project(x - g) - x
        pg_norm = float(np.linalg.norm(pg))
        history.append((float(f), pg_norm))
        best_window.append(f)
        if f <= f_target:
            reason = "threshold"
            break
        if pg_norm < gtol:
            reason = "gradient"
            break
        if it == max_iter:
            break
        if len(best_window) == stall_window and best_window[0] - f <= 1e-12 * max(f, 1e-300):
            reason = "stalled"
            break
        directions = []
        if S:
            directions.append(-_two_loop(g, S, Y))
        step0 = bb if bb is not None else initial_step / max(np.abs(g).max(), 1e-300)
        directions.append(-step0 * g)
        accepted = False
        for d in directions:
            t = 1.0
            for _ in range(30):
                xt = project(x + t * d)
                dx = xt - x
                slope = g @ dx
                if not slope < 0:
                    break
                ft, gt = fun(xt)
                if ft <= f + 1e-4 * slope:
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                break
        if not accepted:
            reason = "line_search"
            break
        s = xt - x
        y = gt - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            bb = float(np.clip((s @ s) / sy, 1e-12, 1e12))
        x, f, g = xt, ft, gt
    return x, f, history, reason


def initial_guess(problem: ControlProblem, rng: np.random.Generator) -> np.ndarray:
    """Starting free coordinates: uniform in +-init_scale of the box, optionally resonant."""
    K = problem.n_modes
    c = problem.coefficient_bound
    x = rng.uniform(-problem.init_scale, problem.init_scale, size=2 * K - 1) * c
    if problem.init == "resonant":
        for nu in problem.targeted_frequencies():
            k = int(np.clip(round(nu * problem.t_f), 1, K))
            x[k - 1] = 0.5 * c * rng.choice([-1.0, 1.0])
    return project_feasible(x, K, c)


def optimize(problem: ControlProblem, x0: np.ndarray | None = None) -> OptimizationResult:
    """Maximize the fidelity of ``problem`` under the pulse constraints.

    Runs up to ``1 + problem.restarts`` seeded starts, stopping as soon as
    one reaches ``problem.threshold``. Non-convergence is reported through
    ``termination``. ``x0`` overrides the first start (free coordinates).
    """
    K = problem.n_modes
    bound = problem.coefficient_bound
    counter = _Counter(problem)

    def project(x):
        return project_feasible(x, K, bound)

    best_x, best_f = None, np.inf
    history = []
    reason = ""
    used = 0
    for start in range(problem.restarts + 1):
        rng = np.random.default_rng([problem.seed, start])
        x_init = x0 if (start == 0 and x0 is not None) else initial_guess(problem, rng)
        x, f, hist, reason = minimize_projected(
            counter, x_init, project, f_target=1.0 - problem.threshold, max_iter=problem.max_iter,
            initial_step=0.1 * bound,
        )
        used = start
        for fval, gnorm in hist:
            if fval < best_f:
                best_f = fval
            history.append({
                "start": start,
                "fidelity": 1.0 - fval,
                "best_fidelity": 1.0 - best_f,
                "grad_norm": gnorm,
            })
        if best_x is None or f <= best_f:
            best_x = x
        log.debug("start %d: fidelity %.3e, %s", start, 1 - f, reason)
        if reason == "threshold":
            break
    u = free_to_full(best_x, K)
    return OptimizationResult(
        coefficients=u,
        fidelity=float(min(1.0, max(0.0, 1.0 - best_f))),
        history=history,
        n_fev=counter.n_fev,
        n_gev=counter.n_gev,
        termination=reason,
        restarts_used=used,
        seed=problem.seed,
        t_f=problem.t_f,
        n_modes=K,
        b_max=problem.b_max,
        n_steps=problem.grid.n_steps,
        config_hash=problem.config_hash(),
    )


# ---------------------------------------------------------------------------
# amplitude-time frontier


@dataclass
class FrontierPoint:
    t_f: float
    min_b_max: float
    probes: int
    reached: bool
    result: OptimizationResult | None = None


def minimal_amplitude(make_problem: Callable[[float], ControlProblem], b_high: float,
                      rel_tol: float = 0.05, b_low: float = 0.0) -> FrontierPoint:
    """Bisect on b_max for the smallest bound at which :func:`optimize` succeeds.

    ``make_problem(b_max)`` builds the probe problem. The returned bound is the
    lowest successful probe; the true threshold lies within ``rel_tol`` of it
    (relative to the returned value) below.
    """
    res = optimize(make_problem(b_high))
    probes = 1
    t_f = res.t_f
    if not res.converged:
        return FrontierPoint(t_f, float("nan"), probes, False, res)
    lo, hi, best = b_low, b_high, res
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        r = optimize(make_problem(mid))
        probes += 1
        if r.converged:
            hi, best = mid, r
        else:
            lo = mid
    return FrontierPoint(t_f, hi, probes, True, best)


def amplitude_frontier(gate: GateTarget, times: Sequence[float], threshold: float = GATE_THRESHOLD,
                       system: SpinSystem | None = None, cutoff: float = 8.0, b_high: float = 0.05,
                       rel_tol: float = 0.05, **problem_kw) -> list[FrontierPoint]:
    """Smallest per-term amplitude bound reaching ``threshold`` at each total time."""
    from .spin_model import gdw30

    if not times:
        raise ValueError("need at least one time point")
    system = system or gdw30()
    points = []
    for t_f in times:
        def make(b, t_f=t_f):
            return ControlProblem.with_cutoff(system, t_f, cutoff, gate, b, threshold=threshold, **problem_kw)
        points.append(minimal_amplitude(make, b_high, rel_tol))
    return points
