import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.optimize import minimize

from conftest import random_unitary, small_system
from spinqoc.qoct import (
    ControlProblem,
    OptimizationResult,
    _fidelity_and_gradient,
    amplitude_frontier,
    fidelity,
    free_to_full,
    full_to_free,
    gate_fidelity,
    gate_gradient,
    grad_full_to_free,
    minimal_amplitude,
    optimize,
    project_feasible,
    state_fidelity,
    state_gradient,
)
from spinqoc.targets import basis_state, level_flip


def fd_gradient(problem, u, eps=1e-6):
    g = np.empty_like(u)
    for m in range(u.size):
        e = np.zeros_like(u)
        e[m] = eps
        g[m] = (fidelity(problem, u + e) - fidelity(problem, u - e)) / (2 * eps)
    return g


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_gate_fidelity_bounds_and_basis_invariance(d, seed):
    rng = np.random.default_rng(seed)
    U, V, W = (random_unitary(d, rng) for _ in range(3))
    F = gate_fidelity(U, V)
    assert 0.0 <= F <= 1.0
    assert gate_fidelity(W @ U @ W.conj().T, W @ V @ W.conj().T) == pytest.approx(F, abs=1e-12)
    assert gate_fidelity(U, U) == pytest.approx(1.0)
    assert gate_fidelity(U, np.exp(0.3j) * U) == pytest.approx(1.0)


def test_state_fidelity():
    a = np.array([1, 1j]) / np.sqrt(2)
    assert state_fidelity(a, a) == pytest.approx(1.0)
    assert state_fidelity(np.array([1, -1j]) / np.sqrt(2), a) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        state_fidelity(a, np.ones(3) / np.sqrt(3))


def _problem(spin, t_f, K, gate, b_max=0.05, **kw):
    s = small_system(spin)
    if gate:
        target = level_flip(0, 1, s.dim)
        return ControlProblem(s, t_f, K, target, b_max, **kw)
    return ControlProblem(s, t_f, K, basis_state(1, s.dim), b_max, initial_state=0, **kw)


@pytest.mark.parametrize("spin", [0.5, 1.0, 3.5])
@pytest.mark.parametrize("gate", [True, False])
def test_gradient_matches_finite_differences(spin, gate):
    problem = _problem(spin, 1.0, 4, gate)
    rng = np.random.default_rng(int(2 * spin) + 10 * gate)
    u = rng.uniform(-1, 1, 9) * problem.coefficient_bound
    G, g = _fidelity_and_gradient(problem, u)
    g_fd = fd_gradient(problem, u)
    big = np.abs(g_fd) > 1e-10
    assert_allclose(g[big], g_fd[big], rtol=1e-5)
    assert 0 <= G <= 1


def test_gradient_wrappers_check_problem_kind():
    gp, sp = _problem(0.5, 1.0, 2, True), _problem(0.5, 1.0, 2, False)
    u = np.zeros(5)
    assert gate_gradient(gp, u).shape == (5,)
    assert state_gradient(sp, u).shape == (5,)
    with pytest.raises(ValueError):
        gate_gradient(sp, u)
    with pytest.raises(ValueError):
        state_gradient(gp, u)


def test_problem_validation():
    with pytest.raises(ValueError):
        _problem(0.5, 1.0, 2, True, b_max=0.0)
    with pytest.raises(ValueError):
        ControlProblem(small_system(0.5), 1.0, 2, basis_state(1, 2), 0.01)  # no initial state
    with pytest.raises(ValueError):
        ControlProblem(small_system(0.5), 1.0, 2, basis_state(1, 8), 0.01, initial_state=0)
    with pytest.warns(UserWarning, match="cutoff"):
        _problem(0.5, 1.0, 1, True)  # 1 GHz cutoff below the 1.4 GHz transition


def test_reparameterization_round_trip():
    rng = np.random.default_rng(0)
    K = 5
    x = rng.normal(size=2 * K - 1)
    u = free_to_full(x, K)
    assert u[0] == 0 and abs(u[2::2].sum()) < 1e-15
    assert_allclose(full_to_free(u, K), x)
    # chain rule: d/dx G(free_to_full(x)) for a linear G(u) = w.u
    w = rng.normal(size=2 * K + 1)
    J = np.array([free_to_full(e, K) for e in np.eye(2 * K - 1)]).T
    assert_allclose(grad_full_to_free(w, K), J.T @ w)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1), st.floats(0.1, 3.0))
def test_projection_is_nearest_feasible_point(K, seed, scale):
    rng = np.random.default_rng(seed)
    bound = 1.0
    x = scale * rng.normal(size=2 * K - 1)
    p = project_feasible(x, K, bound)
    assert np.all(np.abs(p) <= bound) and abs(p[K:].sum()) <= bound
    assert_allclose(project_feasible(p, K, bound), p, atol=1e-12)
    # oracle: generic constrained least squares
    cons = [{"type": "ineq", "fun": lambda z: bound - z[K:].sum()},
            {"type": "ineq", "fun": lambda z: bound + z[K:].sum()}]
    ref = minimize(lambda z: np.sum((z - x) ** 2), np.zeros_like(x), jac=lambda z: 2 * (z - x),
                   bounds=[(-bound, bound)] * x.size, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 500})
    assert np.sum((p - x) ** 2) <= ref.fun + 1e-8


def test_optimize_spin_half_flip():
    problem = _problem(0.5, 2.0, 4, True, b_max=0.05, seed=3)
    res = optimize(problem)
    assert res.converged and res.fidelity >= 0.99
    u = res.coefficients
    # constraints hold on the returned coefficients
    assert u[0] == 0 and abs(u[2::2].sum()) < 1e-10
    assert np.all(res.pulse.term_amplitudes() <= problem.b_max * (1 + 1e-12))
    best = [h["best_fidelity"] for h in res.history]
    assert np.all(np.diff(best) >= 0)
    assert res.fidelity == pytest.approx(fidelity(problem, u), abs=1e-12)
    # deterministic for a fixed seed
    again = optimize(_problem(0.5, 2.0, 4, True, b_max=0.05, seed=3))
    assert_allclose(again.coefficients, res.coefficients, rtol=0, atol=0)


def test_state_and_gate_optima_agree():
    # the flip gate maps |0> to |1>; its optimum is also a good 0 -> 1 transfer
    gate = optimize(_problem(0.5, 2.0, 4, True, b_max=0.05, seed=1))
    state_problem = _problem(0.5, 2.0, 4, False, b_max=0.05, seed=1)
    assert fidelity(state_problem, gate.coefficients) >= 0.99
    direct = optimize(state_problem)
    assert direct.fidelity >= 1 - 1e-7


def test_iteration_limit_is_reported_not_raised():
    problem = _problem(3.5, 1.0, 8, True, b_max=1e-4, max_iter=5, restarts=1)
    res = optimize(problem)
    assert not res.converged
    assert res.termination in ("max_iter", "stall", "line_search", "gradient")
    assert res.restarts_used == 1
    assert res.iterations <= 2 * 6


def test_result_serialization_round_trip():
    res = optimize(_problem(0.5, 2.0, 4, True, b_max=0.05))
    blob = json.loads(json.dumps(res.to_dict()))
    back = OptimizationResult.from_dict(blob)
    assert_allclose(back.coefficients, res.coefficients, rtol=0, atol=0)
    assert back.fidelity == res.fidelity and back.config_hash == res.config_hash
    assert blob["peak_amplitude_T"] == pytest.approx(res.pulse.peak_amplitude())


def test_config_hash_tracks_inputs():
    a = _problem(0.5, 2.0, 4, True)
    assert a.config_hash() == _problem(0.5, 2.0, 4, True).config_hash()
    assert a.config_hash() != _problem(0.5, 2.0, 4, True, seed=9).config_hash()


def _flip_problem(b, t_f=1.0, seed=0):
    return ControlProblem(small_system(0.5), t_f, 4, level_flip(0, 1, 2), b, max_iter=200, restarts=1, seed=seed)


def test_frontier_matches_grid_scan():
    # oracle: scan a b_max grid for the first bound at which the optimizer succeeds
    grid = np.linspace(0.004, 0.03, 14)
    ok = [optimize(_flip_problem(b)).converged for b in grid]
    first = grid[np.argmax(ok)]
    assert any(ok) and not ok[0]
    pt = minimal_amplitude(_flip_problem, b_high=0.03, rel_tol=0.02)
    assert pt.reached
    step = grid[1] - grid[0]
    assert first - step - 0.02 * 0.03 <= pt.min_b_max <= first + 0.02 * 0.03


def test_frontier_unreachable_is_reported():
    pt = minimal_amplitude(_flip_problem, b_high=1e-4)
    assert not pt.reached and np.isnan(pt.min_b_max) and pt.probes == 1
    with pytest.raises(ValueError):
        amplitude_frontier(level_flip(0, 1, 2), [], system=small_system(0.5))


def test_frontier_non_increasing_small_system():
    pts = amplitude_frontier(level_flip(0, 1, 2), [1.0, 2.0, 4.0], system=small_system(0.5), cutoff=4.0,
                             b_high=0.05, rel_tol=0.05, max_iter=200, restarts=1)
    b = [p.min_b_max for p in pts]
    assert all(p.reached for p in pts)
    assert b[0] >= b[1] >= b[2]
