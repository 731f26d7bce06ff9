import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.integrate import quad

from spinqoc.pulse import (
    FourierPulse,
    MonochromaticPulse,
    PulseSequence,
    TransitionNotDriven,
    cutoff_modes,
    evaluate,
    export_pulse,
    load_pulse,
    peak_amplitude_bound_residuals,
    pi_pulse_amplitude,
    pi_pulse_duration,
    power_spectrum,
    rabi_angular_frequency,
)
from spinqoc.spin_model import MU_B


def random_pulse(t_f=3.0, K=5, seed=0, constrained=True):
    rng = np.random.default_rng(seed)
    return FourierPulse(t_f, K, rng.normal(size=2 * K + 1), constrained)


def test_monochromatic_window():
    p = MonochromaticPulse(amplitude=2e-3, frequency=1.5, phase=0.3, t_start=1.0, t_end=3.0)
    t = np.array([0.5, 1.0, 2.0, 3.0, 3.5])
    expected = 2e-3 * np.cos(2 * np.pi * 1.5 * t + 0.3) * np.array([0, 1, 1, 1, 0])  # closed window
    assert_allclose(p(t), expected)
    assert p.duration == 2.0 and p.max_frequency == 1.5
    assert evaluate(p, 2.0) == pytest.approx(expected[2])


def test_pulse_sequence_contiguous():
    a = MonochromaticPulse(1.0, 1.0, 0.0, 0.0, 1.0)
    b = MonochromaticPulse(2.0, 3.0, 0.0, 1.0, 2.5)
    seq = PulseSequence((a, b))
    assert seq.t_start == 0.0 and seq.t_end == 2.5 and seq.max_frequency == 3.0
    t = np.array([0.25, 1.0, 2.0])
    assert_allclose(seq(t), [a(0.25), b(1.0), b(2.0)])
    with pytest.raises(ValueError):
        PulseSequence((a, MonochromaticPulse(1.0, 1.0, 0.0, 1.5, 2.0)))


def test_basis_gram_matrix():
    # orthogonal on [0, t_f]; the constant has unit norm, the sin/cos terms norm^2 = 2
    t_f, K = 2.0, 4
    p = FourierPulse.zeros(t_f, K, constrained=False)
    G = np.empty((2 * K + 1, 2 * K + 1))
    for i in range(2 * K + 1):
        for j in range(i, 2 * K + 1):
            G[i, j] = G[j, i] = quad(lambda t: p.basis(t)[i, 0] * p.basis(t)[j, 0], 0, t_f, limit=200)[0]
    assert_allclose(G, np.diag([1.0] + [2.0] * (2 * K)), atol=1e-10)


def test_constrained_pulse_vanishes_at_ends_and_has_zero_mean():
    p = random_pulse()
    assert p.coefficients[0] == 0.0
    assert abs(p.cosines.sum()) < 1e-12
    assert abs(p(0.0)) < 1e-12 and abs(p(p.t_f)) < 1e-12
    assert abs(quad(p, 0, p.t_f, limit=200)[0]) < 1e-10
    with pytest.raises(ValueError):
        p.coefficients[1] = 1.0  # read-only


def test_shape_validation():
    with pytest.raises(ValueError):
        FourierPulse(1.0, 3, np.zeros(5))
    with pytest.raises(ValueError):
        FourierPulse(-1.0, 1, np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 40.0), st.floats(0.5, 10.0))
def test_cutoff_modes_is_floor(t_f, cutoff):
    K = cutoff_modes(t_f, cutoff)
    assert K / t_f <= cutoff * (1 + 1e-12)
    assert (K + 1) / t_f > cutoff


def test_cutoff_examples():
    assert cutoff_modes(10.0, 8.0) == 80
    assert cutoff_modes(10.82, 8.0) == 86
    p = FourierPulse.from_cutoff(10.0, 8.0)
    assert p.n_modes == 80 and p.max_frequency == 8.0
    assert_allclose(p.frequencies[:3], [0.1, 0.2, 0.3])


def test_sample_midpoints_matches_direct_evaluation():
    p = random_pulse(t_f=2.5, K=7, constrained=False)
    N = 64
    t = (np.arange(N) + 0.5) * p.t_f / N
    assert_allclose(p.sample_midpoints(N), p(t), atol=1e-12)
    with pytest.raises(ValueError):
        p.sample_midpoints(7)


def test_project_midpoints_is_transpose():
    p = random_pulse(t_f=2.5, K=7)
    N = 50
    rng = np.random.default_rng(1)
    w = rng.normal(size=N)
    t = (np.arange(N) + 0.5) * p.t_f / N
    A = p.basis(t)  # (2K+1, N)
    assert_allclose(p.project_midpoints(w), A @ w, atol=1e-12)


def test_parseval():
    p = random_pulse(t_f=1.7, K=6, constrained=False)
    freqs, power = power_spectrum(p)
    energy = quad(lambda t: p(t) ** 2, 0, p.t_f, limit=400)[0]
    assert_allclose(power.sum(), energy, rtol=1e-10)
    assert_allclose(freqs, np.arange(7) / 1.7)


def test_term_amplitudes_and_bound():
    p = FourierPulse(4.0, 2, [0.0, 0.1, -0.2, 0.05, 0.2], constrained=True)
    assert_allclose(p.term_amplitudes(), 2 * np.abs(p.coefficients) / 2.0)
    res = peak_amplitude_bound_residuals(p, 0.2)
    assert np.all(res <= 0) and res.max() == pytest.approx(0.0)
    # the summed waveform can exceed the per-term bound, but never the sum of terms
    assert p.peak_amplitude() <= p.term_amplitudes().sum() + 1e-12


def test_rabi_and_pi_duration():
    lam, mu, g = 1e-3, 0.8 + 0.6j, 2.0
    w = rabi_angular_frequency(lam, mu, g)
    assert w == pytest.approx(2 * np.pi * lam * g * MU_B * 1.0)
    t_pi = pi_pulse_duration(lam, mu, g)
    assert w * t_pi == pytest.approx(np.pi)
    assert pi_pulse_amplitude(t_pi, mu, g) == pytest.approx(lam)
    # halving the amplitude doubles the time
    assert pi_pulse_duration(lam / 2, mu, g) == pytest.approx(2 * t_pi)


def test_zero_element_not_driven():
    with pytest.raises(TransitionNotDriven):
        pi_pulse_duration(1e-3, 0.0, 2.0)
    with pytest.raises(TransitionNotDriven):
        pi_pulse_amplitude(1.0, 1e-15, 2.0)
    with pytest.raises(ValueError):
        pi_pulse_duration(0.0, 1.0, 2.0)


def test_export_round_trip(tmp_path):
    p = random_pulse(t_f=10.82, K=86, seed=3)
    path = tmp_path / "pulse.txt"
    export_pulse(p, path, n_samples=500)
    q = load_pulse(path)
    assert q.t_f == p.t_f and q.n_modes == p.n_modes and q.constrained
    assert_array_equal(q.coefficients, p.coefficients)
    table = np.loadtxt(path)
    assert table.shape == (501, 2)
    assert_allclose(table[:, 1], p(table[:, 0]), rtol=1e-11, atol=1e-14)
