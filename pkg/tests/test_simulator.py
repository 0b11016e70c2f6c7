import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from slepian_qns.dpss import DpssParams, compute_dpss
from slepian_qns.errors import GridMismatch, ProbabilityRange, ValidationError
from slepian_qns.noise import NoiseRealization, gaussian_bump, realize, realize_ensemble, white
from slepian_qns.simulator import (
    compare_bias,
    error_vector_moments,
    exact_quaternions,
    expected_tomography,
    first_order_error_vector,
    first_order_vectors,
    higher_order_diagnostic,
    propagate_exact,
    quaternion_to_unitary,
    signal_projections,
    tomography,
)
from slepian_qns.waveforms import Waveform, fd_waveform, rotation_angle

KHZ = 2 * np.pi * 1e3
SX = np.array([[0, 1], [1, 0]], complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0 + 0j, -1.0])


def expm_oracle(w, bz, bo, steps=4000):
    """Time-ordered product of matrix exponentials on a fine midpoint grid."""
    theta = rotation_angle(w)
    edges = np.linspace(0, w.tau, steps + 1)
    U = np.eye(2, dtype=complex)
    for a, b in zip(edges[:-1], edges[1:]):
        t = 0.5 * (a + b)
        om = w.values[min(np.searchsorted(w.edges, t, side="right") - 1, w.n_segments - 1)]
        th = theta(t)
        H = (np.cos(th) * SZ + np.sin(th) * SY) * bz(t) + om * bo(t) * SX / 2
        U = linalg.expm(-1j * H * (b - a)) @ U
    return U


def test_exact_propagator_matches_expm_oracle():
    w = Waveform([3.0, -1.0, 2.0, 0.5], [0.3, 0.2, 0.4, 0.1])
    bz = realize(white(0.5, 8.0), d_omega=0.4, seed=2)
    bo = realize(white(0.3, 8.0), d_omega=0.4, seed=3, component="omega")
    U = propagate_exact(w, bz, bo, substeps=400)
    ref = expm_oracle(w, bz, bo)
    assert np.allclose(U, ref, atol=2e-5)
    assert np.allclose(U @ U.conj().T, np.eye(2), atol=1e-12) and np.isclose(np.linalg.det(U), 1)


def test_static_dephasing_without_control():
    w = Waveform([0.0], [2.0])
    beta = NoiseRealization.from_samples([0.0, 2.0], [0.3, 0.3])
    q = exact_quaternions(w, [beta])[0]
    assert np.allclose(q, [np.cos(0.6), 0, 0, np.sin(0.6)])
    assert np.allclose(quaternion_to_unitary(q), linalg.expm(-1j * 0.6 * SZ))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), level=st.floats(1e-3, 1.0))
def test_quaternions_are_unit(seed, level):
    w = Waveform([5.0, -5.0], [0.5, 0.5])
    ens = realize_ensemble(white(level, 20.0), 4, 0.5, seed)
    q = exact_quaternions(w, ens)
    assert np.allclose(np.sum(q**2, axis=1), 1.0)


def test_weak_noise_error_vector_is_first_order():
    s = compute_dpss(DpssParams(64, 3 / 64, 0))
    w = fd_waveform(s, 0, 20 * KHZ, 5e-6, "max_theta", 0.05)
    ens = realize_ensemble(gaussian_bump(20 * KHZ, 3 * KHZ, 1e-3, omega_c=60 * KHZ), 16, 2 * np.pi / (4 * w.tau), 1)
    a = first_order_vectors(w, ens)
    q = exact_quaternions(w, ens)
    assert np.max(np.abs(a)) < 1e-2
    assert np.allclose(q[:, 1:], a, atol=10 * np.max(np.abs(a)) ** 2)


def test_exact_and_quadrature_error_vectors_agree():
    w = Waveform([40.0, -20.0, 10.0], [0.02, 0.03, 0.05])
    ez = realize_ensemble(white(1.0, 300.0), 6, 5.0, 1)
    eo = realize_ensemble(white(1.0, 300.0), 6, 5.0, 2, component="omega")
    a = first_order_vectors(w, ez, eo)
    b = first_order_vectors(w, ez, eo, method="quadrature", substeps=2000)
    assert np.allclose(a, b, atol=1e-6 * np.abs(a).max())
    assert first_order_error_vector(w) == (0.0, 0.0, 0.0)
    assert np.allclose(first_order_error_vector(w, ez.realization(2), eo.realization(2)), a[2])


def test_expected_tomography_agrees_with_monte_carlo():
    s = compute_dpss(DpssParams(100, 2 / 100, 0))
    w = fd_waveform(s, 0, 10 * KHZ, 1e-5, "max_theta", 0.2)
    spec = gaussian_bump(10 * KHZ, 1.5 * KHZ, 2.0, omega_c=30 * KHZ)
    ens = realize_ensemble(spec, 800, 2 * np.pi / (4 * w.tau), 3)
    mc = tomography(w, ens, mode="first_order")
    ex = expected_tomography(w, spec)
    assert np.all(np.abs(mc.P - ex.P) <= 4 * mc.stderr + 1e-12)
    m = mc.moments
    assert np.all(np.abs(m.mean_sq - ex.moments.mean_sq) <= 4 * m.stderr + 1e-15)


def test_noiseless_and_readout():
    w = Waveform([1.0], [1.0])
    clean = tomography(w)
    assert np.allclose(clean.P, 1.0)
    noisy = expected_tomography(w, white(0.01, 5.0), shots=10**9, fidelity=0.99, seed=3)
    ideal = expected_tomography(w, white(0.01, 5.0))
    assert noisy.readout and not ideal.readout
    assert np.allclose(signal_projections(noisy).as_array(), signal_projections(ideal).as_array(), atol=1e-4)
    again = expected_tomography(w, white(0.01, 5.0), shots=10**9, fidelity=0.99, seed=3)
    assert np.array_equal(noisy.counts, again.counts)
    with pytest.raises(ValidationError):
        expected_tomography(w, white(0.01, 5.0), shots=0)
    with pytest.raises(ValidationError):
        expected_tomography(w, white(0.01, 5.0), shots=10, fidelity=0.4)


def test_projection_identities():
    w = Waveform([1.0, -1.0], [0.5, 0.5])
    rec = expected_tomography(w, white(0.02, 20.0), white(0.02, 20.0))
    p = signal_projections(rec)
    assert np.allclose(p.as_array(), rec.moments.mean_sq)


def test_errors():
    w = Waveform([1.0], [1.0])
    with pytest.raises(ProbabilityRange):
        tomography(w, realize_ensemble(white(100.0, 50.0), 3, 1.0), mode="first_order")
    with pytest.raises(ValidationError):
        tomography(w, realize_ensemble(white(1.0, 5.0), 3, 1.0), mode="bogus")
    with pytest.raises(ValidationError):
        first_order_vectors(w, realize_ensemble(white(1.0, 5.0), 3, 1.0), realize_ensemble(white(1.0, 5.0), 4, 1.0))
    with pytest.raises(GridMismatch):
        exact_quaternions(w, NoiseRealization.from_samples([0.0, 0.5], [0.1, 0.1]))
    d = higher_order_diagnostic(w, realize_ensemble(white(0.1, 5.0), 3, 1.0))
    with pytest.raises(ValidationError):
        compare_bias(d, higher_order_diagnostic(w, realize_ensemble(white(0.1, 5.0), 4, 1.0)))


def test_bias_diagnostic_is_small_for_weak_noise():
    w = Waveform([2.0], [1.0])
    ens = realize_ensemble(white(1e-4, 5.0), 50, 0.2, 1)
    d = higher_order_diagnostic(w, ens)
    assert np.mean(d.first_order) > 0 and abs(d.bias) < 1e-3
    m = error_vector_moments(first_order_vectors(w, ens))
    assert m.count == 50 and m.mean_sq.shape == (3,)
