import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from slepian_qns.dpss import DpssParams, compute_dpss, evaluate_dpswf
from slepian_qns.errors import AmplitudeCap, InvalidN, Overlap, ScalingTooLarge, ValidationError
from slepian_qns.filters import passband, switching_ff
from slepian_qns.waveforms import (
    PulseSequence,
    Waveform,
    cosine_shift,
    cpmg,
    dpss_waveform,
    fd_theta_closed_form,
    fd_waveform,
    finite_difference,
    finite_difference_embedded_dd,
    pulsed_dpss,
    read_waveform,
    rotary_spin_echo,
    rotation_angle,
    scan_range,
    write_waveform,
)

KHZ = 2 * np.pi * 1e3
S64 = compute_dpss(DpssParams(64, 3 / 64, 2))


@settings(max_examples=40, deadline=None)
@given(values=st.lists(st.floats(-50, 50), min_size=2, max_size=40), dt=st.floats(1e-4, 1e-2))
def test_finite_difference_angle_tracks_base(values, dt):
    base = Waveform.uniform(values, dt)
    fd = finite_difference(base)
    theta = fd.theta_edges
    assert np.allclose(theta[1:], dt * base.values, atol=1e-9 * (1 + np.abs(base.values).max() * dt))
    t = np.linspace(0, fd.tau, 97)
    assert np.allclose(fd_theta_closed_form(base.values, dt, t), rotation_angle(fd)(t), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(values=st.lists(st.floats(-5, 5), min_size=1, max_size=20),
       durations=st.lists(st.floats(0.01, 2.0), min_size=20, max_size=20))
def test_squared_angle_integral_is_exact(values, durations):
    w = Waveform(values, durations[: len(values)])
    theta = rotation_angle(w)
    ref = sum(integrate.quad(lambda t: theta(t) ** 2, a, b)[0] for a, b in zip(w.edges[:-1], w.edges[1:]))
    assert np.isclose(theta.squared_integral(), ref, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("mode,target", [("max_theta", 0.05), ("theta_energy", 1e-5), ("energy", 3.0)])
def test_fd_normalizations(mode, target):
    dt = 5e-6
    w = fd_waveform(S64, 0, 20 * KHZ, dt, mode, target)
    theta = rotation_angle(w)
    if mode == "max_theta":
        assert np.isclose(theta.max_abs(), target)
    elif mode == "theta_energy":
        assert np.isclose(theta.squared_integral(), target)
    else:
        base = cosine_shift(S64, 0, 20 * KHZ, dt, "scale", w.metadata["scale"])
        assert np.isclose(base.energy(), target)
    assert w.metadata["kind"] == "fd" and w.n_segments == 64


def test_cosine_shift_and_dpss_waveform_values():
    dt = 1e-5
    w = cosine_shift(S64, 1, 30 * KHZ, dt, "scale", 2.0)
    n = np.arange(64)
    assert np.allclose(w.values, 2.0 * np.cos(n * 30 * KHZ * dt) * S64.sequence(1))
    assert np.isclose(cosine_shift(S64, 0, 30 * KHZ, dt, "energy", 0.7).energy(), 0.7)
    d = dpss_waveform(S64, 2, 3.0, dt)
    assert np.allclose(d.values, 3.0 * S64.sequence(2)) and np.isclose(d.tau, 64 * dt)


def test_shift_inside_band_warns():
    with pytest.warns(RuntimeWarning):
        cosine_shift(S64, 0, 1.0, 1e-5)


def test_amplitude_cap():
    with pytest.raises(AmplitudeCap):
        dpss_waveform(S64, 0, 100.0, 1e-3, omega_max=1.0)


def test_invalid_inputs():
    with pytest.raises(ValidationError):
        cosine_shift(S64, 0, -1.0, 1e-5)
    with pytest.raises(ValidationError):
        fd_waveform(S64, 0, 20 * KHZ, 1e-5, "bogus")
    with pytest.raises(ValidationError):
        Waveform([1.0, 2.0], [1.0, -1.0])
    with pytest.raises(ValidationError):
        finite_difference(Waveform([1.0, 2.0], [1.0, 2.0]))


def test_embedded_dd_angles():
    dt = 5e-6
    s = compute_dpss(DpssParams(40, 2 / 40, 0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        plain = fd_waveform(s, 0, 10 * KHZ, dt, "max_theta", 0.05)
        dd = finite_difference_embedded_dd(s, 0, 10 * KHZ, dt, "max_theta", 0.05)
    th_p, th_d = plain.theta_edges, dd.theta_edges
    outer = np.r_[0:10, 30:41]
    assert np.allclose(th_d[outer], th_p[outer])
    assert np.allclose(th_d[10:30], np.pi - th_p[10:30])
    # sin Theta is unchanged, cos Theta flips inside the pi window
    assert np.allclose(np.sin(th_d), np.sin(th_p), atol=1e-12)
    with pytest.raises(InvalidN):
        finite_difference_embedded_dd(compute_dpss(DpssParams(42, 2 / 42, 0)), 0, 10 * KHZ, dt)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 30), tau=st.floats(1e-4, 1e-2), frac=st.one_of(st.just(0.0), st.floats(1e-6, 0.9)))
def test_cpmg_geometry(n, tau, frac):
    tau_pi = frac * tau / n
    seq = cpmg(n, tau, tau_pi)
    j = np.arange(1, n + 1)
    assert np.allclose(seq.centers, (2 * j - 1) * tau / (2 * n))
    assert np.isclose(seq.r_idle, 1 - frac)
    if tau_pi > 0:
        w = seq.render()
        assert np.isclose(w.tau, tau)
        assert np.isclose(w.theta_edges[-1], n * np.pi)


def test_cpmg_overlap_and_repeat():
    with pytest.raises(Overlap):
        cpmg(10, 1e-3, 1e-4, 1e-6)
    with pytest.raises(Overlap):
        PulseSequence([1e-4, 1.1e-4], 5e-5, 1e-3)
    base = cpmg(2, 1e-3, 1e-5)
    rep = base.repeat(3)
    assert rep.n_pulses == 6 and np.isclose(rep.tau, 3e-3)
    assert np.allclose(rep.centers[2:4], base.centers + 1e-3)
    with pytest.raises(ValidationError):
        cpmg(3, 1e-3).render()


def test_switching_function_signs():
    edges, signs = cpmg(3, 1.0).switching_function()
    assert np.allclose(edges, [0, 1 / 6, 0.5, 5 / 6, 1])
    assert np.allclose(signs, [1, -1, 1, -1])


def test_rotary_spin_echo():
    w = rotary_spin_echo(10.0, 0.2, 1.0)
    assert w.n_segments == 10 and np.isclose(w.theta_edges[-1], 0.0)
    with pytest.raises(ValidationError):
        rotary_spin_echo(10.0, 0.3, 1.0)


def test_scan_range_formulas():
    r = scan_range(1e-6, 1e-7, 0.2, dt=5e-7, tau=1e-3, tau_b=1e-4, shift_spacing=10.0)
    assert np.isclose(r.cpmg_omega_max, np.pi * 0.8 / 1.1e-6)
    assert np.isclose(r.dpss_omega_max, np.pi / 5e-7)
    assert np.isclose(r.cpmg_resolution, np.pi / 1e-3)
    assert np.isclose(r.as_resolution, 2 * np.pi / 1e-4)
    assert scan_range(1e-6, 0, dt=1e-6, dt_min_awg=2e-6).dpss_omega_max == pytest.approx(np.pi / 2e-6)
    with pytest.raises(ValidationError):
        scan_range(-1.0, 0.0)


def test_waveform_round_trip(tmp_path):
    w = Waveform([0.5, -1.25, 3.0], [1e-6, 2e-6, 0.5e-6])
    write_waveform(w, tmp_path / "w.txt")
    back = read_waveform(tmp_path / "w.txt")
    assert np.array_equal(back.values, w.values) and np.array_equal(back.durations, w.durations)


def test_pulsed_dpss_structure():
    N, dt = 50, 1e-6
    s = compute_dpss(DpssParams(N, 2 / N, 0))
    c = 0.5 * dt / np.max(np.abs(s.sequence(0)))
    seq = pulsed_dpss(s, 0, 0.05 / dt, c, dt)
    assert seq.n_pulses == 2 * N - 1
    assert np.all(np.diff(seq.centers) > 0)
    assert np.allclose(seq.centers[1::2], np.arange(1, N) * dt)
    with pytest.raises(ScalingTooLarge):
        pulsed_dpss(s, 0, 0.05 / dt, 2 * c, dt)


def test_pulsed_dpss_filter_quarter_form():
    # each displaced pulse moves the switching edge; the cosine carrier
    # splits the response into two sidebands with a factor 1/4 in power
    N, dt = 400, 1e-6
    s = compute_dpss(DpssParams(N, 2 / N, 0))
    ws = 0.06 / dt
    c = 0.5 * dt / np.max(np.abs(s.sequence(0)))
    seq = pulsed_dpss(s, 0, ws, c, dt)
    lo, hi = passband(ws, s.W, dt)
    omega = np.linspace(lo, hi, 2001)
    f = switching_ff(seq, omega).power().values
    u = lambda x: evaluate_dpswf(s, 0, dt, x).values  # noqa: E731
    model = c**2 / 4 * (u(omega - ws) ** 2 + u(omega + ws) ** 2)
    assert np.linalg.norm(f - model) / np.linalg.norm(model) <= 0.02
