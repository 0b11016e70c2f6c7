import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slepian_qns.errors import EmptyComb, ValidationError
from slepian_qns.noise import (
    NoiseEnsemble,
    Spectrum,
    builtin_spectra,
    comb,
    delta_tone,
    gaussian_bump,
    gridded,
    one_over_f_with_spurs,
    phase_sweep_tone,
    realize,
    realize_ensemble,
    sum_spectra,
    verify_realizations,
    white,
)

KHZ = 2 * np.pi * 1e3

spectra = st.one_of(
    st.builds(white, st.floats(0, 10), omega_c=st.just(50.0)),
    st.builds(gaussian_bump, st.floats(0, 40), st.floats(0.5, 10), st.floats(0, 10), omega_c=st.just(50.0)),
    st.builds(lambda a, e, h: one_over_f_with_spurs(a, e, [(20.0, 1.0, h)], knee=5.0, omega_c=50.0),
              st.floats(0, 10), st.floats(0.5, 2), st.floats(0, 5)),
)


@settings(max_examples=40, deadline=None)
@given(spec=spectra, factor=st.floats(0, 5))
def test_spectra_nonnegative_cut_and_scalable(spec, factor):
    w = np.linspace(0, 80, 161)
    s = spec(w)
    assert np.all(s >= 0) and np.all(s[w > 50] == 0)
    assert np.allclose(spec.scaled(factor)(w), factor * s)


@settings(max_examples=30, deadline=None)
@given(spec=spectra, d_omega=st.floats(0.05, 2.0))
def test_comb_power_matches_spectrum_integral(spec, d_omega):
    # variance of the comb sum equals the midpoint rule of (1/pi) int S
    omega, amp = comb(spec, d_omega)
    assert np.all(np.diff(omega) > 0) and np.isclose(omega[0], d_omega / 2)
    assert np.isclose(np.sum(amp**2) / 2, np.sum(spec(omega)) * d_omega / np.pi)


def test_comb_with_tone_and_errors():
    spec = sum_spectra(white(1.0), delta_tone(7.3, 2.0), omega_c=10.0)
    omega, amp = comb(spec, 1.0)
    assert omega[-1] == 7.3 and np.isclose(amp[-1], np.sqrt(4 / np.pi))
    assert spec.lines == [(7.3, 2.0)]
    assert spec.scaled(3.0).lines == [(7.3, 6.0)]
    with pytest.raises(ValidationError):
        comb(white(1.0), 1.0)
    with pytest.raises(ValidationError):
        comb(white(1.0, 10.0), 0.0)
    with pytest.raises(EmptyComb):
        comb(white(1.0, 0.1), 1.0)


def test_overlap_includes_lines():
    omega = np.linspace(0, 10, 1001)
    ff = np.ones_like(omega)
    assert np.isclose(white(2.0, 10.0).overlap(omega, ff), 20 / np.pi)
    assert np.isclose(delta_tone(3.0, 1.5).overlap(omega, 2 * ff), 3.0 / np.pi)


def test_realizations_are_reproducible_and_indexed():
    spec = gaussian_bump(5.0, 1.0, 2.0, omega_c=20.0)
    a = realize(spec, np.linspace(0, 10, 50), seed=4, index=3)
    b = realize(spec, np.linspace(0, 10, 50), seed=4, index=3)
    c = realize(spec, np.linspace(0, 10, 50), seed=5, index=3)
    assert np.array_equal(a.samples, b.samples) and not np.array_equal(a.samples, c.samples)
    ens = realize_ensemble(spec, 5, 2 * np.pi / 40, seed=4)
    assert np.array_equal(ens.phases[3], a.phases)
    assert np.allclose(ens.evaluate(a.times)[3], a.samples)
    assert np.allclose(ens.realization(3)(a.times), a.samples)
    rebuilt = NoiseEnsemble.from_realizations([ens.realization(r) for r in range(5)])
    assert np.array_equal(rebuilt.phases, ens.phases)


def test_default_comb_spacing_from_times():
    r = realize(white(1.0, 10.0), np.linspace(0, 2.0, 11))
    assert np.isclose(r.omega[1] - r.omega[0], 2 * np.pi / 8)
    with pytest.raises(ValidationError):
        realize(white(1.0, 10.0))


@pytest.mark.parametrize("spec", [
    white(3.0, omega_c=2 * np.pi * 5e3),
    gaussian_bump(2 * np.pi * 2e3, 2 * np.pi * 0.4e3, 5.0, omega_c=2 * np.pi * 5e3),
])
def test_periodogram_recovers_spectrum(spec):
    dt = 1 / 12e3
    times = np.arange(2048) * dt
    ens = realize_ensemble(spec, 300, 2 * np.pi / (4 * times[-1]), seed=9)
    report = verify_realizations(ens, spec, times, n_bins=16)
    assert report.consistent, report.mean_relative_error
    assert not report.wide_confidence


def test_sample_variance_follows_one_sided_convention():
    spec = white(2.0, omega_c=100.0)
    ens = realize_ensemble(spec, 4000, 0.5, seed=1)
    x = ens.evaluate(np.array([0.37]))[:, 0]
    expect = 2.0 * 100.0 / np.pi
    assert abs(x.var() - expect) < 4 * expect * np.sqrt(2 / x.size)


def test_phase_sweep_averages_tone_power():
    tones = phase_sweep_tone(3.0, 5, power=2.0, times=np.linspace(0, 1, 7))
    x = np.stack([t.samples for t in tones])
    assert np.allclose((x**2).mean(axis=0), 2.0 / np.pi)
    assert np.allclose(x.sum(axis=0), 0.0, atol=1e-12)
    with pytest.raises(ValidationError):
        phase_sweep_tone(3.0, 1)


def test_builtin_and_validation():
    for name in ("fig2", "fig3_dephasing", "fig3_amplitude", "fig4e", "fig4e_high", "fig4f"):
        s = builtin_spectra(name)
        assert s.omega_c is not None and np.all(s(np.linspace(0, s.omega_c, 50)) >= 0)
    fig2 = builtin_spectra("fig2")
    w = np.linspace(8 * KHZ, 12 * KHZ, 4001)
    peaks = w[1:-1][(fig2(w)[1:-1] > fig2(w)[:-2]) & (fig2(w)[1:-1] > fig2(w)[2:])]
    assert np.allclose(np.sort(peaks) / KHZ, [9.2, 10.9], atol=0.02)
    with pytest.raises(ValidationError):
        builtin_spectra("nope")
    with pytest.raises(ValidationError):
        white(-1.0)
    with pytest.raises(ValidationError):
        gaussian_bump(0.0, 0.0, 1.0)
    with pytest.raises(ValidationError):
        gridded([0.0, 1.0], [1.0, -1.0])
    with pytest.raises(ValidationError):
        Spectrum("white", {"level": 1.0}, omega_c=-1.0)
    with pytest.raises(ValidationError):
        white(1.0).scaled(-2.0)


def test_gridded_interpolates_and_serializes():
    s = gridded([1.0, 2.0, 3.0], [0.0, 2.0, 0.0])
    assert np.allclose(s([0.5, 1.5, 2.0, 4.0]), [0.0, 1.0, 2.0, 0.0])
    d = s.to_dict()
    assert d["form"] == "gridded" and d["params"]["values"] == [0.0, 2.0, 0.0]
