"""
Target spectra and stationary noise realizations.

A realization is a comb of cosines with deterministic amplitudes and
uniformly random phases,

    beta(t) = sum_i A_i cos(omega_i t + phi_i),   A_i = sqrt(2 S(omega_i) d_omega / pi),

on the midpoint comb ``omega_i = (i - 1/2) d_omega``. The phase average then
gives ``<beta^2> = (1/pi) sum_i S(omega_i) d_omega``, the one-sided variance
``(1/pi) int_0^inf S d_omega`` used by the filter-function overlaps.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyComb, ValidationError

__all__ = [
    "Spectrum",
    "NoiseRealization",
    "NoiseEnsemble",
    "white",
    "gaussian_bump",
    "one_over_f_with_spurs",
    "gridded",
    "delta_tone",
    "sum_spectra",
    "builtin_spectra",
    "comb",
    "realize",
    "realize_ensemble",
    "phase_sweep_tone",
    "verify_realizations",
    "VerificationReport",
    "write_spectrum",
]

FORMS = ("white", "gaussian_bump", "one_over_f_with_spurs", "gridded", "delta_tone", "sum")


@dataclass(frozen=True)
class Spectrum:
    """
    One-sided power spectral density ``S(omega) >= 0``.

    ``omega_c`` is a hard cutoff: ``S = 0`` above it. A ``delta_tone`` has no
    density; its power enters realizations and overlaps as a single line.
    """

    form: str
    params: dict = field(default_factory=dict)
    omega_c: float | None = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValidationError(f"unknown spectrum form {self.form!r}")
        if self.omega_c is not None and self.omega_c <= 0:
            raise ValidationError("omega_c must be positive")

    def __call__(self, omega) -> np.ndarray:
        omega = np.abs(np.asarray(omega, dtype=float))
        p = self.params
        if self.form == "white":
            out = np.full(omega.shape, float(p["level"]))
        elif self.form == "gaussian_bump":
            out = p["height"] * np.exp(-0.5 * ((omega - p["center"]) / p["width"]) ** 2)
        elif self.form == "one_over_f_with_spurs":
            out = p["amplitude"] / (1.0 + (omega / p["knee"]) ** p["exponent"])
            for center, width, height in p.get("spurs", ()):
                out = out + height * np.exp(-0.5 * ((omega - center) / width) ** 2)
        elif self.form == "gridded":
            out = np.interp(omega, p["omega"], p["values"], left=0.0, right=0.0)
        elif self.form == "delta_tone":
            out = np.zeros(omega.shape)
        else:
            weights = p.get("weights") or (1.0,) * len(p["components"])
            out = sum(wt * c(omega) for wt, c in zip(weights, p["components"]))
        if self.omega_c is not None:
            out = np.where(omega <= self.omega_c, out, 0.0)
        return out

    @property
    def lines(self) -> list[tuple[float, float]]:
        """Discrete tones ``(omega, power)`` contained in the spectrum."""
        if self.form == "delta_tone":
            return [(float(self.params["omega"]), float(self.params["power"]))]
        if self.form == "sum":
            weights = self.params.get("weights") or (1.0,) * len(self.params["components"])
            return [(w0, wt * power) for wt, c in zip(weights, self.params["components"])
                    for w0, power in c.lines]
        return []

    def scaled(self, factor: float) -> "Spectrum":
        """The same shape with every density and tone power multiplied by ``factor``."""
        if factor < 0:
            raise ValidationError("spectrum scale factor must be non-negative")
        return Spectrum("sum", {"components": (self,), "weights": (float(factor),)}, self.omega_c)

    def overlap(self, omega, ff_values) -> float:
        """``(1/pi) int F S d omega`` on a tabulated filter, including tones."""
        omega = np.asarray(omega, dtype=float)
        ff_values = np.asarray(ff_values, dtype=float)
        total = np.trapezoid(ff_values * self(omega), omega) / np.pi
        for w0, power in self.lines:
            total += power * np.interp(w0, omega, ff_values) / np.pi
        return float(total)

    def to_dict(self) -> dict:
        params = {}
        for key, val in self.params.items():
            if key == "components":
                params[key] = [c.to_dict() for c in val]
            elif isinstance(val, np.ndarray):
                params[key] = val.tolist()
            else:
                params[key] = val
        return {"form": self.form, "params": params, "omega_c": self.omega_c}


def white(level: float, omega_c: float | None = None) -> Spectrum:
    if level < 0:
        raise ValidationError("spectral level must be non-negative")
    return Spectrum("white", {"level": float(level)}, omega_c)


def gaussian_bump(center: float, width: float, height: float, omega_c: float | None = None) -> Spectrum:
    if width <= 0 or height < 0:
        raise ValidationError("width must be positive and height non-negative")
    return Spectrum("gaussian_bump", {"center": float(center), "width": float(width),
                                      "height": float(height)}, omega_c)


def one_over_f_with_spurs(
    amplitude: float,
    exponent: float = 1.0,
    spurs: Sequence[tuple[float, float, float]] = (),
    knee: float = 2 * np.pi * 1e3,
    omega_c: float | None = None,
) -> Spectrum:
    """``amplitude / (1 + (omega/knee)^exponent)`` plus Gaussian spurs ``(center, width, height)``."""
    spurs = tuple(tuple(float(x) for x in s) for s in spurs)
    return Spectrum("one_over_f_with_spurs", {"amplitude": float(amplitude), "exponent": float(exponent),
                                              "knee": float(knee), "spurs": spurs}, omega_c)


def gridded(omega, values, omega_c: float | None = None) -> Spectrum:
    omega = np.asarray(omega, dtype=float)
    values = np.asarray(values, dtype=float)
    if omega.shape != values.shape or np.any(np.diff(omega) <= 0):
        raise ValidationError("gridded spectrum needs increasing frequencies matching the values")
    if np.any(values < 0):
        raise ValidationError("spectral values must be non-negative")
    return Spectrum("gridded", {"omega": omega, "values": values}, omega_c)


def delta_tone(omega: float, power: float = 1.0) -> Spectrum:
    """``S = power * delta(w - omega)``: a single cosine of amplitude ``sqrt(2 power / pi)``."""
    return Spectrum("delta_tone", {"omega": float(omega), "power": float(power)})


def sum_spectra(*components: Spectrum, omega_c: float | None = None) -> Spectrum:
    return Spectrum("sum", {"components": tuple(components)}, omega_c)


# reference shapes for the presets; all frequencies in rad/s
_KHZ = 2 * np.pi * 1e3
_MHZ = 2 * np.pi * 1e6


def builtin_spectra(name: str, **overrides) -> Spectrum:
    """
    Named reference spectra used by the presets.

    ``"fig2"``: 1/f-like background with two narrow spurs near 9.2 and 10.9 kHz.
    ``"fig3_dephasing"`` / ``"fig3_amplitude"``: overlapping Gaussian bumps with
    peak heights 15 and 450 in reporting units (``unit_z``, ``unit_omega``
    convert to simulation units).
    ``"fig4e"``, ``"fig4e_high"``: bumps below 13 kHz, and the same with extra
    weight above it. ``"fig4f"``: MHz-scale spectrum with weight above 27 MHz.
    The generic forms ``"white"``, ``"gaussian_bump"`` and
    ``"one_over_f_with_spurs"`` take their constructor arguments.
    """
    if name == "white":
        return white(**overrides)
    if name == "gaussian_bump":
        return gaussian_bump(**overrides)
    if name == "one_over_f_with_spurs":
        return one_over_f_with_spurs(**overrides)
    if name == "fig2":
        p = {"amplitude": 4.0, "knee": 2.0 * _KHZ, "spur_height": 4.0, "spur_width": 0.25 * _KHZ,
             "spur_centers": (9.2 * _KHZ, 10.9 * _KHZ), "omega_c": 40 * _KHZ}
        p.update(overrides)
        spurs = [(c, p["spur_width"], p["spur_height"]) for c in p["spur_centers"]]
        return one_over_f_with_spurs(p["amplitude"], 1.0, spurs, p["knee"], p["omega_c"])
    if name in ("fig3_dephasing", "fig3_amplitude"):
        dephasing = name == "fig3_dephasing"
        p = {"center": (6.0 if dephasing else 11.0) * _KHZ, "width": 2.2 * _KHZ,
             "height": 15.0 if dephasing else 450.0,
             "unit": 3.0 if dephasing else 2.0e-10, "omega_c": 40 * _KHZ}
        p.update(overrides)
        return gaussian_bump(p["center"], p["width"], p["height"] * p["unit"], p["omega_c"])
    if name in ("fig4e", "fig4e_high"):
        p = {"omega_c": 40 * _KHZ, "high_center": 22.0 * _KHZ, "high_height": 200.0}
        p.update(overrides)
        parts = [
            gaussian_bump(0.0, 4.0 * _KHZ, 4.0),
            gaussian_bump(3.5 * _KHZ, 1.2 * _KHZ, 30.0),
            gaussian_bump(8.0 * _KHZ, 1.5 * _KHZ, 40.0),
        ]
        if name == "fig4e_high":
            parts.append(gaussian_bump(p["high_center"], 2.0 * _KHZ, p["high_height"]))
        return sum_spectra(*parts, omega_c=p["omega_c"])
    if name == "fig4f":
        p = {"omega_c": 2 * np.pi * 90e6}
        p.update(overrides)
        return sum_spectra(
            white(1e3),
            gaussian_bump(8 * _MHZ, 3 * _MHZ, 2e4),
            gaussian_bump(35 * _MHZ, 8 * _MHZ, 3e4),
            omega_c=p["omega_c"],
        )
    raise ValidationError(f"unknown builtin spectrum {name!r}")


def comb(spectrum: Spectrum, d_omega: float, omega_max: float | None = None):
    """
    Midpoint comb frequencies and cosine amplitudes for ``spectrum``.

    Tones of a ``delta_tone`` component are appended as exact lines.
    """
    if d_omega <= 0:
        raise ValidationError("comb spacing must be positive")
    top = spectrum.omega_c if omega_max is None else omega_max
    if spectrum.omega_c is not None and omega_max is not None:
        top = min(spectrum.omega_c, omega_max)
    lines = spectrum.lines
    density = spectrum.form != "delta_tone"
    if density and top is None:
        raise ValidationError("spectrum needs a cutoff omega_c (or pass omega_max) to build a comb")
    omegas, amps = [], []
    if density:
        n = int(np.floor(top / d_omega + 0.5))
        w = (np.arange(1, n + 1) - 0.5) * d_omega
        s = spectrum(w)
        omegas.append(w)
        amps.append(np.sqrt(2 * s * d_omega / np.pi))
    for w0, power in lines:
        omegas.append(np.array([w0]))
        amps.append(np.array([np.sqrt(2 * power / np.pi)]))
    omega = np.concatenate(omegas) if omegas else np.zeros(0)
    amp = np.concatenate(amps) if amps else np.zeros(0)
    if omega.size == 0:
        raise EmptyComb("no comb frequencies lie inside the spectrum bounds")
    return omega, amp


@dataclass(frozen=True)
class NoiseRealization:
    """
    One noise trace. ``omega``, ``amplitudes`` and ``phases`` define it at
    any time; ``samples`` hold its values on ``times``.
    """

    times: np.ndarray | None
    samples: np.ndarray | None
    omega: np.ndarray | None = None
    amplitudes: np.ndarray | None = None
    phases: np.ndarray | None = None
    seed: int | None = None
    component: str = "z"

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.omega is not None:
            z = self.amplitudes * np.exp(1j * self.phases)
            phase = np.exp(1j * np.multiply.outer(t, self.omega))
            return (phase @ z).real
        if self.times is None:
            raise ValidationError("realization has neither a comb nor samples")
        return np.interp(t, self.times, self.samples)

    @classmethod
    def from_samples(cls, times, samples, component: str = "z") -> "NoiseRealization":
        return cls(np.asarray(times, float), np.asarray(samples, float), component=component)


@dataclass(frozen=True)
class NoiseEnsemble:
    """``R`` comb realizations sharing frequencies and amplitudes; phases are ``(R, K)``."""

    omega: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    seed: int | None = None
    component: str = "z"

    @property
    def size(self) -> int:
        return self.phases.shape[0]

    @property
    def phasors(self) -> np.ndarray:
        """``A_i exp(i phi_i)`` per realization, shape ``(R, K)``."""
        return self.amplitudes[None, :] * np.exp(1j * self.phases)

    def evaluate(self, t, chunk: int = 4096) -> np.ndarray:
        """Samples of every realization at times ``t``, shape ``(R, len(t))``."""
        t = np.asarray(t, dtype=float)
        ac = self.amplitudes * np.cos(self.phases)
        asn = self.amplitudes * np.sin(self.phases)
        out = np.empty((self.size, t.size))
        for s in range(0, t.size, chunk):
            arg = np.outer(self.omega, t[s : s + chunk])
            out[:, s : s + chunk] = ac @ np.cos(arg) - asn @ np.sin(arg)
        return out

    def realization(self, r: int, times=None) -> NoiseRealization:
        samples = None if times is None else self.evaluate(times)[r]
        return NoiseRealization(times, samples, self.omega, self.amplitudes, self.phases[r],
                                self.seed, self.component)

    def subset(self, index) -> "NoiseEnsemble":
        return NoiseEnsemble(self.omega, self.amplitudes, self.phases[index], self.seed, self.component)

    @classmethod
    def from_realizations(cls, realizations: Sequence[NoiseRealization]) -> "NoiseEnsemble":
        first = realizations[0]
        if first.omega is None:
            raise ValidationError("ensembles need comb-defined realizations")
        for r in realizations[1:]:
            if r.omega is None or not np.array_equal(r.omega, first.omega) \
                    or not np.array_equal(r.amplitudes, first.amplitudes):
                raise ValidationError("realizations do not share a comb")
        phases = np.stack([r.phases for r in realizations])
        return cls(first.omega, first.amplitudes, phases, first.seed, first.component)


def _phase_rng(seed, index: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def realize(
    spectrum: Spectrum,
    times=None,
    d_omega: float | None = None,
    seed: int = 0,
    *,
    tau: float | None = None,
    omega_max: float | None = None,
    component: str = "z",
    index: int = 0,
) -> NoiseRealization:
    """
    One realization of ``spectrum`` with seeded random phases.

    ``d_omega`` defaults to ``2 pi / (4 tau)`` with ``tau`` taken from the
    argument or the last sample time. ``index`` selects an independent
    stream for the same ``seed``, so ensembles are reproducible one member
    at a time.
    """
    if d_omega is None:
        if tau is None:
            if times is None:
                raise ValidationError("need d_omega, tau or times to choose the comb spacing")
            tau = float(np.max(times))
        d_omega = 2 * np.pi / (4 * tau)
    omega, amp = comb(spectrum, d_omega, omega_max)
    phases = _phase_rng(seed, index).uniform(0.0, 2 * np.pi, omega.size)
    real = NoiseRealization(None, None, omega, amp, phases, seed, component)
    if times is None:
        return real
    times = np.asarray(times, dtype=float)
    return NoiseRealization(times, real(times), omega, amp, phases, seed, component)


def realize_ensemble(
    spectrum: Spectrum,
    n_realizations: int,
    d_omega: float,
    seed: int = 0,
    *,
    omega_max: float | None = None,
    component: str = "z",
) -> NoiseEnsemble:
    """``n_realizations`` members, member ``r`` identical to ``realize(..., index=r)``."""
    omega, amp = comb(spectrum, d_omega, omega_max)
    phases = np.stack([_phase_rng(seed, r).uniform(0.0, 2 * np.pi, omega.size)
                       for r in range(n_realizations)]) if n_realizations else np.zeros((0, omega.size))
    return NoiseEnsemble(omega, amp, phases, seed, component)


def phase_sweep_tone(
    omega_sid: float, n_phases: int, power: float = 1.0, times=None, component: str = "z"
) -> list[NoiseRealization]:
    """Single tones ``A cos(omega_sid t + 2 pi j / n_phases)`` for ``j = 0..n_phases-1``."""
    if n_phases < 2:
        raise ValidationError("n_phases must be at least 2")
    amp = np.array([np.sqrt(2 * power / np.pi)])
    omega = np.array([float(omega_sid)])
    out = []
    for j in range(n_phases):
        phase = np.array([2 * np.pi * j / n_phases])
        r = NoiseRealization(None, None, omega, amp, phase, None, component)
        if times is not None:
            times = np.asarray(times, dtype=float)
            r = NoiseRealization(times, r(times), omega, amp, phase, None, component)
        out.append(r)
    return out


@dataclass(frozen=True)
class VerificationReport:
    """Ensemble periodogram against the target spectrum."""

    omega: np.ndarray
    estimate: np.ndarray
    target: np.ndarray
    relative_error: np.ndarray
    mean_relative_error: float
    chi2_per_bin: float
    n_realizations: int
    wide_confidence: bool

    @property
    def consistent(self) -> bool:
        return self.mean_relative_error <= 0.1


def verify_realizations(
    realizations: Sequence[NoiseRealization] | NoiseEnsemble,
    spectrum: Spectrum,
    times=None,
    n_bins: int = 32,
    min_level: float = 0.05,
) -> VerificationReport:
    """
    Compare the ensemble periodogram of uniformly sampled realizations with
    ``spectrum``.

    The windowed periodogram ``|sum_j w_j beta_j e^{i omega t_j}|^2 dt / sum w^2``
    averages to ``S(omega)`` under the amplitude convention above. Bins where the target is
    below ``min_level`` times its maximum are excluded from the error summary.
    """
    if isinstance(realizations, NoiseEnsemble):
        if times is None:
            raise ValidationError("times are required to sample an ensemble")
        samples = realizations.evaluate(times)
    else:
        if times is None:
            times = realizations[0].times
        samples = np.stack([r(times) for r in realizations])
    times = np.asarray(times, dtype=float)
    n_real, n_t = samples.shape
    dt = float(times[1] - times[0])
    taper = np.hanning(n_t)
    spec = np.fft.rfft(samples * taper, axis=1)
    pgram = np.abs(spec) ** 2 * dt / np.sum(taper**2)
    freqs = 2 * np.pi * np.fft.rfftfreq(n_t, dt)
    mean_pg = pgram.mean(axis=0)
    var_pg = pgram.var(axis=0, ddof=1) / n_real if n_real > 1 else np.full(freqs.size, np.inf)

    edges = np.linspace(0, freqs[-1], n_bins + 1)
    idx = np.clip(np.digitize(freqs, edges) - 1, 0, n_bins - 1)
    centers, est, tgt, err2 = [], [], [], []
    for b in range(n_bins):
        sel = idx == b
        if not np.any(sel):
            continue
        centers.append(freqs[sel].mean())
        est.append(mean_pg[sel].mean())
        tgt.append(spectrum(freqs[sel]).mean())
        err2.append(var_pg[sel].mean() / max(sel.sum(), 1))
    centers, est, tgt, err2 = map(np.asarray, (centers, est, tgt, err2))
    keep = tgt > min_level * tgt.max() if tgt.max() > 0 else np.zeros(tgt.shape, bool)
    rel = np.where(keep, (est - tgt) / np.where(tgt > 0, tgt, 1.0), np.nan)
    mre = float(np.nanmean(np.abs(rel))) if keep.any() else float("nan")
    chi2 = float(np.mean((est[keep] - tgt[keep]) ** 2 / err2[keep])) if keep.any() and n_real > 1 else float("inf")
    return VerificationReport(centers, est, tgt, rel, mre, chi2, n_real, n_real < 100)


def write_spectrum(spectrum: Spectrum, omega, path) -> None:
    """Columnar text ``f_Hz S`` on the given grid."""
    buf = io.StringIO()
    omega = np.asarray(omega, dtype=float)
    np.savetxt(buf, np.column_stack([omega / (2 * np.pi), spectrum(omega)]), fmt="%.17g",
               header="f_Hz S")
    Path(path).write_text(buf.getvalue())
