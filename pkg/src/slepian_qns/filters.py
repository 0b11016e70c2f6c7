"""
Filter functions of controlled qubit evolution.

The three fundamental filter functions of a waveform are the Fourier
transforms over ``[0, tau]`` of ``Omega(s)``, ``sin Theta(s)`` and
``cos Theta(s)``. Amplitude and dephasing filters follow as
``F_Omega = |F_xx|^2 / 4`` and ``F_z = |F_zy|^2``. Spectral overlaps use the
one-sided convention ``<a^2> = (1/pi) int_0^inf F(w) S(w) dw``.
"""
from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .dpss import DpssSet, band_half_width, evaluate_dpswf
from .errors import GridEmpty, GridMismatch, Overlap, ValidationError
from .waveforms import PulseSequence, Waveform

__all__ = [
    "FilterFunction",
    "FundamentalFFs",
    "CpmgFourierModel",
    "default_grid",
    "passband",
    "fundamental_ffs",
    "amplitude_ff",
    "dephasing_ff",
    "dephasing_zz_ff",
    "switching_ff",
    "fd_dephasing_ff",
    "fd_amplitude_ff",
    "cos_shifted_amplitude_ff",
    "cpmg_ff_model",
    "multitaper_ff",
    "band_integral",
    "interval_integral",
    "write_filter",
]

COMPLEX_KINDS = ("F_xx", "F_zy", "F_zz")
REAL_KINDS = ("F_Omega", "F_z", "F_zz2", "multitaper")
MIN_BAND_STEPS = 8
_CHUNK = 256


@dataclass(frozen=True)
class FilterFunction:
    """Filter values on an angular-frequency grid, with an optional passband."""

    kind: str
    omega: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)
    band: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in COMPLEX_KINDS + REAL_KINDS:
            raise ValidationError(f"unknown filter kind {self.kind!r}")
        omega = np.asarray(self.omega, dtype=float)
        values = np.asarray(self.values)
        if omega.shape != values.shape:
            raise GridMismatch("filter values and grid differ in shape")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)

    def power(self) -> "FilterFunction":
        """``|F|^2`` of a fundamental filter (identity for real filters)."""
        if self.kind in REAL_KINDS:
            return self
        kind = {"F_xx": "F_Omega", "F_zy": "F_z", "F_zz": "F_zz2"}[self.kind]
        vals = np.abs(self.values) ** 2
        if kind == "F_Omega":
            vals = vals / 4.0
        return FilterFunction(kind, self.omega, vals, self.metadata, self.band)

    def with_band(self, band) -> "FilterFunction":
        return FilterFunction(self.kind, self.omega, self.values, self.metadata, tuple(band))


class FundamentalFFs(NamedTuple):
    xx: FilterFunction
    zy: FilterFunction
    zz: FilterFunction


def default_grid(dt: float, n_points: int = 4096) -> np.ndarray:
    """Uniform grid from 0 to the Nyquist frequency ``pi/dt``."""
    return np.linspace(0.0, np.pi / dt, n_points)


def passband(omega_s: float, W: float, dt: float) -> tuple[float, float]:
    """``B_s = (max(0, omega_s - db), omega_s + db)`` with ``db = 2 pi W / dt``."""
    db = band_half_width(W, dt)
    return (max(0.0, omega_s - db), omega_s + db)


def _check_grid(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.size == 0:
        raise GridEmpty("frequency grid is empty")
    return omega


def _segment_transform(k, start, width):
    """``int_start^{start+width} e^{i k s} ds`` for broadcast ``k``, ``start``, ``width``."""
    return width * np.exp(1j * k * (start + width / 2)) * np.sinc(k * width / (2 * np.pi))


def _quadrature_nodes(w: Waveform, oversample: int):
    theta_edges = w.theta_edges
    per_seg = np.maximum(8, np.ceil(4 * np.abs(np.diff(theta_edges)) / np.pi)).astype(int)
    n_nodes = int(per_seg.max()) * max(1, int(oversample))
    x, wts = np.polynomial.legendre.leggauss(n_nodes)
    a = w.edges[:-1, None]
    d = w.durations[:, None]
    t = (a + d * (x[None, :] + 1) / 2).ravel()
    weights = (d * wts[None, :] / 2).ravel()
    theta = (theta_edges[:-1, None] + w.values[:, None] * (t.reshape(a.shape[0], -1) - a)).ravel()
    return t, weights, theta


def fundamental_ffs(
    w: Waveform, omega, method: str = "exact", oversample: int = 1, components: str = "xyz"
) -> FundamentalFFs:
    """
    Compute ``F_xx``, ``F_zy`` and ``F_zz`` of a piecewise-constant waveform.

    Parameters
    ----------
    w : Waveform
    omega : array_like
        Angular frequencies.
    method : {"exact", "quadrature"}
        ``"exact"`` integrates each segment in closed form, using that
        ``Theta`` is linear on every segment. ``"quadrature"`` applies
        Gauss-Legendre rules with at least ``max(8, ceil(4 |dTheta| / pi))``
        nodes per segment, times ``oversample``.
    components : str
        Subset of ``"xyz"``; filters that are not requested are returned
        as ``None``.

    Raises
    ------
    GridEmpty
        If ``omega`` is empty.
    """
    omega = _check_grid(omega)
    flat = omega.ravel()
    want_x, want_y, want_z = ("x" in components), ("y" in components), ("z" in components)
    xx = np.empty(flat.shape, dtype=complex) if want_x else None
    zy = np.empty(flat.shape, dtype=complex) if want_y else None
    zz = np.empty(flat.shape, dtype=complex) if want_z else None
    a = w.edges[:-1]
    d = w.durations
    om = w.values
    th = w.theta_edges[:-1]
    # Theta(s) = th + om (s - a); e^{+-i Theta} e^{iks} integrates to
    # d e^{ik(a + d/2)} e^{+-i(th + om d/2)} sinc((k +- om) d / 2)
    rot = np.exp(1j * (th + om * d / 2))

    if method not in ("exact", "quadrature"):
        raise ValidationError(f"unknown method {method!r}")
    if method == "quadrature" and (want_y or want_z):
        t, weights, theta = _quadrature_nodes(w, oversample)
        ws, wc = weights * np.sin(theta), weights * np.cos(theta)
    for s in range(0, flat.size, _CHUNK):
        sl = slice(s, s + _CHUNK)
        k = flat[sl, None]
        carrier = d * np.exp(1j * k * (a + d / 2))
        if want_x:
            xx[sl] = (carrier * np.sinc(k * d / (2 * np.pi))) @ om
        if not (want_y or want_z):
            continue
        if method == "exact":
            ip = (carrier * np.sinc((k + om) * d / (2 * np.pi))) @ rot
            im = (carrier * np.sinc((k - om) * d / (2 * np.pi))) @ rot.conj()
            if want_y:
                zy[sl] = (ip - im) / 2j
            if want_z:
                zz[sl] = (ip + im) / 2
        else:
            phase = np.exp(1j * k * t[None, :])
            if want_y:
                zy[sl] = phase @ ws
            if want_z:
                zz[sl] = phase @ wc

    meta = dict(w.metadata)
    shape = omega.shape

    def wrap(kind, vals):
        return None if vals is None else FilterFunction(kind, omega, vals.reshape(shape), meta)

    return FundamentalFFs(wrap("F_xx", xx), wrap("F_zy", zy), wrap("F_zz", zz))


def _with_dt_band(w: Waveform, ff: FilterFunction) -> FilterFunction:
    dt = w.dt
    if dt is not None and "W" in w.metadata and "omega_s" in w.metadata:
        return ff.with_band(passband(w.metadata["omega_s"], w.metadata["W"], dt))
    return ff


def amplitude_ff(w: Waveform, omega, **kwargs) -> FilterFunction:
    """Numeric amplitude filter ``F_Omega = |F_xx|^2 / 4``."""
    return _with_dt_band(w, fundamental_ffs(w, omega, components="x", **kwargs).xx.power())


def dephasing_ff(w: Waveform, omega, **kwargs) -> FilterFunction:
    """Numeric dephasing filter ``F_z = |F_zy|^2``."""
    return _with_dt_band(w, fundamental_ffs(w, omega, components="y", **kwargs).zy.power())


def dephasing_zz_ff(w: Waveform, omega, **kwargs) -> FilterFunction:
    """Numeric ``|F_zz|^2``, the dephasing filter seen along the z axis."""
    return fundamental_ffs(w, omega, components="z", **kwargs).zz.power()


def switching_ff(seq: PulseSequence, omega) -> FilterFunction:
    """
    ``F_zz`` of instantaneous pi pulses: the Fourier transform over
    ``[0, tau]`` of the +-1 switching function.
    """
    omega = _check_grid(omega)
    edges, signs = seq.switching_function()
    a, d = edges[:-1], np.diff(edges)
    flat = omega.ravel()
    out = np.empty(flat.shape, dtype=complex)
    for s in range(0, flat.size, _CHUNK):
        out[s : s + _CHUNK] = _segment_transform(flat[s : s + _CHUNK, None], a, d) @ signs
    return FilterFunction("F_zz", omega, out.reshape(omega.shape), dict(seq.metadata))


def _sidebands(dpss_set: DpssSet, k: int, omega_s: float, dt: float, omega, cross_term: bool):
    N = dpss_set.N
    up = evaluate_dpswf(dpss_set, k, dt, omega + omega_s).values
    down = evaluate_dpswf(dpss_set, k, dt, omega - omega_s).values
    total = up**2 + down**2
    if cross_term:
        total = total + 2 * up * down * np.cos(omega_s * (N - 1) * dt)
    return total


def _half_sin_over_omega(omega, dt):
    # sin(omega dt / 2) / omega with its omega -> 0 limit dt / 2
    return dt / 2 * np.sinc(omega * dt / (2 * np.pi))


def _closed_form(kind, dpss_set, k, omega_s, scale, dt, omega, cross_term, power, extra):
    omega = _check_grid(omega)
    r = _half_sin_over_omega(omega, dt)
    vals = scale**2 * r**power * extra(omega) * _sidebands(dpss_set, k, omega_s, dt, omega, cross_term)
    meta = {"k": k, "N": dpss_set.N, "W": dpss_set.W, "omega_s": omega_s, "scale": scale, "dt": dt,
            "closed_form": True}
    return FilterFunction(kind, omega, vals, meta, passband(omega_s, dpss_set.W, dt))


def fd_dephasing_ff(
    dpss_set: DpssSet,
    k: int,
    omega_s: float,
    scale: float,
    dt: float,
    omega,
    cross_term: bool = False,
) -> FilterFunction:
    """
    Small-angle dephasing filter of the finite-difference waveform.

    For the waveform built on ``A cos(n omega_s dt) v_n``, with ``A = scale``:
    ``F_z = 4 A^2 sin^4(omega dt/2) / omega^4 [U^2(omega - omega_s) + U^2(omega + omega_s)]``.
    Writing ``A = sqrt(2) Omega_s`` gives the familiar ``8 Omega_s^2`` prefactor.
    With ``cross_term`` the interference between the two sidebands is kept,
    which makes the expression exact for the linearised rotation angle.
    """
    return _closed_form("F_z", dpss_set, k, omega_s, scale, dt, omega, cross_term, 4,
                        lambda w: 4.0)


def fd_amplitude_ff(
    dpss_set: DpssSet,
    k: int,
    omega_s: float,
    scale: float,
    dt: float,
    omega,
    cross_term: bool = False,
) -> FilterFunction:
    """
    Amplitude filter of the finite-difference waveform,
    ``A^2 sin^4(omega dt/2) / omega^2 [U^2(omega - omega_s) + U^2(omega + omega_s)]``.

    It equals ``omega^2 / 4`` times :func:`fd_dephasing_ff` pointwise.
    """
    return _closed_form("F_Omega", dpss_set, k, omega_s, scale, dt, omega, cross_term, 4,
                        lambda w: w**2)


def cos_shifted_amplitude_ff(
    dpss_set: DpssSet,
    k: int,
    omega_s: float,
    scale: float,
    dt: float,
    omega,
    cross_term: bool = False,
) -> FilterFunction:
    """
    Amplitude filter of the cosine-shifted DPSS ``A cos(n omega_s dt) v_n``,
    ``A^2 sin^2(omega dt/2) / (4 omega^2) [U^2(omega - omega_s) + U^2(omega + omega_s)]``.

    For ``omega_s`` inside the half-bandwidth the sidebands interfere; pass
    ``cross_term=True`` to include the interference term, which makes the
    expression exact (at ``omega_s = 0`` it reduces to ``A^2 sin^2 U^2 / omega^2``).
    """
    if 0 < omega_s <= band_half_width(dpss_set.W, dt) and not cross_term:
        warnings.warn("omega_s inside the half-bandwidth: the cross-term is not negligible",
                      RuntimeWarning, stacklevel=2)
    return _closed_form("F_Omega", dpss_set, k, omega_s, scale, dt, omega, cross_term, 2,
                        lambda w: 0.25)


@dataclass(frozen=True)
class CpmgFourierModel:
    """
    Cosine series of the finite-width CPMG switching function.

    ``Y(s) = sum_nu a_nu cos(omega_nu s)`` with ``omega_nu = pi n nu / tau``;
    ``Y`` is ``cos Theta(s)`` of the rendered square-pulse sequence.
    """

    n: int
    tau: float
    tau_pi: float
    coefficients: np.ndarray
    omega_nu: np.ndarray

    def fzz(self, omega) -> np.ndarray:
        """``F_zz(omega)`` reconstructed from the series."""
        omega = np.asarray(omega, dtype=float)
        tau = self.tau

        def e(k):
            return tau * np.exp(1j * k * tau / 2) * np.sinc(k * tau / (2 * np.pi))

        k = omega[..., None]
        terms = e(k + self.omega_nu) + e(k - self.omega_nu)
        return terms @ self.coefficients / 2

    def squared_ff(self, omega) -> np.ndarray:
        return np.abs(self.fzz(omega)) ** 2


def cpmg_ff_model(n: int, tau: float, tau_pi: float, nu_max: int = 15, buffer: float = 0.0) -> CpmgFourierModel:
    """
    Fourier coefficients of the ``n``-pulse CPMG switching function with
    square pulses of width ``tau_pi``.

    ``a_nu = (n/tau) int_0^{2 tau/n} Y(s) cos(pi n nu s / tau) ds``, evaluated
    by piecewise Gauss-Legendre quadrature. In the ``tau_pi -> 0`` limit the
    square-wave values ``a_nu = 4 sin(pi nu / 2) / (pi nu)`` are recovered.

    Raises
    ------
    PulseOverlap
        If the spacing ``tau/n`` does not exceed ``tau_pi``.
    """
    spacing = tau / n
    if spacing <= tau_pi or spacing < tau_pi + buffer:
        raise Overlap(f"pulse spacing {spacing:.6g} does not exceed the pulse width {tau_pi:.6g}")
    period = 2 * spacing
    c1, c2 = spacing / 2, 3 * spacing / 2
    h = tau_pi / 2
    pieces = [(0.0, c1 - h), (c1 - h, c1 + h), (c1 + h, c2 - h), (c2 - h, c2 + h), (c2 + h, period)]
    nu = np.arange(1, nu_max + 1)
    omega_nu = np.pi * n * nu / tau
    x, wts = np.polynomial.legendre.leggauss(max(64, 4 * nu_max))
    coeffs = np.zeros(nu.size)
    for idx, (lo, hi) in enumerate(pieces):
        if hi - lo <= 0:
            continue
        s = lo + (hi - lo) * (x + 1) / 2
        ws = (hi - lo) * wts / 2
        if idx in (0, 4):
            y = np.ones_like(s)
        elif idx == 2:
            y = -np.ones_like(s)
        else:
            # cos Theta during a pi pulse: from +1 to -1 for the first, -1 to +1 for the second
            y = np.cos(np.pi * (s - lo) / tau_pi) * (1 if idx == 1 else -1)
        coeffs += (np.cos(np.outer(omega_nu, s)) * y) @ ws
    coeffs *= n / tau
    return CpmgFourierModel(n, tau, tau_pi, coeffs, omega_nu)


def multitaper_ff(ffs: Sequence[FilterFunction], weights: Sequence[float] | None = None) -> FilterFunction:
    """Weighted sum ``sum_k c_k F^(k)`` of real filters on a common grid."""
    if not ffs:
        raise ValidationError("need at least one filter")
    if weights is None:
        weights = np.ones(len(ffs))
    if len(weights) != len(ffs):
        raise ValidationError("one weight per filter is required")
    omega = ffs[0].omega
    total = np.zeros(omega.shape)
    for ff, c in zip(ffs, weights):
        if ff.kind in COMPLEX_KINDS:
            raise ValidationError("multitaper combination needs power filters")
        if ff.omega.shape != omega.shape or not np.array_equal(ff.omega, omega):
            raise GridMismatch("filters are on different frequency grids")
        total = total + c * ff.values
    meta = dict(ffs[0].metadata)
    meta["orders"] = [f.metadata.get("k") for f in ffs]
    meta["weights"] = [float(c) for c in weights]
    return FilterFunction("multitaper", omega, total, meta, ffs[0].band)


def interval_integral(omega, values, lo: float, hi: float) -> float:
    """Trapezoidal ``int_lo^hi`` of tabulated values, with interpolated end points."""
    omega = np.asarray(omega, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = max(lo, omega[0]), min(hi, omega[-1])
    if hi <= lo:
        return 0.0
    inside = (omega > lo) & (omega < hi)
    x = np.concatenate([[lo], omega[inside], [hi]])
    y = np.concatenate([[np.interp(lo, omega, values)], values[inside], [np.interp(hi, omega, values)]])
    return float(np.trapezoid(y, x))


def band_integral(ff: FilterFunction, band=None) -> float:
    """
    ``(1/pi) int_band F(omega) d omega`` by the trapezoidal rule.

    Raises
    ------
    GridEmpty
        If the band is outside the grid or spans fewer than 8 grid steps.
    """
    if ff.kind in COMPLEX_KINDS:
        ff = ff.power()
    band = ff.band if band is None else band
    if band is None:
        band = (ff.omega[0], ff.omega[-1])
    lo, hi = float(band[0]), float(band[1])
    omega = ff.omega
    step = float(np.min(np.diff(omega))) if omega.size > 1 else 0.0
    tol = 1e-9 * max(abs(hi), 1.0)
    if omega.size < 2 or lo < omega[0] - tol or hi > omega[-1] + tol:
        raise GridEmpty(f"band ({lo:.6g}, {hi:.6g}) is not covered by the frequency grid")
    if hi - lo < MIN_BAND_STEPS * step * (1 - 1e-9):
        raise GridEmpty("band spans fewer than 8 grid steps; refine the grid")
    return interval_integral(omega, ff.values, lo, hi) / np.pi


def write_filter(ff: FilterFunction, path) -> None:
    """Columnar text ``f_Hz value`` (complex filters add an imaginary column)."""
    buf = io.StringIO()
    f_hz = ff.omega / (2 * np.pi)
    if np.iscomplexobj(ff.values):
        data = np.column_stack([f_hz, ff.values.real, ff.values.imag])
        header = f"f_Hz {ff.kind}_real {ff.kind}_imag"
    else:
        data = np.column_stack([f_hz, ff.values])
        header = f"f_Hz {ff.kind}"
    np.savetxt(buf, data, fmt="%.17g", header=header)
    Path(path).write_text(buf.getvalue())
