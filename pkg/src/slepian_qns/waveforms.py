"""
Control waveform synthesis.

Every control is a piecewise-constant drive amplitude ``Omega(t)`` (rad per
unit time) described by segment values and segment durations. Uniform
DPSS-derived waveforms use a single ``dt``; rendered pulse sequences carry
sub-grid breakpoints at the pulse edges so that nothing is resampled.
"""
from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dpss import DpssSet, band_half_width
from .errors import AmplitudeCap, InvalidN, Overlap, ScalingTooLarge, ValidationError

__all__ = [
    "Waveform",
    "RotationAngle",
    "PulseSequence",
    "ScanRange",
    "PLATFORMS",
    "NORMALIZATIONS",
    "dpss_waveform",
    "cosine_shift",
    "finite_difference",
    "fd_waveform",
    "finite_difference_embedded_dd",
    "cpmg",
    "rotary_spin_echo",
    "pulsed_dpss",
    "rotation_angle",
    "fd_theta_closed_form",
    "scan_range",
    "write_waveform",
    "read_waveform",
]

NORMALIZATIONS = ("scale", "energy", "theta_energy", "max_theta")

# pulse timing presets: pi-time and minimum dead time between adjacent pulses
PLATFORMS = {
    "ion": {"tau_pi": 35e-6, "buffer": 2e-6},
    "superconducting": {"tau_pi": 11e-9, "buffer": 7e-9},
}

SMALL_ANGLE_LIMIT = np.pi / 8


@dataclass(frozen=True)
class Waveform:
    """Piecewise-constant drive: ``values[j]`` held for ``durations[j]``."""

    values: np.ndarray
    durations: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        durations = np.broadcast_to(np.asarray(self.durations, dtype=float), values.shape).copy()
        if values.size < 1:
            raise ValidationError("a waveform needs at least one segment")
        if np.any(durations <= 0) or not np.all(np.isfinite(durations)):
            raise ValidationError("segment durations must be positive and finite")
        if not np.all(np.isfinite(values)):
            raise ValidationError("waveform values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @classmethod
    def uniform(cls, values, dt: float, **metadata) -> "Waveform":
        values = np.asarray(values, dtype=float)
        return cls(values, np.full(values.shape, float(dt)), metadata)

    @property
    def n_segments(self) -> int:
        return self.values.size

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def tau(self) -> float:
        return float(np.sum(self.durations))

    @property
    def dt(self) -> float | None:
        """Common segment duration, or ``None`` for non-uniform waveforms."""
        d = self.durations
        return float(d[0]) if np.allclose(d, d[0], rtol=1e-12, atol=0) else None

    @property
    def theta_edges(self) -> np.ndarray:
        """Rotation angle at every segment boundary."""
        return np.concatenate([[0.0], np.cumsum(self.values * self.durations)])

    def energy(self) -> float:
        return float(np.sum(self.values**2 * self.durations))

    def with_metadata(self, **updates) -> "Waveform":
        return replace(self, metadata={**self.metadata, **updates})

    def check_cap(self, omega_max: float | None) -> "Waveform":
        if omega_max is not None:
            peak = float(np.max(np.abs(self.values)))
            if peak > omega_max:
                raise AmplitudeCap(
                    f"peak amplitude {peak:.6g} exceeds the configured cap {omega_max:.6g}"
                )
        return self


@dataclass(frozen=True)
class RotationAngle:
    """Piecewise-linear integrated rotation angle ``Theta(t)``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.breakpoints, self.values)

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def squared_integral(self) -> float:
        """Exact ``int Theta(t)^2 dt`` of the piecewise-linear angle."""
        a, b = self.values[:-1], self.values[1:]
        h = np.diff(self.breakpoints)
        return float(np.sum(h * (a * a + a * b + b * b) / 3.0))


def rotation_angle(w: Waveform) -> RotationAngle:
    """Exact integral of a piecewise-constant waveform."""
    return RotationAngle(w.edges, w.theta_edges)


def fd_theta_closed_form(base_values, dt: float, t) -> np.ndarray:
    """
    Rotation angle of the finite-difference waveform built on ``base_values``.

    ``Theta(t) = V[t0] (t - t0 dt) + V[t0-1] ((t0+1) dt - t)``, with
    ``t0 = floor(t/dt)`` and the second term absent for ``t0 = 0``.
    """
    V = np.asarray(base_values, dtype=float)
    t = np.asarray(t, dtype=float)
    t0 = np.clip(np.floor(t / dt).astype(int), 0, V.size)
    Vpad = np.concatenate([V, [0.0]])
    current = Vpad[t0] * (t - t0 * dt)
    previous = np.where(t0 >= 1, Vpad[np.maximum(t0 - 1, 0)] * ((t0 + 1) * dt - t), 0.0)
    return current + previous


def _warn_small_angle(w: Waveform, offset_multiple_of_pi: bool = False) -> None:
    theta = w.theta_edges
    if offset_multiple_of_pi:
        theta = theta - np.pi * np.round(theta / np.pi)
    peak = float(np.max(np.abs(theta)))
    if peak > SMALL_ANGLE_LIMIT:
        warnings.warn(
            f"max |Theta| = {peak:.3g} rad exceeds pi/8; the linearised filter "
            "functions lose accuracy",
            RuntimeWarning,
            stacklevel=3,
        )


def _modulated(dpss_set: DpssSet, k: int, omega_s: float, dt: float) -> np.ndarray:
    n = np.arange(dpss_set.N)
    return np.cos(n * omega_s * dt) * dpss_set.sequence(k)


def _scale_for(mode: str, target: float, unit: Waveform, base_unit: Waveform | None = None) -> float:
    """Scale factor that gives ``unit`` (made with scale 1) the requested size."""
    if mode not in NORMALIZATIONS:
        raise ValidationError(f"unknown normalization {mode!r}; expected one of {NORMALIZATIONS}")
    if target < 0:
        raise ValidationError("normalization target must be non-negative")
    if mode == "scale":
        return float(target)
    if mode == "energy":
        ref = (base_unit or unit).energy()
        return float(np.sqrt(target / ref)) if ref > 0 else 0.0
    theta = rotation_angle(unit)
    if mode == "theta_energy":
        ref = theta.squared_integral()
        return float(np.sqrt(target / ref)) if ref > 0 else 0.0
    ref = theta.max_abs()
    return float(target / ref) if ref > 0 else 0.0


def dpss_waveform(
    dpss_set: DpssSet, k: int, scale: float, dt: float, omega_max: float | None = None
) -> Waveform:
    """``Omega_n = scale * v_n^(k)`` on ``N`` segments of length ``dt``."""
    w = Waveform.uniform(
        scale * dpss_set.sequence(k),
        dt,
        kind="dpss",
        k=k,
        N=dpss_set.N,
        W=dpss_set.W,
        omega_s=0.0,
        normalization="scale",
        scale=float(scale),
    )
    _warn_small_angle(w)
    return w.check_cap(omega_max)


def cosine_shift(
    dpss_set: DpssSet,
    k: int,
    omega_s: float,
    dt: float,
    normalization: str = "scale",
    target: float = 1.0,
    omega_max: float | None = None,
) -> Waveform:
    """
    Cosine-modulated DPSS, ``Omega_n = A cos(n omega_s dt) v_n^(k)``.

    ``A`` is fixed by ``normalization``: ``"scale"`` uses ``target``
    directly; ``"energy"`` makes ``int Omega^2 dt == target``;
    ``"theta_energy"`` and ``"max_theta"`` constrain the rotation angle.
    """
    if omega_s < 0:
        raise ValidationError("omega_s must be non-negative")
    if 0 < omega_s <= band_half_width(dpss_set.W, dt):
        warnings.warn(
            "omega_s lies inside the DPSS half-bandwidth; the shifted filter "
            "acquires a cross-term between its two sidebands",
            RuntimeWarning,
            stacklevel=2,
        )
    unit = Waveform.uniform(_modulated(dpss_set, k, omega_s, dt), dt)
    A = _scale_for(normalization, target, unit)
    w = Waveform.uniform(
        A * unit.values,
        dt,
        kind="cos",
        k=k,
        N=dpss_set.N,
        W=dpss_set.W,
        omega_s=float(omega_s),
        normalization=normalization,
        target=float(target),
        scale=A,
    )
    _warn_small_angle(w)
    return w.check_cap(omega_max)


def finite_difference(base: Waveform, omega_max: float | None = None) -> Waveform:
    """
    Discrete derivative of a uniform waveform: ``V'_0 = V_0``, ``V'_n = V_n - V_{n-1}``.

    The rotation angle of the result at ``t = m dt`` equals ``dt * V_{m-1}``.
    """
    if base.n_segments < 2:
        raise ValidationError("finite difference needs at least two segments")
    dt = base.dt
    if dt is None:
        raise ValidationError("finite difference needs a uniform base waveform")
    out = np.diff(base.values, prepend=0.0)
    meta = dict(base.metadata)
    meta["kind"] = "fd"
    meta["base_kind"] = base.metadata.get("kind")
    w = Waveform.uniform(out, dt, **meta)
    return w.check_cap(omega_max)


def fd_waveform(
    dpss_set: DpssSet,
    k: int,
    omega_s: float,
    dt: float,
    normalization: str = "max_theta",
    target: float = 0.05,
    omega_max: float | None = None,
) -> Waveform:
    """
    Finite-difference waveform of a cosine-shifted DPSS.

    ``normalization`` refers to the finished waveform: ``"energy"`` fixes the
    energy of the underlying cosine-shifted sequence, ``"theta_energy"``
    fixes ``int Theta_FD^2 dt`` and ``"max_theta"`` the peak rotation angle.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        base_unit = cosine_shift(dpss_set, k, omega_s, dt, "scale", 1.0)
    if 0 < omega_s <= band_half_width(dpss_set.W, dt):
        warnings.warn(
            "omega_s lies inside the DPSS half-bandwidth; the shifted filter "
            "acquires a cross-term between its two sidebands",
            RuntimeWarning,
            stacklevel=2,
        )
    fd_unit = finite_difference(base_unit)
    A = _scale_for(normalization, target, fd_unit, base_unit=base_unit)
    meta = dict(base_unit.metadata)
    meta.update(kind="fd", base_kind="cos", normalization=normalization, target=float(target), scale=A)
    w = Waveform.uniform(A * fd_unit.values, dt, **meta)
    _warn_small_angle(w)
    return w.check_cap(omega_max)


def finite_difference_embedded_dd(
    dpss_set: DpssSet,
    k: int,
    omega_s: float,
    dt: float,
    normalization: str = "max_theta",
    target: float = 0.05,
    omega_max: float | None = None,
) -> Waveform:
    """
    Finite-difference waveform with two embedded pi rotations.

    The angle at the grid points is ``dt V_{m-1}`` for ``m < N/4`` and
    ``m >= 3N/4``, and ``pi - dt V_{m-1}`` in between, so ``sin Theta``
    still tracks the shaped sequence while ``cos Theta`` switches like a
    two-pulse CPMG sequence. Segment ``N/4 - 1`` carries the ``+pi`` step and
    segment ``3N/4 - 1`` the ``-pi`` step.
    """
    N = dpss_set.N
    if N % 4:
        raise InvalidN(f"N must be divisible by 4, got {N}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        plain = fd_waveform(dpss_set, k, omega_s, dt, normalization, target)
    A = plain.metadata["scale"]
    V = A * _modulated(dpss_set, k, omega_s, dt)

    # target angles at the grid points m = 0..N, then difference them
    theta = np.concatenate([[0.0], dt * V])
    q1, q3 = N // 4, 3 * N // 4
    theta[q1:q3] = np.pi - theta[q1:q3]
    values = np.diff(theta) / dt

    meta = dict(plain.metadata)
    meta.update(kind="fd_dd", pi_segments=[q1 - 1, q3 - 1])
    w = Waveform.uniform(values, dt, **meta)
    _warn_small_angle(w, offset_multiple_of_pi=True)
    return w.check_cap(omega_max)


@dataclass(frozen=True)
class PulseSequence:
    """
    Square pi pulses about x.

    ``centers`` are pulse centres, ``tau_pi`` the pulse width (zero for
    instantaneous pulses), ``buffer`` the minimum dead time between the
    edges of adjacent pulses, ``tau`` the total duration.
    """

    centers: np.ndarray
    tau_pi: float
    tau: float
    buffer: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).ravel()
        object.__setattr__(self, "centers", c)
        if self.tau_pi < 0 or self.buffer < 0 or self.tau <= 0:
            raise ValidationError("tau_pi and buffer must be >= 0 and tau > 0")
        half = self.tau_pi / 2
        tol = 1e-12 * self.tau
        if c.size and (c[0] - half < -tol or c[-1] + half > self.tau + tol):
            raise Overlap("pulses must lie inside [0, tau]")
        if c.size > 1 and np.any(np.diff(c) < self.delta_tau_min - tol):
            raise Overlap(
                f"pulse spacing {np.min(np.diff(c)):.6g} is below the minimum "
                f"{self.delta_tau_min:.6g} (pulse width plus buffer)"
            )

    @property
    def n_pulses(self) -> int:
        return self.centers.size

    @property
    def amplitude(self) -> float:
        """Square-pulse Rabi rate ``pi / tau_pi``."""
        return np.inf if self.tau_pi == 0 else np.pi / self.tau_pi

    @property
    def delta_tau_min(self) -> float:
        return self.tau_pi + self.buffer

    @property
    def r_idle(self) -> float:
        return 1.0 - self.n_pulses * self.delta_tau_min / self.tau

    def switching_function(self):
        """Breakpoints and +-1 values of the instantaneous-pulse switching function."""
        edges = np.concatenate([[0.0], self.centers, [self.tau]])
        signs = (-1.0) ** np.arange(self.centers.size + 1)
        return edges, signs

    def render(self) -> Waveform:
        """Square-pulse waveform with exact breakpoints at the pulse edges."""
        if self.tau_pi == 0:
            raise ValidationError("instantaneous pulses cannot be rendered as a waveform")
        half = self.tau_pi / 2
        bounds = [0.0]
        amps = []
        for c in self.centers:
            bounds += [c - half, c + half]
            amps += [0.0, self.amplitude]
        bounds.append(self.tau)
        amps.append(0.0)
        bounds = np.asarray(bounds)
        dur = np.diff(bounds)
        amps = np.asarray(amps)
        # only idle gaps may be dropped; a pulse always carries its pi rotation
        keep = (dur > 1e-12 * self.tau) | (amps != 0)
        meta = {**self.metadata, "n_pulses": self.n_pulses, "tau_pi": self.tau_pi}
        return Waveform(amps[keep], dur[keep], meta)

    def repeat(self, times: int) -> "PulseSequence":
        shifts = self.tau * np.arange(times)
        centers = (self.centers[None, :] + shifts[:, None]).ravel()
        meta = {**self.metadata, "repetitions": int(times)}
        return PulseSequence(centers, self.tau_pi, self.tau * times, self.buffer, meta)


def cpmg(n: int, tau: float, tau_pi: float = 0.0, buffer: float = 0.0) -> PulseSequence:
    """
    ``n``-pulse CPMG sequence with centres at ``(2j - 1) tau / 2n``.

    Raises
    ------
    Overlap
        If ``n (tau_pi + buffer) > tau``.
    """
    if n < 1:
        raise ValidationError("CPMG needs at least one pulse")
    if n * (tau_pi + buffer) > tau * (1 + 1e-12):
        raise Overlap(f"{n} pulses of width {tau_pi:g} plus buffer {buffer:g} do not fit in {tau:g}")
    j = np.arange(1, n + 1)
    centers = (2 * j - 1) * tau / (2 * n)
    return PulseSequence(centers, tau_pi, tau, buffer, {"kind": "cpmg", "n": int(n)})


def rotary_spin_echo(omega: float, period: float, tau: float) -> Waveform:
    """Alternating ``+omega`` / ``-omega`` half-periods; ``tau`` must be a multiple of ``period``."""
    cycles = tau / period
    if cycles < 1 - 1e-9 or abs(cycles - round(cycles)) > 1e-9:
        raise ValidationError("tau must be an integer multiple of period")
    cycles = int(round(cycles))
    values = np.tile([omega, -omega], cycles)
    return Waveform.uniform(values, period / 2, kind="rse", period=period, scale=omega)


def pulsed_dpss(
    dpss_set: DpssSet, k: int, omega_s: float, c_tau: float, dt: float
) -> PulseSequence:
    """
    ``2N - 1`` instantaneous pi pulses whose odd-indexed times are displaced
    by a cosine-modulated DPSS.

    Raises
    ------
    ScalingTooLarge
        If ``c_tau * max|v| >= dt``, which would reorder the pulses.
    """
    v = dpss_set.sequence(k)
    if c_tau * np.max(np.abs(v)) >= dt:
        raise ScalingTooLarge(
            f"c_tau * max|v| = {c_tau * np.max(np.abs(v)):.6g} must stay below dt = {dt:.6g}"
        )
    N = dpss_set.N
    n = np.arange(1, 2 * N)
    t = n * dt / 2
    odd = n % 2 == 1
    m = (n[odd] - 1) // 2
    t[odd] = (c_tau * np.cos(m * omega_s * dt) * v[m] + n[odd] * dt) / 2
    meta = {"kind": "pulsed_dpss", "k": k, "N": N, "W": dpss_set.W, "omega_s": omega_s,
            "c_tau": c_tau, "dt": dt}
    return PulseSequence(t, 0.0, N * dt, 0.0, meta)


@dataclass(frozen=True)
class ScanRange:
    """Largest reconstructable frequency and point spacing per protocol (rad/time)."""

    delta_tau_min: float
    cpmg_omega_max: float
    as_omega_max: float
    dpss_omega_max: float
    cpmg_resolution: float | None
    as_resolution: float | None
    dpss_resolution: float | None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def scan_range(
    tau_pi: float,
    buffer: float,
    r_idle: float = 0.0,
    dt_min_awg: float | None = None,
    *,
    dt: float | None = None,
    tau: float | None = None,
    tau_b: float | None = None,
    shift_spacing: float | None = None,
) -> ScanRange:
    """
    Scan-range and resolution bounds for pulsed and DPSS protocols.

    The DPSS limit is the Nyquist frequency ``pi/dt`` of the waveform step,
    capped by half the generator sampling rate ``pi/dt_min_awg``.
    """
    if min(tau_pi, buffer, r_idle) < 0:
        raise ValidationError("inputs must be non-negative")
    dmin = tau_pi + buffer
    pulsed = np.pi * (1 - r_idle) / dmin if dmin > 0 else np.inf
    limits = [np.pi / x for x in (dt, dt_min_awg) if x]
    dpss_max = min(limits) if limits else np.inf
    return ScanRange(
        delta_tau_min=dmin,
        cpmg_omega_max=pulsed,
        as_omega_max=pulsed,
        dpss_omega_max=dpss_max,
        cpmg_resolution=np.pi / tau if tau else None,
        as_resolution=2 * np.pi / tau_b if tau_b else None,
        dpss_resolution=shift_spacing,
    )


def write_waveform(w: Waveform, path) -> None:
    """Columnar text: ``t_start duration omega`` with one row per segment."""
    buf = io.StringIO()
    header = "t_start_s duration_s omega_rad_per_s"
    data = np.column_stack([w.edges[:-1], w.durations, w.values])
    np.savetxt(buf, data, fmt="%.17g", header=header)
    Path(path).write_text(buf.getvalue())


def read_waveform(path, **metadata) -> Waveform:
    data = np.loadtxt(path, ndmin=2)
    return Waveform(data[:, 2], data[:, 1], metadata)
