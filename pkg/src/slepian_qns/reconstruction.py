"""
Spectrum estimation from measured signal projections.

Single-taper estimates divide a measured second moment by the in-band
weight of its filter, ``S(omega_s) = S_y / [(1/pi) int_B F d omega]``. The
two-stage Bayesian procedure combines coarse and fine filters on a set of
frequency segments; the A-S inversion solves a small linear system at
harmonic frequencies.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateBand, IllConditioned, SingularSystem, ValidationError
from .filters import FilterFunction, band_integral, interval_integral

__all__ = [
    "Estimate",
    "ReconstructionResult",
    "SegmentGrid",
    "BayesianModel",
    "single_taper",
    "amplitude_estimate",
    "multi_axis",
    "PriorInformation",
    "prior_information",
    "build_prior",
    "posterior_update",
    "bayesian_objective_prior",
    "bayesian_objective_posterior",
    "multitaper_estimate",
    "ASSystem",
    "as_system",
    "as_inversion",
    "cpmg_passband",
    "cpmg_npulse_estimate",
    "fig2_segments",
]

PRIOR_CONDITION_LIMIT = 1e12
AS_CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


@dataclass(frozen=True)
class ReconstructionResult:
    """Spectrum estimates at angular frequencies ``omega``."""

    omega: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    method: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        est = np.asarray(self.estimate, dtype=float)
        se = np.asarray(self.stderr, dtype=float)
        if not (om.shape == est.shape == se.shape):
            raise ValidationError("frequencies, estimates and errors must have equal length")
        if np.any(se < 0):
            raise ValidationError("standard errors must be non-negative")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "estimate", est)
        object.__setattr__(self, "stderr", se)

    def floored(self) -> np.ndarray:
        """Estimates clipped at zero, for display only."""
        return np.maximum(self.estimate, 0.0)

    def write(self, path) -> None:
        """Columnar text ``f_Hz estimate stderr`` with the method in the header."""
        buf = io.StringIO()
        data = np.column_stack([self.omega / (2 * np.pi), self.estimate, self.stderr])
        np.savetxt(buf, data, fmt="%.17g", header=f"f_Hz estimate stderr method={self.method}")
        Path(path).write_text(buf.getvalue())


def _taper_estimate(signal: float, signal_err: float, ff: FilterFunction, band, min_integral: float) -> Estimate:
    area = band_integral(ff, band)
    if not np.isfinite(area) or area <= min_integral:
        raise DegenerateBand(f"in-band filter weight {area:.3g} is too small for an estimate")
    return Estimate(signal / area, abs(signal_err) / area)


def single_taper(s_y: float, ff: FilterFunction, band=None, stderr: float = 0.0,
                 min_integral: float = 1e-300) -> Estimate:
    """
    ``S_z(omega_s) = pi S_y / int_B F_z d omega``.

    ``band`` defaults to the filter's passband. The standard error is
    propagated linearly.
    """
    return _taper_estimate(s_y, stderr, ff, band, min_integral)


def amplitude_estimate(s_x: float, ff: FilterFunction, band=None, stderr: float = 0.0,
                       min_integral: float = 1e-300) -> Estimate:
    """Amplitude-noise analogue of :func:`single_taper`, using ``F_Omega``."""
    return _taper_estimate(s_x, stderr, ff, band, min_integral)


def multi_axis(projections: Sequence, dephasing_ffs: Sequence[FilterFunction],
               amplitude_ffs: Sequence[FilterFunction], bands=None):
    """
    Dephasing and amplitude spectra from the same three-axis records.

    ``projections`` holds one object per shift with attributes ``x``, ``y``
    and ``stderr`` (as returned by ``signal_projections``).
    """
    if not (len(projections) == len(dephasing_ffs) == len(amplitude_ffs)):
        raise ValidationError("one projection and two filters per shift are required")
    bands = bands or [None] * len(projections)
    om, z, zse, a, ase = [], [], [], [], []
    for p, fz, fo, band in zip(projections, dephasing_ffs, amplitude_ffs, bands):
        b = band or fz.band
        ez = single_taper(p.y, fz, b, p.stderr[1])
        ea = amplitude_estimate(p.x, fo, b, p.stderr[0])
        om.append(0.5 * (b[0] + b[1]) if fz.metadata.get("omega_s") is None else fz.metadata["omega_s"])
        z.append(ez.value)
        zse.append(ez.stderr)
        a.append(ea.value)
        ase.append(ea.stderr)
    return (ReconstructionResult(om, z, zse, "single_taper_z"),
            ReconstructionResult(om, a, ase, "single_taper_omega"))


@dataclass(frozen=True)
class SegmentGrid:
    """Contiguous segments ``[b_l, b_{l+1})`` in rad/time."""

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
            raise ValidationError("segment boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", b)

    @property
    def n_segments(self) -> int:
        return self.boundaries.size - 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.boundaries[:-1] + self.boundaries[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def segment_of(self, omega) -> np.ndarray:
        """Index of the segment containing each frequency, ``-1`` outside."""
        omega = np.asarray(omega, dtype=float)
        idx = np.searchsorted(self.boundaries, omega, side="right") - 1
        return np.where((idx >= 0) & (idx < self.n_segments), idx, -1)

    def matrix(self, ffs: Sequence[FilterFunction]) -> np.ndarray:
        """``(F)_{s,l} = (1/pi) int_{sigma_l} F_s d omega``."""
        F = np.zeros((len(ffs), self.n_segments))
        for s, ff in enumerate(ffs):
            vals = ff.power().values
            for l in range(self.n_segments):
                F[s, l] = interval_integral(ff.omega, vals, self.boundaries[l], self.boundaries[l + 1]) / np.pi
        return F

    def averages(self, spectrum, n_points: int = 257) -> np.ndarray:
        """Mean of a spectrum over every segment."""
        out = np.empty(self.n_segments)
        for l in range(self.n_segments):
            x = np.linspace(self.boundaries[l], self.boundaries[l + 1], n_points)
            out[l] = np.trapezoid(spectrum(x), x) / (x[-1] - x[0])
        return out

    @classmethod
    def from_centers(cls, centers, lower: float = 0.0, upper: float | None = None) -> "SegmentGrid":
        """Boundaries halfway between sorted centres."""
        c = np.sort(np.asarray(centers, dtype=float))
        mids = 0.5 * (c[:-1] + c[1:])
        if upper is None:
            upper = c[-1] + (c[-1] - c[-2]) / 2
        return cls(np.concatenate([[lower], mids, [upper]]))


def fig2_segments(coarse_centers, fine_centers, upper: float) -> SegmentGrid:
    """
    Segments centred on the fine shifts inside the fine range and on the
    coarse shifts elsewhere (coarse shifts inside the fine range are dropped).
    """
    fine = np.sort(np.asarray(fine_centers, dtype=float))
    coarse = np.asarray(coarse_centers, dtype=float)
    spacing = np.min(np.diff(fine)) if fine.size > 1 else 0.0
    lo, hi = fine[0] - spacing / 2, fine[-1] + spacing / 2
    keep = coarse[(coarse < lo) | (coarse > hi)]
    return SegmentGrid.from_centers(np.concatenate([keep, fine]), 0.0, upper)


@dataclass(frozen=True)
class BayesianModel:
    """
    Inputs of the two-stage estimate.

    ``sigma_c`` and ``sigma_f`` are standard deviations of the coarse and
    fine measurements (the covariances are diagonal); ``D`` is the diagonal
    of the regulariser selector and ``S_bar`` its reference vector.
    """

    F_c: np.ndarray
    y_c: np.ndarray
    sigma_c: np.ndarray
    lam: float
    D: np.ndarray
    S_bar: np.ndarray
    F_f: np.ndarray | None = None
    y_f: np.ndarray | None = None
    sigma_f: np.ndarray | None = None

    def __post_init__(self):
        for name in ("F_c", "y_c", "sigma_c", "D", "S_bar", "F_f", "y_f", "sigma_f"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float))
        if np.any(self.sigma_c <= 0) or (self.sigma_f is not None and np.any(self.sigma_f <= 0)):
            raise ValidationError("measurement standard deviations must be positive")
        L = self.F_c.shape[1]
        if self.D.shape != (L,) or np.broadcast_to(self.S_bar, (L,)).shape != (L,):
            raise ValidationError("D and S_bar must have one entry per segment")
        object.__setattr__(self, "S_bar", np.broadcast_to(self.S_bar, (L,)).astype(float))


def _solve_spd(A: np.ndarray, b: np.ndarray, what: str):
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > PRIOR_CONDITION_LIMIT:
        raise SingularSystem(f"{what} matrix is numerically singular (condition {cond:.3g})")
    inv = np.linalg.inv(A)
    inv = 0.5 * (inv + inv.T)
    return inv @ b, inv


@dataclass(frozen=True)
class PriorInformation:
    """
    Prior in information form: precision ``A`` and information vector ``b``,
    with mean ``A^-1 b`` when ``A`` is invertible.
    """

    precision: np.ndarray
    information: np.ndarray

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.precision))


def prior_information(model: BayesianModel) -> PriorInformation:
    """``A = F^T Sigma^-1 F + 2 lam^2 D^2`` and ``b = F^T Sigma^-1 y + 2 lam^2 D^2 S_bar``."""
    winv = 1.0 / model.sigma_c**2
    reg = 2 * model.lam**2 * model.D**2
    A = model.F_c.T @ (winv[:, None] * model.F_c) + np.diag(reg)
    b = model.F_c.T @ (winv * model.y_c) + reg * model.S_bar
    return PriorInformation(A, b)


def build_prior(model: BayesianModel):
    """
    Regularised maximum-likelihood prior from the coarse data.

    Minimises ``1/2 (y - F S)^T Sigma^-1 (y - F S) + ||lam D (S - S_bar)||^2``:
    ``S0 = (F^T Sigma^-1 F + 2 lam^2 D^2)^-1 (F^T Sigma^-1 y + 2 lam^2 D^2 S_bar)``,
    ``Sigma0 = (F^T Sigma^-1 F + 2 lam^2 D^2)^-1``.

    Raises
    ------
    SingularSystem
        If the regularised matrix has condition number above 1e12, which
        happens whenever the coarse rows plus the regularised segments do
        not reach the number of segments.
    """
    info = prior_information(model)
    return _solve_spd(info.precision, info.information, "prior")


def posterior_update(prior, F_f, y_f, sigma_f):
    """
    Gaussian update of the prior with fine data:
    ``S = (F^T Sigma_f^-1 F + Sigma0^-1)^-1 (F^T Sigma_f^-1 y + Sigma0^-1 S0)``.

    ``prior`` is either ``(S0, Sigma0)`` or a :class:`PriorInformation`; the
    latter form also works when the prior alone is rank deficient, as long
    as the fine data complete the rank.
    """
    F_f = np.asarray(F_f, dtype=float)
    y_f = np.asarray(y_f, dtype=float)
    sigma_f = np.asarray(sigma_f, dtype=float)
    if np.any(sigma_f <= 0):
        raise ValidationError("fine standard deviations must be positive")
    if isinstance(prior, PriorInformation):
        P0, h0 = prior.precision, prior.information
    else:
        S0, Sigma0 = prior
        P0 = np.linalg.inv(Sigma0)
        P0 = 0.5 * (P0 + P0.T)
        h0 = P0 @ S0
    winv = 1.0 / sigma_f**2
    A = F_f.T @ (winv[:, None] * F_f) + P0
    b = F_f.T @ (winv * y_f) + h0
    return _solve_spd(A, b, "posterior")


def bayesian_objective_prior(S, model: BayesianModel) -> float:
    r = model.y_c - model.F_c @ S
    reg = model.lam * model.D * (S - model.S_bar)
    return float(0.5 * np.sum(r**2 / model.sigma_c**2) + reg @ reg)


def bayesian_objective_posterior(S, prior, F_f, y_f, sigma_f) -> float:
    S0, Sigma0 = prior
    r = np.asarray(y_f) - np.asarray(F_f) @ S
    d = S - S0
    return float(0.5 * np.sum(r**2 / np.asarray(sigma_f) ** 2) + 0.5 * d @ np.linalg.solve(Sigma0, d))


def multitaper_estimate(signals: Sequence[float], ffs: Sequence[FilterFunction], weights=None,
                        band=None, stderrs: Sequence[float] | None = None) -> Estimate:
    """``sum_k c_k S_y^(k)`` divided by the band integral of ``sum_k c_k F^(k)``."""
    if not signals or len(signals) != len(ffs):
        raise ValidationError("one measurement per order is required")
    c = np.ones(len(signals)) if weights is None else np.asarray(weights, dtype=float)
    band = band or ffs[0].band
    area = sum(ci * band_integral(ff, band) for ci, ff in zip(c, ffs))
    if area <= 0:
        raise DegenerateBand("multitaper filter has no in-band weight")
    value = float(np.dot(c, signals)) / area
    err = 0.0 if stderrs is None else float(np.sqrt(np.sum((c * np.asarray(stderrs)) ** 2))) / area
    return Estimate(value, err)


@dataclass(frozen=True)
class ASSystem:
    """Linear model ``y = A S`` at harmonics ``q omega_0``, ``q = 1..m_max``."""

    matrix: np.ndarray
    omega: np.ndarray
    condition: float


def as_system(base_ffs: Sequence, tau_b: float, repetitions: Sequence[int], m_max: int | None = None) -> ASSystem:
    """
    Coefficient matrix of the frequency-comb inversion.

    ``base_ffs[j]`` is a callable returning ``|F_zz(omega)|^2`` of one
    repetition of base sequence ``j + 1``, which lasts ``tau_b / (j + 1)``
    and is repeated ``repetitions[j]`` times. Row ``j`` reads
    ``(2 M_j m / tau_b) sum_q |F_zz(q m omega_0)|^2 S(q m omega_0)`` over
    harmonics ``q m <= m_max`` with ``m = j + 1``.
    """
    n_seq = len(base_ffs)
    m_max = n_seq if m_max is None else int(m_max)
    if n_seq < m_max:
        raise ValidationError("need at least m_max base sequences")
    omega0 = 2 * np.pi / tau_b
    A = np.zeros((n_seq, m_max))
    for j, ff in enumerate(base_ffs):
        m = j + 1
        tb = tau_b / m
        for q in range(1, m_max // m + 1):
            col = q * m - 1
            A[j, col] = 2 * repetitions[j] / tb * float(np.squeeze(ff(np.array([q * m * omega0]))))
    cond = float(np.linalg.cond(A))
    return ASSystem(A, omega0 * np.arange(1, m_max + 1), cond)


def as_inversion(system: ASSystem, measurements, stderr=None,
                 condition_limit: float = AS_CONDITION_LIMIT) -> ReconstructionResult:
    """
    Least-squares solution of the A-S system.

    Raises
    ------
    IllConditioned
        If the condition number exceeds ``condition_limit``.
    """
    if not np.isfinite(system.condition) or system.condition > condition_limit:
        raise IllConditioned(f"A-S system condition number {system.condition:.3g} exceeds {condition_limit:.3g}")
    y = np.asarray(measurements, dtype=float)
    sol, *_ = np.linalg.lstsq(system.matrix, y, rcond=None)
    if stderr is None:
        se = np.zeros(sol.shape)
    else:
        pinv = np.linalg.pinv(system.matrix)
        se = np.sqrt((pinv**2) @ (np.asarray(stderr, dtype=float) ** 2))
    return ReconstructionResult(system.omega, sol, se, "alvarez_suter",
                                {"condition": system.condition})


def cpmg_passband(omega, ff_values, center: float) -> tuple[float, float]:
    """Interval between the filter minima on either side of the peak nearest ``center``."""
    omega = np.asarray(omega, dtype=float)
    f = np.asarray(ff_values, dtype=float)
    i0 = int(np.argmin(np.abs(omega - center)))
    # climb to the local maximum first
    while 0 < i0 < f.size - 1 and max(f[i0 - 1], f[i0 + 1]) > f[i0]:
        i0 = i0 - 1 if f[i0 - 1] > f[i0 + 1] else i0 + 1
    lo = i0
    while lo > 0 and f[lo - 1] <= f[lo]:
        lo -= 1
    hi = i0
    while hi < f.size - 1 and f[hi + 1] <= f[hi]:
        hi += 1
    return float(omega[lo]), float(omega[hi])


def cpmg_npulse_estimate(ns: Sequence[int], tau: float, signals, ffs: Sequence[FilterFunction],
                         stderrs=None) -> ReconstructionResult:
    """
    Estimates at ``omega = n pi / tau`` from the z-axis signal of each
    ``n``-pulse sequence and its ``|F_zz|^2``, integrated over the passband
    between the minima around the main peak.
    """
    if not (len(ns) == len(signals) == len(ffs)):
        raise ValidationError("one signal and filter per pulse number are required")
    om, est, se = [], [], []
    for i, (n, s, ff) in enumerate(zip(ns, signals, ffs)):
        center = n * np.pi / tau
        vals = ff.power().values
        band = cpmg_passband(ff.omega, vals, center)
        area = interval_integral(ff.omega, vals, *band) / np.pi
        if area <= 0:
            raise DegenerateBand(f"no passband weight for n={n}")
        om.append(center)
        est.append(s / area)
        se.append(0.0 if stderrs is None else abs(stderrs[i]) / area)
    return ReconstructionResult(om, est, se, "cpmg_npulse")
