"""
Qubit evolution under control and classical noise, in the toggling frame.

The toggling-frame generator is

    H(t) = [cos Theta(t) sigma_z + sin Theta(t) sigma_y] beta_z(t) + Omega(t) beta_Omega(t) sigma_x / 2,

so the first-order error vector is ``a = (1/2 int Omega beta_Omega,
int sin Theta beta_z, int cos Theta beta_z)``. Exact propagators are products
of SU(2) exponentials over substeps, stored as quaternions
``U = q0 - i (qx sigma_x + qy sigma_y + qz sigma_z)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import GridMismatch, ProbabilityRange, ValidationError
from .filters import fundamental_ffs
from .noise import NoiseEnsemble, NoiseRealization, Spectrum
from .waveforms import Waveform

__all__ = [
    "ErrorVectorMoments",
    "TomographyRecord",
    "Projections",
    "BiasDiagnostic",
    "BiasComparison",
    "simulation_nodes",
    "propagate_exact",
    "exact_quaternions",
    "quaternion_to_unitary",
    "first_order_error_vector",
    "first_order_vectors",
    "error_vector_moments",
    "tomography",
    "expected_tomography",
    "signal_projections",
    "higher_order_diagnostic",
    "compare_bias",
]

NoiseInput = Union[NoiseEnsemble, NoiseRealization, Sequence[NoiseRealization], None]

DEFAULT_FIDELITY = 0.997
_BLOCK = 64


class _SampledEnsemble:
    """Realizations known only through samples, linearly interpolated."""

    def __init__(self, realizations: Sequence[NoiseRealization]):
        self.realizations = list(realizations)

    @property
    def size(self) -> int:
        return len(self.realizations)

    def subset(self, index) -> "_SampledEnsemble":
        idx = np.arange(self.size)[index]
        return _SampledEnsemble([self.realizations[i] for i in np.atleast_1d(idx)])

    def evaluate(self, t) -> np.ndarray:
        return np.stack([r(t) for r in self.realizations])

    def covers(self, t0: float, t1: float) -> bool:
        tol = 1e-9 * max(abs(t1), 1e-300)
        return all(r.times[0] <= t0 + tol and r.times[-1] >= t1 - tol for r in self.realizations)


def _as_ensemble(noise: NoiseInput):
    if noise is None or isinstance(noise, NoiseEnsemble):
        return noise
    if isinstance(noise, NoiseRealization):
        noise = [noise]
    noise = list(noise)
    if not noise:
        raise ValidationError("noise ensemble is empty")
    if all(r.omega is not None for r in noise):
        return NoiseEnsemble.from_realizations(noise)
    if any(r.times is None for r in noise):
        raise ValidationError("realizations need a comb or samples")
    return _SampledEnsemble(noise)


def _paired(w: Waveform, noise_z: NoiseInput, noise_omega: NoiseInput):
    ez, eo = _as_ensemble(noise_z), _as_ensemble(noise_omega)
    sizes = {e.size for e in (ez, eo) if e is not None}
    if not sizes:
        raise ValidationError("at least one noise source is required")
    if len(sizes) > 1:
        raise ValidationError("dephasing and amplitude ensembles must have the same size")
    for e in (ez, eo):
        if isinstance(e, _SampledEnsemble) and not e.covers(0.0, w.tau):
            raise GridMismatch("noise samples do not cover the waveform duration")
    return ez, eo, sizes.pop()


def _max_frequency(*ensembles) -> float:
    top = 0.0
    for e in ensembles:
        if isinstance(e, NoiseEnsemble) and e.omega.size:
            top = max(top, float(np.max(e.omega)))
        elif isinstance(e, _SampledEnsemble):
            for r in e.realizations:
                top = max(top, np.pi / float(np.min(np.diff(r.times))))
    return top


def simulation_nodes(w: Waveform, omega_c: float = 0.0, substeps: int | None = None,
                     min_substeps: int = 8, phase_step: float = 0.25):
    """
    Substep midpoints, widths and the rotation angle there.

    Each segment gets ``max(min_substeps, ceil(d max(|Omega|, omega_c) / phase_step))``
    substeps unless ``substeps`` fixes the count.
    """
    d = w.durations
    if substeps is None:
        rate = np.maximum(np.abs(w.values), omega_c)
        counts = np.maximum(min_substeps, np.ceil(d * rate / phase_step)).astype(int)
    else:
        if substeps < 1:
            raise ValidationError("substeps must be positive")
        counts = np.full(d.shape, int(substeps))
    seg = np.repeat(np.arange(d.size), counts)
    local = np.concatenate([(np.arange(c) + 0.5) / c for c in counts])
    h = (d / counts)[seg]
    t = w.edges[:-1][seg] + local * d[seg]
    theta = w.theta_edges[:-1][seg] + w.values[seg] * (t - w.edges[:-1][seg])
    return t, h, theta, w.values[seg]


def _qmul(p, q):
    """Product ``p q`` of quaternions stored in the last axis."""
    p0, pv = p[..., :1], p[..., 1:]
    q0, qv = q[..., :1], q[..., 1:]
    r0 = p0 * q0 - np.sum(pv * qv, axis=-1, keepdims=True)
    rv = p0 * qv + q0 * pv + np.cross(pv, qv)
    return np.concatenate([r0, rv], axis=-1)


def _ordered_product(steps: np.ndarray) -> np.ndarray:
    """Time-ordered product of ``(R, J, 4)`` step quaternions, later steps on the left."""
    q = steps
    while q.shape[1] > 1:
        if q.shape[1] % 2:
            ident = np.zeros((q.shape[0], 1, 4))
            ident[..., 0] = 1.0
            q = np.concatenate([q, ident], axis=1)
        q = _qmul(q[:, 1::2], q[:, 0::2])
    return q[:, 0]


def exact_quaternions(w: Waveform, noise_z: NoiseInput = None, noise_omega: NoiseInput = None,
                      substeps: int | None = None, phase_step: float = 0.25) -> np.ndarray:
    """Exact propagator of every realization, as an ``(R, 4)`` quaternion array."""
    ez, eo, R = _paired(w, noise_z, noise_omega)
    t, h, theta, om = simulation_nodes(w, _max_frequency(ez, eo), substeps, phase_step=phase_step)
    s, c = np.sin(theta), np.cos(theta)
    out = np.empty((R, 4))
    for start in range(0, R, _BLOCK):
        idx = slice(start, min(start + _BLOCK, R))
        bz = ez.subset(idx).evaluate(t) if ez is not None else 0.0
        bo = eo.subset(idx).evaluate(t) if eo is not None else 0.0
        n = min(start + _BLOCK, R) - start
        gen = np.zeros((n, t.size, 3))
        gen[..., 0] = om * bo / 2
        gen[..., 1] = s * bz
        gen[..., 2] = c * bz
        norm = np.linalg.norm(gen, axis=-1)
        angle = norm * h
        steps = np.empty((n, t.size, 4))
        steps[..., 0] = np.cos(angle)
        steps[..., 1:] = gen * (h * np.sinc(angle / np.pi))[..., None]
        out[idx] = _ordered_product(steps)
    return out


def quaternion_to_unitary(q) -> np.ndarray:
    q0, qx, qy, qz = q
    return np.array([[q0 - 1j * qz, -1j * qx - qy], [-1j * qx + qy, q0 + 1j * qz]])


def propagate_exact(w: Waveform, beta_z: NoiseRealization | None = None,
                    beta_omega: NoiseRealization | None = None, substeps: int | None = None) -> np.ndarray:
    """
    Exact toggling-frame propagator ``U(tau)`` for one realization (2x2 unitary).

    Raises
    ------
    GridMismatch
        If sampled noise does not cover ``[0, tau]``.
    """
    if beta_z is None and beta_omega is None:
        return np.eye(2, dtype=complex)
    q = exact_quaternions(w, beta_z, beta_omega, substeps)[0]
    return quaternion_to_unitary(q)


def first_order_vectors(w: Waveform, noise_z: NoiseInput = None, noise_omega: NoiseInput = None,
                        method: str = "exact", substeps: int | None = None) -> np.ndarray:
    """
    First-order error vectors ``(a_x, a_y, a_z)`` of every realization, ``(R, 3)``.

    For comb noise the time integrals are exact, ``a_y = Re sum_i A_i e^{i phi_i}
    F_zy(omega_i)`` and likewise for ``a_x``, ``a_z``. Sampled noise (or
    ``method="quadrature"``) uses midpoint quadrature on the simulation nodes.
    """
    ez, eo, R = _paired(w, noise_z, noise_omega)
    out = np.zeros((R, 3))
    use_exact = method == "exact"
    if not use_exact and method != "quadrature":
        raise ValidationError(f"unknown method {method!r}")
    if use_exact and all(e is None or isinstance(e, NoiseEnsemble) for e in (ez, eo)):
        if ez is not None:
            ffs = fundamental_ffs(w, ez.omega)
            z = ez.phasors
            out[:, 1] = (z @ ffs.zy.values).real
            out[:, 2] = (z @ ffs.zz.values).real
        if eo is not None:
            ffx = fundamental_ffs(w, eo.omega).xx
            out[:, 0] = 0.5 * (eo.phasors @ ffx.values).real
        return out
    t, h, theta, om = simulation_nodes(w, _max_frequency(ez, eo), substeps)
    if ez is not None:
        bz = ez.evaluate(t)
        out[:, 1] = bz @ (h * np.sin(theta))
        out[:, 2] = bz @ (h * np.cos(theta))
    if eo is not None:
        out[:, 0] = 0.5 * (eo.evaluate(t) @ (h * om))
    return out


def first_order_error_vector(w: Waveform, beta_z: NoiseRealization | None = None,
                             beta_omega: NoiseRealization | None = None, method: str = "exact"):
    """``(a_x, a_y, a_z)`` for a single realization."""
    if beta_z is None and beta_omega is None:
        return 0.0, 0.0, 0.0
    a = first_order_vectors(w, beta_z, beta_omega, method)[0]
    return float(a[0]), float(a[1]), float(a[2])


@dataclass(frozen=True)
class ErrorVectorMoments:
    """Ensemble means of ``a_x^2, a_y^2, a_z^2`` with standard errors."""

    mean_sq: np.ndarray
    stderr: np.ndarray
    count: int


def error_vector_moments(vectors: np.ndarray) -> ErrorVectorMoments:
    sq = np.asarray(vectors) ** 2
    n = sq.shape[0]
    se = sq.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(3, np.inf)
    return ErrorVectorMoments(sq.mean(axis=0), se, n)


@dataclass(frozen=True)
class TomographyRecord:
    """
    Survival probabilities ``P = (P_x, P_y, P_z)`` along the three axes.

    With finite ``shots`` the probabilities are sampled counts that include
    the symmetric readout error ``p -> f p + (1 - f)(1 - p)``; ``readout``
    records whether that channel was applied.
    """

    P: np.ndarray
    stderr: np.ndarray
    projection_stderr: np.ndarray
    mode: str
    n_realizations: int
    shots: int | None = None
    counts: np.ndarray | None = None
    fidelity: float = DEFAULT_FIDELITY
    readout: bool = False
    moments: ErrorVectorMoments | None = None
    metadata: dict = field(default_factory=dict)

    def rows(self, waveform_id: str = "") -> list[dict]:
        out = []
        for i, axis in enumerate("xyz"):
            out.append({
                "waveform": waveform_id,
                "axis": axis,
                "shots": self.shots if self.shots is not None else -1,
                "counts": int(self.counts[i]) if self.counts is not None else -1,
                "P": float(self.P[i]),
                "stderr": float(self.stderr[i]),
            })
        return out


def _projections_from_p(P: np.ndarray) -> np.ndarray:
    """Rows of ``P = (P_x, P_y, P_z)`` to ``(S_x, S_y, S_z)``."""
    px, py, pz = P[..., 0], P[..., 1], P[..., 2]
    return np.stack([(1 + px - py - pz) / 2, (1 + py - px - pz) / 2, (1 + pz - px - py) / 2], axis=-1)


def _finish(per_real: np.ndarray, mode: str, shots, fidelity, seed, moments, metadata) -> TomographyRecord:
    R = per_real.shape[0]
    P = per_real.mean(axis=0)
    if R > 1:
        se = per_real.std(axis=0, ddof=1) / np.sqrt(R)
        proj_se = _projections_from_p(per_real).std(axis=0, ddof=1) / np.sqrt(R)
    else:
        se = np.zeros(3)
        proj_se = np.zeros(3)
    if shots is None:
        return TomographyRecord(P, se, proj_se, mode, R, None, None, fidelity, False, moments, metadata)
    if shots < 1:
        raise ValidationError("shots must be positive")
    if not 0.5 < fidelity <= 1.0:
        raise ValidationError("readout fidelity must lie in (0.5, 1]")
    p_meas = np.clip(fidelity * P + (1 - fidelity) * (1 - P), 0.0, 1.0)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5107,)))
    counts = rng.binomial(int(shots), p_meas)
    P_hat = counts / shots
    shot_var = p_meas * (1 - p_meas) / shots
    gain = 2 * fidelity - 1
    se_hat = np.sqrt((gain * se) ** 2 + shot_var)
    proj_se = np.sqrt(proj_se**2 + 0.25 * shot_var.sum() / gain**2)
    return TomographyRecord(P_hat, se_hat, proj_se, mode, R, int(shots), counts, fidelity, True,
                            moments, metadata)


def tomography(
    w: Waveform,
    noise_z: NoiseInput = None,
    noise_omega: NoiseInput = None,
    mode: str = "exact",
    shots: int | None = None,
    fidelity: float = DEFAULT_FIDELITY,
    seed: int = 0,
    substeps: int | None = None,
) -> TomographyRecord:
    """
    Three-axis survival probabilities averaged over the noise ensemble.

    ``mode="first_order"`` uses ``P_z = 1 - a_x^2 - a_y^2`` and its cyclic
    partners; ``mode="exact"`` uses the exact propagator,
    ``P_i = q0^2 + q_i^2``. Finite ``shots`` add binomial sampling of the
    readout-corrupted probabilities.

    Raises
    ------
    ProbabilityRange
        If the first-order probabilities leave ``[0, 1]``.
    """
    meta = {"waveform": dict(w.metadata)}
    if noise_z is None and noise_omega is None:
        per_real = np.ones((1, 3))
        return _finish(per_real, mode, shots, fidelity, seed, None, meta)
    if mode == "first_order":
        a = first_order_vectors(w, noise_z, noise_omega, substeps=substeps)
        sq = a**2
        per_real = np.stack([1 - sq[:, 1] - sq[:, 2], 1 - sq[:, 0] - sq[:, 2], 1 - sq[:, 0] - sq[:, 1]], axis=1)
        P = per_real.mean(axis=0)
        if np.any(P < 0) or np.any(P > 1):
            raise ProbabilityRange("first-order probabilities leave [0, 1]; the noise is too strong")
        moments = error_vector_moments(a)
    elif mode == "exact":
        q = exact_quaternions(w, noise_z, noise_omega, substeps)
        per_real = q[:, :1] ** 2 + q[:, 1:] ** 2
        moments = None
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return _finish(per_real, mode, shots, fidelity, seed, moments, meta)


def _overlap_grid(w: Waveform, spectra: Sequence[Spectrum | None], points_per_lobe: int = 16):
    top = 0.0
    for s in spectra:
        if s is None:
            continue
        if s.omega_c is None and not s.lines:
            raise ValidationError("expectation mode needs spectra with a cutoff omega_c")
        if s.omega_c is not None:
            top = max(top, s.omega_c)
        for w0, _ in s.lines:
            top = max(top, w0)
    n = int(np.ceil(top * points_per_lobe * w.tau / (2 * np.pi))) + 2
    return np.linspace(0.0, top, max(n, 64))


def expected_tomography(
    w: Waveform,
    spectrum_z: Spectrum | None = None,
    spectrum_omega: Spectrum | None = None,
    omega=None,
    shots: int | None = None,
    fidelity: float = DEFAULT_FIDELITY,
    seed: int = 0,
) -> TomographyRecord:
    """
    First-order probabilities from the overlap integrals ``(1/pi) int F S``
    without Monte Carlo noise.
    """
    if omega is None:
        omega = _overlap_grid(w, [spectrum_z, spectrum_omega])
    omega = np.asarray(omega, dtype=float)
    ffs = fundamental_ffs(w, omega)
    m = np.zeros(3)
    if spectrum_omega is not None:
        m[0] = spectrum_omega.overlap(omega, ffs.xx.power().values)
    if spectrum_z is not None:
        m[1] = spectrum_z.overlap(omega, ffs.zy.power().values)
        m[2] = spectrum_z.overlap(omega, ffs.zz.power().values)
    P = np.array([1 - m[1] - m[2], 1 - m[0] - m[2], 1 - m[0] - m[1]])
    moments = ErrorVectorMoments(m, np.zeros(3), 0)
    return _finish(P[None, :], "expectation", shots, fidelity, seed, moments, {"waveform": dict(w.metadata)})


@dataclass(frozen=True)
class Projections:
    """Signal projections ``S_x, S_y, S_z`` with standard errors."""

    x: float
    y: float
    z: float
    stderr: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def signal_projections(rec: TomographyRecord) -> Projections:
    """
    ``S_y = (1 + P_y - P_x - P_z)/2`` and cyclic partners.

    Readout error is undone first when it was applied. Values are not
    clipped, so shot noise may leave them slightly negative.
    """
    P = np.asarray(rec.P, dtype=float)
    if rec.readout:
        P = (P - (1 - rec.fidelity)) / (2 * rec.fidelity - 1)
    s = _projections_from_p(P)
    return Projections(float(s[0]), float(s[1]), float(s[2]), np.asarray(rec.projection_stderr, dtype=float))


@dataclass(frozen=True)
class BiasDiagnostic:
    """Relative difference of exact ``S_y`` and first-order ``<a_y^2>``."""

    bias: float
    exact: np.ndarray = field(repr=False)
    first_order: np.ndarray = field(repr=False)


def _bias(exact_sq, first_sq) -> float:
    denom = float(np.mean(first_sq))
    if denom == 0.0:
        return 0.0
    return float(np.mean(exact_sq)) / denom - 1.0


def higher_order_diagnostic(w: Waveform, noise_z: NoiseInput = None, noise_omega: NoiseInput = None,
                            substeps: int | None = None) -> BiasDiagnostic:
    """
    ``(S_y^exact - <a_y^2>) / <a_y^2>``, the error from truncating the Magnus
    series at first order. For an exact propagator ``S_y = <q_y^2>``.
    """
    if noise_z is None and noise_omega is None:
        return BiasDiagnostic(0.0, np.zeros(0), np.zeros(0))
    q = exact_quaternions(w, noise_z, noise_omega, substeps)
    a = first_order_vectors(w, noise_z, noise_omega)
    exact_sq, first_sq = q[:, 2] ** 2, a[:, 1] ** 2
    return BiasDiagnostic(_bias(exact_sq, first_sq), exact_sq, first_sq)


@dataclass(frozen=True)
class BiasComparison:
    bias_a: float
    bias_b: float
    difference_upper: float
    significant: bool
    level: float


def compare_bias(diag_a: BiasDiagnostic, diag_b: BiasDiagnostic, n_boot: int = 2000, seed: int = 0,
                 level: float = 0.95) -> BiasComparison:
    """
    Paired bootstrap test that ``|bias_a| < |bias_b|``.

    Both diagnostics must come from the same noise realizations. The test
    is significant when the one-sided ``level`` upper bound of
    ``|bias_a| - |bias_b|`` is negative.
    """
    n = diag_a.exact.size
    if n != diag_b.exact.size or n < 2:
        raise ValidationError("paired diagnostics need the same realizations (at least two)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    ba = diag_a.exact[idx].mean(axis=1) / diag_a.first_order[idx].mean(axis=1) - 1
    bb = diag_b.exact[idx].mean(axis=1) / diag_b.first_order[idx].mean(axis=1) - 1
    upper = float(np.quantile(np.abs(ba) - np.abs(bb), level))
    return BiasComparison(diag_a.bias, diag_b.bias, upper, upper < 0, level)
