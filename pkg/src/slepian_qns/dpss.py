"""
Discrete prolate spheroidal sequences (Slepian tapers) and their
frequency-domain waveforms.

The sequences are obtained from the symmetric tridiagonal matrix that
commutes with the sinc concentration kernel; the concentration eigenvalues
are then recovered as Rayleigh quotients against the sinc kernel itself.
Frequencies are angular (rad per unit time) throughout this module.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidParams, OrderMissing

__all__ = [
    "DpssParams",
    "DpssSet",
    "Dpswf",
    "compute_dpss",
    "evaluate_dpswf",
    "sinc_kernel",
    "energy_concentration",
    "band_half_width",
]

# evaluate_dpswf builds (len(omega) x N) phase matrices in chunks of this many rows
_CHUNK = 512


@dataclass(frozen=True)
class DpssParams:
    """Sequence length ``N``, half-bandwidth ``W`` (cycles/sample), highest order ``k_max``."""

    N: int
    W: float
    k_max: int = 0

    def validate(self) -> None:
        if int(self.N) != self.N or self.N < 2:
            raise InvalidParams(f"N must be an integer >= 2, got {self.N!r}")
        if not 0.0 < self.W < 0.5:
            raise InvalidParams(f"W must lie in (0, 0.5), got {self.W!r}")
        if int(self.k_max) != self.k_max or not 0 <= self.k_max < self.N:
            raise InvalidParams(f"k_max must satisfy 0 <= k_max < N={self.N}, got {self.k_max!r}")
        if 2 * self.N * self.W < 1:
            warnings.warn(
                f"2NW = {2 * self.N * self.W:.3g} < 1: no sequence is well concentrated",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def NW(self) -> float:
        return self.N * self.W


@dataclass(frozen=True)
class DpssSet:
    """Sequences (rows indexed by order) and their concentration eigenvalues."""

    params: DpssParams
    sequences: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def W(self) -> float:
        return self.params.W

    @property
    def orders(self) -> range:
        return range(self.sequences.shape[0])

    def sequence(self, k: int) -> np.ndarray:
        if not 0 <= k < self.sequences.shape[0]:
            raise OrderMissing(f"order {k} not computed (k_max={self.sequences.shape[0] - 1})")
        return self.sequences[k]

    def eigenvalue(self, k: int) -> float:
        self.sequence(k)
        return float(self.eigenvalues[k])


@dataclass(frozen=True)
class Dpswf:
    """
    Discrete prolate spheroidal waveform of order ``k`` sampled on ``omega``.

    ``values`` already include the phase factor (1 for even, i for odd
    orders), which makes them real.
    """

    k: int
    dt: float
    omega: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    aliased: np.ndarray = field(repr=False)


def band_half_width(W: float, dt: float) -> float:
    """Half-width of the concentration band B_0, in rad/time."""
    return 2.0 * np.pi * W / dt


def sinc_kernel(N: int, W: float) -> np.ndarray:
    """Dense concentration kernel ``sin(2 pi W (n-m)) / (pi (n-m))``."""
    lag = np.arange(N)[:, None] - np.arange(N)[None, :]
    return 2.0 * W * np.sinc(2.0 * W * lag)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # first element whose magnitude is not negligible must be positive
    out = vectors.copy()
    for row in out:
        tol = 1e-10 * np.max(np.abs(row))
        first = np.flatnonzero(np.abs(row) > tol)[0]
        if row[first] < 0:
            row *= -1.0
    return out


def compute_dpss(params: DpssParams) -> DpssSet:
    """
    Compute DPSS orders ``0..k_max`` for ``(N, W)``.

    Parameters
    ----------
    params : DpssParams

    Returns
    -------
    DpssSet
        Unit-norm sequences, first non-negligible element positive, with
        eigenvalues in non-increasing order.

    Raises
    ------
    InvalidParams
        If ``W`` is outside (0, 0.5) or ``k_max >= N``.
    """
    params.validate()
    N, W, k_max = int(params.N), float(params.W), int(params.k_max)

    n = np.arange(N, dtype=float)
    diag = ((N - 1 - 2 * n) / 2.0) ** 2 * np.cos(2 * np.pi * W)
    off = n[1:] * (N - n[1:]) / 2.0
    _, vecs = linalg.eigh_tridiagonal(
        diag, off, select="i", select_range=(N - 1 - k_max, N - 1)
    )
    # eigh_tridiagonal returns ascending order; order 0 has the largest eigenvalue
    seqs = _fix_signs(vecs[:, ::-1].T)
    seqs /= np.linalg.norm(seqs, axis=1, keepdims=True)

    kernel_col = 2.0 * W * np.sinc(2.0 * W * n)
    if N <= 256:
        kv = sinc_kernel(N, W) @ seqs.T
    else:
        kv = linalg.matmul_toeplitz((kernel_col, kernel_col), seqs.T)
    eigenvalues = np.einsum("kn,nk->k", seqs, kv)
    return DpssSet(params=DpssParams(N, W, k_max), sequences=seqs, eigenvalues=eigenvalues)


def evaluate_dpswf(dpss_set: DpssSet, k: int, dt: float, omega) -> Dpswf:
    """
    Evaluate ``U^(k)(N, W; omega)`` for angular frequencies ``omega``.

    Frequencies outside the principal domain ``(-pi/dt, pi/dt)`` are
    evaluated (the waveform is periodic) and flagged in ``aliased``.
    """
    v = dpss_set.sequence(k)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    N = v.size
    centred = (np.arange(N) - (N - 1) / 2.0) * dt
    trig = np.cos if k % 2 == 0 else np.sin
    out = np.empty(omega.shape, dtype=float)
    flat_w, flat_out = omega.ravel(), out.reshape(-1)
    for start in range(0, flat_w.size, _CHUNK):
        stop = start + _CHUNK
        flat_out[start:stop] = trig(np.outer(flat_w[start:stop], centred)) @ v
    if k % 2 == 1:
        # eps_k = i times the purely imaginary sum i*sum(v sin) gives -sum(v sin)
        out = -out
    aliased = np.abs(omega) > np.pi / dt
    return Dpswf(k=k, dt=dt, omega=omega, values=out, aliased=aliased)


def energy_concentration(dpss_set: DpssSet, k: int, n_nodes: int | None = None) -> float:
    """
    Fraction of the DPSWF energy inside ``B_0``, by Gauss-Legendre quadrature.

    The result is independent of the time step, so the computation runs in
    units where ``dt = 1``. The total energy over the principal domain is
    ``2 pi`` exactly for a unit-norm sequence.
    """
    N, W = dpss_set.N, dpss_set.W
    if n_nodes is None:
        n_nodes = max(64, 4 * int(np.ceil(2 * N * W)) + 32)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    edge = 2 * np.pi * W
    u = evaluate_dpswf(dpss_set, k, 1.0, edge * x).values
    return float(edge * np.sum(w * u**2) / (2 * np.pi))
