"""
Configuration-driven pipelines behind the command-line interface.

Each stage is a pure function of a validated :class:`ExperimentConfig`:
``dpss_tables``, ``filter_tables``, ``simulate``, ``reconstruct`` and
``compare``. Output is a mapping of name to :class:`Table`, written as
whitespace-separated text with ``%.17g`` numbers so reruns with the same
seed are byte-identical.
"""
from __future__ import annotations

import copy
import io
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import TWO_PI, CompareConfig, ExperimentConfig, WaveformConfig
from .dpss import DpssParams, DpssSet, compute_dpss, energy_concentration, evaluate_dpswf
from .errors import ConfigError, ValidationError
from .filters import (
    FilterFunction,
    amplitude_ff,
    cpmg_ff_model,
    default_grid,
    dephasing_ff,
    dephasing_zz_ff,
    fd_amplitude_ff,
    fd_dephasing_ff,
    fundamental_ffs,
    switching_ff,
)
from .noise import Spectrum, delta_tone, phase_sweep_tone, realize_ensemble
from .reconstruction import (
    BayesianModel,
    PRIOR_CONDITION_LIMIT,
    ReconstructionResult,
    amplitude_estimate,
    as_inversion,
    as_system,
    build_prior,
    cpmg_npulse_estimate,
    fig2_segments,
    multi_axis,
    posterior_update,
    prior_information,
    single_taper,
)
from .simulator import Projections, expected_tomography, signal_projections, tomography
from .waveforms import (
    PLATFORMS,
    PulseSequence,
    Waveform,
    cosine_shift,
    cpmg,
    dpss_waveform,
    fd_waveform,
    finite_difference_embedded_dd,
    pulsed_dpss,
    rotary_spin_echo,
    scan_range,
)

__all__ = [
    "PRESETS",
    "preset",
    "Table",
    "TomographyDataset",
    "Comparison",
    "build_control",
    "frequency_grid",
    "dpss_tables",
    "filter_tables",
    "simulate",
    "reconstruct",
    "reconstruction_tables",
    "compare",
]


def _khz(values):
    return [1e3 * v for v in values]


PRESETS: dict[str, dict] = {
    "dpss128": {
        "name": "dpss128",
        "dpss": {"n_points": 128, "nw": 4.0, "k_max": 5, "dt_s": 1.0, "grid_points": 2048},
    },
    "fig1": {
        "name": "fig1",
        "seed": 1,
        "dpss": {"n_points": 600, "nw": 2.0, "k_max": 5, "dt_s": 5e-6},
        "waveforms": [
            {"kind": "fd", "id": "fd", "n_points": 600, "nw": 2.0, "dt_s": 5e-6, "shift_hz": 1e4,
             "normalization": "max_theta", "target": 0.3},
        ],
        "grid": {"f_max_hz": 2.5e4, "points": 4096},
        "simulation": {
            "mode": "exact",
            "shots": 500,
            "sweep": {"f_min_hz": 2e3, "f_max_hz": 2e4, "points": 73, "phases": 5, "power": 2e6},
        },
    },
    "fig2": {
        "name": "fig2",
        "seed": 3,
        "dpss": {"n_points": 1000, "nw": 2.0, "k_max": 0, "dt_s": 5e-6},
        "waveforms": [
            {"kind": "fd", "id": "coarse", "n_points": 500, "nw": 4.0, "dt_s": 5e-6,
             "shifts_hz": _khz([0, 2.1, 4.2, 6.2, 8.3, 10.4, 12.5, 14.6, 16.7]),
             "normalization": "max_theta", "target": 0.3},
            {"kind": "fd", "id": "fine", "n_points": 1000, "nw": 2.0, "dt_s": 5e-6,
             "shifts_hz": _khz([8.1, 8.4, 8.6, 8.9, 9.2, 9.4, 9.9, 10.2, 10.5, 10.9, 11.2, 11.5]),
             "normalization": "max_theta", "target": 0.3},
        ],
        "grid": {"points": 16384},
        "simulation": {"mode": "exact", "realizations": 800,
                       "spectra": {"z": {"form": "builtin", "name": "fig2"}}},
        "reconstruction": {"method": "bayesian", "coarse_id": "coarse", "fine_id": "fine", "lambda": 0.35,
                           "regularized_segments": [4, 5, 6, 7, 8, 9, 10]},
    },
    "fig3": {
        "name": "fig3",
        "seed": 4,
        "dpss": {"n_points": 600, "nw": 2.0, "k_max": 0, "dt_s": 5e-6},
        "waveforms": [
            {"kind": "fd", "id": "shift", "n_points": 600, "nw": 2.0, "dt_s": 5e-6,
             "shifts_hz": [float(f) for f in np.linspace(1e3, 16e3, 13)],
             "normalization": "theta_energy", "target": 1.5e-5},
        ],
        "grid": {"points": 16384},
        "simulation": {"mode": "exact", "realizations": 500,
                       "spectra": {"z": {"form": "builtin", "name": "fig3_dephasing"},
                                   "omega": {"form": "builtin", "name": "fig3_amplitude"}}},
        "reconstruction": {"method": "multi_axis"},
    },
    "fig4e": {
        "name": "fig4e",
        "seed": 5,
        "grid": {"points": 4096},
        "simulation": {"mode": "expectation", "realizations": 200},
        "compare": {
            "platform": "ion", "tau_s": 3e-3, "n_points": 600, "nw": 2.0, "max_theta": 0.05,
            "shift_start_hz": 100.0, "shift_step_hz": 211.0, "shift_count": 100,
            "as_tau_b_s": 0.75e-3, "as_m_max": 10, "as_rep_factor": 4,
            "r_idle": [0.0, 0.05, 0.1, 0.2],
            "truths": {"low": {"form": "builtin", "name": "fig4e"},
                       "high": {"form": "builtin", "name": "fig4e_high"}},
        },
    },
    "fig4f": {
        "name": "fig4f",
        "seed": 6,
        "grid": {"points": 8192},
        "simulation": {"mode": "expectation", "realizations": 100},
        "compare": {
            "platform": "superconducting", "tau_s": 10e-6, "n_points": 2000, "nw": 2.0, "max_theta": 0.05,
            "shift_start_hz": 0.1e6, "shift_step_hz": 0.615e6, "shift_count": 100, "n_max": 550,
            "as_tau_b_s": 1e-6, "as_m_max": 27, "as_rep_factor": 10,
            "r_idle": [0.0, 0.05, 0.1, 0.2],
            "truths": {"sc": {"form": "builtin", "name": "fig4f"}},
        },
    },
}


def preset(name: str) -> dict:
    """A fresh copy of the named preset mapping."""
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", "preset") from None


# --------------------------------------------------------------------------- tables

@dataclass(frozen=True)
class Table:
    """Named float columns with optional string row labels in a leading ``id`` column."""

    columns: tuple[str, ...]
    data: np.ndarray
    labels: tuple[str, ...] | None = None
    note: str = ""

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.data, dtype=float))
        if d.size == 0:
            d = d.reshape(0, len(self.columns))
        if d.shape[1] != len(self.columns):
            raise ValidationError("table data width does not match its columns")
        if self.labels is not None and len(self.labels) != d.shape[0]:
            raise ValidationError("one label per row is required")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "data", d)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def to_text(self) -> str:
        buf = io.StringIO()
        if self.note:
            buf.write(f"# {self.note}\n")
        head = (("id",) if self.labels is not None else ()) + self.columns
        buf.write("# " + " ".join(head) + "\n")
        for i, row in enumerate(self.data):
            cells = [f"{x:.17g}" for x in row]
            if self.labels is not None:
                cells.insert(0, self.labels[i])
            buf.write(" ".join(cells) + "\n")
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "Table":
        lines = Path(path).read_text().splitlines()
        header = [ln for ln in lines if ln.startswith("#")]
        if not header:
            raise ValidationError(f"{path}: missing column header")
        names = header[-1][1:].split()
        note = header[0][1:].strip() if len(header) > 1 else ""
        rows = [ln.split() for ln in lines if ln.strip() and not ln.startswith("#")]
        labelled = bool(names) and names[0] == "id"
        cols = tuple(names[1:] if labelled else names)
        try:
            data = np.array([[float(x) for x in (r[1:] if labelled else r)] for r in rows], dtype=float)
        except ValueError as exc:
            raise ValidationError(f"{path}: malformed number ({exc})") from None
        labels = tuple(r[0] for r in rows) if labelled else None
        return cls(cols, data.reshape(len(rows), len(cols)), labels, note)


# --------------------------------------------------------------------------- controls

@lru_cache(maxsize=32)
def _dpss_set(n: int, w: float, k_max: int) -> DpssSet:
    return compute_dpss(DpssParams(n, w, k_max))


def build_control(wc: WaveformConfig) -> Waveform | PulseSequence:
    """The waveform or pulse sequence described by ``wc`` (frequencies converted to rad/s)."""
    cap = None if wc.omega_max_hz is None else TWO_PI * wc.omega_max_hz
    shift = TWO_PI * wc.shift_hz
    if wc.kind == "cpmg":
        return cpmg(wc.n_pulses, wc.tau_s, wc.tau_pi_s, wc.buffer_s)
    if wc.kind == "rotary":
        return rotary_spin_echo(TWO_PI * wc.rabi_hz, wc.period_s, wc.tau_s)
    s = _dpss_set(wc.n_points, wc.half_bandwidth, wc.order)
    if wc.kind == "pulsed_dpss":
        return pulsed_dpss(s, wc.order, shift, wc.c_tau_s, wc.dt_s)
    if wc.kind == "dpss":
        # plain DPSS modulation: target is the amplitude scale in rad/s
        return dpss_waveform(s, wc.order, wc.target, wc.dt_s, cap)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if wc.kind == "cos":
            return cosine_shift(s, wc.order, shift, wc.dt_s, wc.normalization, wc.target, cap)
        if wc.kind == "fd":
            return fd_waveform(s, wc.order, shift, wc.dt_s, wc.normalization, wc.target, cap)
        return finite_difference_embedded_dd(s, wc.order, shift, wc.dt_s, wc.normalization, wc.target, cap)


def _as_waveform(ctrl: Waveform | PulseSequence) -> Waveform:
    if isinstance(ctrl, PulseSequence):
        if ctrl.tau_pi == 0:
            raise ValidationError("instantaneous pulses cannot be simulated; give tau_pi_s > 0")
        return ctrl.render()
    return ctrl


def _controls(cfg: ExperimentConfig) -> list[tuple[WaveformConfig, Waveform | PulseSequence]]:
    wcs = cfg.expanded_waveforms()
    if not wcs:
        raise ConfigError("at least one waveform is required", "waveforms")
    return [(wc, build_control(wc)) for wc in wcs]


def frequency_grid(cfg: ExperimentConfig, controls=()) -> np.ndarray:
    """``[0, 2 pi f_max]``; the default top is the Nyquist frequency of the finest uniform step."""
    if cfg.grid.f_max_hz is not None:
        top = TWO_PI * cfg.grid.f_max_hz
    else:
        steps = [c.dt for c in controls if isinstance(c, Waveform) and c.dt is not None]
        steps += [c.metadata["dt"] for c in controls if isinstance(c, PulseSequence) and "dt" in c.metadata]
        if not steps:
            raise ConfigError("grid.f_max_hz is required when no waveform has a uniform step", "grid.f_max_hz")
        top = np.pi / min(steps)
    return np.linspace(0.0, top, cfg.grid.points)


# --------------------------------------------------------------------------- dpss / filters

def dpss_tables(cfg: ExperimentConfig) -> dict[str, Table]:
    """Sequences, eigenvalues with measured concentration, and DPSWF on ``[0, pi/dt]``."""
    if cfg.dpss is None:
        raise ConfigError("a dpss section is required", "dpss")
    d = cfg.dpss
    s = _dpss_set(d.n_points, d.half_bandwidth, d.k_max)
    ks = range(d.k_max + 1)
    seq = Table(("n",) + tuple(f"v_{k}" for k in ks),
                np.column_stack([np.arange(d.n_points)] + [s.sequence(k) for k in ks]))
    eig = Table(("k", "lambda", "concentration"),
                np.array([[k, s.eigenvalue(k), energy_concentration(s, k)] for k in ks]))
    omega = np.linspace(0.0, np.pi / d.dt_s, d.grid_points)
    wf = Table(("f_Hz",) + tuple(f"U_{k}" for k in ks),
               np.column_stack([omega / TWO_PI] + [evaluate_dpswf(s, k, d.dt_s, omega).values for k in ks]))
    return {"sequences": seq, "eigenvalues": eig, "dpswf": wf}


def _filter_table(wc: WaveformConfig, ctrl, omega) -> Table:
    f_hz = omega / TWO_PI
    if isinstance(ctrl, PulseSequence) and ctrl.tau_pi == 0:
        zz = switching_ff(ctrl, omega).power().values
        zero = np.zeros_like(omega)
        return Table(("f_Hz", "F_Omega", "F_z", "F_zz"), np.column_stack([f_hz, zero, zero, zz]))
    w = _as_waveform(ctrl)
    ffs = fundamental_ffs(w, omega)
    cols = ["f_Hz", "F_Omega", "F_z", "F_zz"]
    data = [f_hz, ffs.xx.power().values, ffs.zy.power().values, ffs.zz.power().values]
    if wc.kind == "fd":
        s = _dpss_set(wc.n_points, wc.half_bandwidth, wc.order)
        args = (s, wc.order, TWO_PI * wc.shift_hz, w.metadata["scale"], wc.dt_s, omega)
        cols += ["F_z_closed", "F_Omega_closed"]
        data += [fd_dephasing_ff(*args).values, fd_amplitude_ff(*args).values]
    if wc.kind == "cpmg":
        model = cpmg_ff_model(wc.n_pulses, wc.tau_s, wc.tau_pi_s, buffer=wc.buffer_s)
        cols.append("F_zz_model")
        data.append(model.squared_ff(omega))
    return Table(tuple(cols), np.column_stack(data))


def _waveform_table(ctrl) -> Table:
    if isinstance(ctrl, PulseSequence):
        return Table(("t_center_s",), ctrl.centers[:, None], note=f"tau_pi_s={ctrl.tau_pi!r} tau_s={ctrl.tau!r}")
    return Table(("t_start_s", "duration_s", "omega_rad_per_s"),
                 np.column_stack([ctrl.edges[:-1], ctrl.durations, ctrl.values]))


def filter_tables(cfg: ExperimentConfig) -> dict[str, Table]:
    """Waveform and filter-function tables, one pair per waveform."""
    controls = _controls(cfg)
    omega = frequency_grid(cfg, [c for _, c in controls])
    out = {}
    for wc, ctrl in controls:
        out[f"waveform_{wc.id}"] = _waveform_table(ctrl)
        out[f"filter_{wc.id}"] = _filter_table(wc, ctrl, omega)
    return out


# --------------------------------------------------------------------------- simulate

_DATA_COLUMNS = ("P_x", "P_y", "P_z", "P_se_x", "P_se_y", "P_se_z",
                 "S_x", "S_y", "S_z", "S_se_x", "S_se_y", "S_se_z")


@dataclass(frozen=True)
class TomographyDataset:
    """Per-waveform probabilities and signal projections, plus optional extra columns."""

    ids: tuple[str, ...]
    P: np.ndarray
    P_se: np.ndarray
    S: np.ndarray
    S_se: np.ndarray
    extra: dict = field(default_factory=dict)

    def projections(self, i: int) -> Projections:
        return Projections(*(float(v) for v in self.S[i]), self.S_se[i])

    def index(self, waveform_id: str) -> int:
        try:
            return self.ids.index(waveform_id)
        except ValueError:
            raise ValidationError(f"dataset has no waveform {waveform_id!r}") from None

    def table(self) -> Table:
        names = _DATA_COLUMNS + tuple(self.extra)
        data = np.column_stack([self.P, self.P_se, self.S, self.S_se] + [self.extra[k] for k in self.extra])
        return Table(names, data, self.ids)

    @classmethod
    def from_table(cls, t: Table) -> "TomographyDataset":
        missing = [c for c in _DATA_COLUMNS if c not in t.columns]
        if missing or t.labels is None:
            raise ValidationError(f"not a tomography dataset (missing {missing or ['id']})")
        get = lambda names: np.column_stack([t.column(c) for c in names])  # noqa: E731
        extra = {c: t.column(c) for c in t.columns if c not in _DATA_COLUMNS}
        return cls(t.labels, get(_DATA_COLUMNS[0:3]), get(_DATA_COLUMNS[3:6]),
                   get(_DATA_COLUMNS[6:9]), get(_DATA_COLUMNS[9:12]), extra)

    @classmethod
    def read(cls, path) -> "TomographyDataset":
        if not Path(path).is_file():
            raise ValidationError(f"dataset {path} does not exist")
        return cls.from_table(Table.read(path))


def _spectra(cfg: ExperimentConfig) -> tuple[Spectrum | None, Spectrum | None]:
    sp = cfg.simulation.spectra
    return (sp.z.build() if sp.z else None), (sp.omega.build() if sp.omega else None)


def _record(w: Waveform, sim, nz, no, sz, so, seed):
    if sim.mode == "expectation":
        return expected_tomography(w, sz, so, shots=sim.shots, fidelity=sim.fidelity, seed=seed)
    return tomography(w, nz, no, sim.mode, sim.shots, sim.fidelity, seed, sim.substeps)


def _dataset(ids, records, extra=None) -> TomographyDataset:
    projs = [signal_projections(r) for r in records]
    return TomographyDataset(
        tuple(ids),
        np.array([r.P for r in records]),
        np.array([r.stderr for r in records]),
        np.array([p.as_array() for p in projs]),
        np.array([p.stderr for p in projs]),
        extra or {},
    )


def simulate(cfg: ExperimentConfig) -> TomographyDataset:
    """
    Three-axis tomography of every configured waveform under the configured
    noise, or of the first waveform under a swept single tone.

    All waveforms see the same noise ensemble, member ``r`` drawn from
    ``SeedSequence([seed, component], spawn_key=(r,))``.
    """
    sim = cfg.simulation
    controls = _controls(cfg)
    if sim.sweep is not None:
        return _sweep(cfg, _as_waveform(controls[0][1]))
    sz, so = _spectra(cfg)
    waves = [_as_waveform(c) for _, c in controls]
    nz = no = None
    if sim.mode != "expectation" and (sz is not None or so is not None):
        tau = max(w.tau for w in waves)
        d_omega = TWO_PI * sim.comb_spacing_hz if sim.comb_spacing_hz else TWO_PI / (4 * tau)
        if sz is not None:
            nz = realize_ensemble(sz, sim.realizations, d_omega, [cfg.seed, 0], omega_max=sz.omega_c)
        if so is not None:
            no = realize_ensemble(so, sim.realizations, d_omega, [cfg.seed, 1],
                                  omega_max=so.omega_c, component="omega")
    records = [_record(w, sim, nz, no, sz, so, [cfg.seed, 2, i]) for i, w in enumerate(waves)]
    return _dataset([wc.id for wc, _ in controls], records)


def _sweep(cfg: ExperimentConfig, w: Waveform) -> TomographyDataset:
    sim, sw = cfg.simulation, cfg.simulation.sweep
    f = np.linspace(sw.f_min_hz, sw.f_max_hz, sw.points)
    ffs = fundamental_ffs(w, TWO_PI * f)
    records = []
    for i, fi in enumerate(f):
        if sim.mode == "expectation":
            rec = expected_tomography(w, delta_tone(TWO_PI * fi, sw.power), omega=TWO_PI * f,
                                      shots=sim.shots, fidelity=sim.fidelity, seed=[cfg.seed, 2, i])
        else:
            tones = phase_sweep_tone(TWO_PI * fi, sw.phases, sw.power)
            rec = tomography(w, tones, None, sim.mode, sim.shots, sim.fidelity, [cfg.seed, 2, i], sim.substeps)
        records.append(rec)
    extra = {
        "f_sid_Hz": f,
        "S_y_first_order": sw.power * ffs.zy.power().values / np.pi,
        "S_z_first_order": sw.power * ffs.zz.power().values / np.pi,
    }
    return _dataset([f"sid_{i:03d}" for i in range(f.size)], records, extra)


# --------------------------------------------------------------------------- reconstruct

def _family(controls, family_id: str):
    out = [(wc, c) for wc, c in controls if wc.id.startswith(family_id + "_") or wc.id == family_id]
    if not out:
        raise ConfigError(f"no waveforms with id {family_id!r}", "reconstruction")
    return out


def _with_truth(res: ReconstructionResult, spectrum: Spectrum | None) -> ReconstructionResult:
    if spectrum is None:
        return res
    meta = {**res.metadata, "truth": spectrum(res.omega)}
    return ReconstructionResult(res.omega, res.estimate, res.stderr, res.method, meta)


def reconstruct(cfg: ExperimentConfig, dataset: TomographyDataset) -> dict[str, ReconstructionResult]:
    """
    Spectrum estimates from a tomography dataset. Filters are rebuilt from
    the configuration and matched to dataset rows by waveform id; when the
    configuration carries the true spectra, they are attached as
    ``metadata["truth"]``.
    """
    if cfg.reconstruction is None:
        raise ConfigError("a reconstruction section is required", "reconstruction")
    rc = cfg.reconstruction
    controls = _controls(cfg)
    omega = frequency_grid(cfg, [c for _, c in controls])
    sz, so = _spectra(cfg)
    if rc.method == "bayesian":
        return _bayesian(cfg, dataset, controls, omega, sz)
    waves = [(wc, _as_waveform(c)) for wc, c in controls]
    rows = [dataset.index(wc.id) for wc, _ in waves]
    projs = [dataset.projections(i) for i in rows]
    out = {}
    if rc.method in ("single_taper", "multi_axis"):
        fz = [dephasing_ff(w, omega) for _, w in waves]
    if rc.method in ("amplitude", "multi_axis"):
        fo = [amplitude_ff(w, omega) for _, w in waves]
    if rc.method == "multi_axis":
        rz, ro = multi_axis(projs, fz, fo)
        out["dephasing"], out["amplitude"] = _with_truth(rz, sz), _with_truth(ro, so)
    elif rc.method == "single_taper":
        est = [single_taper(p.y, f, stderr=p.stderr[1]) for p, f in zip(projs, fz)]
        res = ReconstructionResult([f.metadata["omega_s"] for f in fz], [e.value for e in est],
                                   [e.stderr for e in est], "single_taper_z")
        out["dephasing"] = _with_truth(res, sz)
    else:
        est = [amplitude_estimate(p.x, f, stderr=p.stderr[0]) for p, f in zip(projs, fo)]
        res = ReconstructionResult([f.metadata["omega_s"] for f in fo], [e.value for e in est],
                                   [e.stderr for e in est], "single_taper_omega")
        out["amplitude"] = _with_truth(res, so)
    return out


def _bayesian(cfg, dataset, controls, omega, truth) -> dict[str, ReconstructionResult]:
    rc = cfg.reconstruction
    groups = {}
    for name, fid in (("coarse", rc.coarse_id), ("fine", rc.fine_id)):
        fam = _family(controls, fid)
        ffs = [dephasing_ff(_as_waveform(c), omega) for _, c in fam]
        rows = [dataset.index(wc.id) for wc, _ in fam]
        y = dataset.S[rows, 1]
        se = dataset.S_se[rows, 1]
        if np.any(se <= 0):
            raise ConfigError(f"{name} measurements need positive standard errors; use Monte Carlo modes",
                              "simulation.mode")
        shifts = np.array([f.metadata["omega_s"] for f in ffs])
        groups[name] = (fam, ffs, y, se, shifts)
    fam_c, ff_c, y_c, se_c, sh_c = groups["coarse"]
    _, ff_f, y_f, se_f, sh_f = groups["fine"]
    coarse_est = [single_taper(y, f, stderr=s) for y, f, s in zip(y_c, ff_c, se_c)]
    coarse = ReconstructionResult(sh_c, [e.value for e in coarse_est], [e.stderr for e in coarse_est],
                                  "single_taper_z")
    if rc.upper_hz is not None:
        upper = TWO_PI * rc.upper_hz
    else:
        wc0, c0 = fam_c[-1]
        upper = sh_c.max() + TWO_PI * wc0.half_bandwidth / wc0.dt_s
    seg = fig2_segments(sh_c, sh_f, upper)
    L = seg.n_segments
    D = np.zeros(L)
    for idx in rc.regularized_segments:
        if not 1 <= idx <= L:
            raise ConfigError(f"regularized segment {idx} outside 1..{L}", "reconstruction.regularized_segments")
        D[idx - 1] = 1.0
    s_bar = np.full(L, float(np.mean(coarse.estimate)))
    model = BayesianModel(seg.matrix(ff_c), y_c, se_c, rc.lam, D, s_bar)
    info = prior_information(model)
    post_mean, post_cov = posterior_update(info, seg.matrix(ff_f), y_f, se_f)
    meta = {"boundaries": seg.boundaries, "prior_condition": info.condition}
    if info.condition <= PRIOR_CONDITION_LIMIT:
        p_mean, p_cov = build_prior(model)
        prior = ReconstructionResult(seg.centers, p_mean, np.sqrt(np.clip(np.diag(p_cov), 0, None)),
                                     "bayesian_prior", dict(meta))
    else:
        # rank-deficient prior: no finite covariance, report NaN
        prior = ReconstructionResult(seg.centers, np.full(L, np.nan), np.zeros(L), "bayesian_prior", dict(meta))
    post = ReconstructionResult(seg.centers, post_mean, np.sqrt(np.clip(np.diag(post_cov), 0, None)),
                                "bayesian_posterior", dict(meta))
    out = {"coarse": _with_truth(coarse, truth), "prior": prior, "posterior": post}
    if truth is not None:
        avg = seg.averages(truth)
        for key in ("prior", "posterior"):
            r = out[key]
            out[key] = ReconstructionResult(r.omega, r.estimate, r.stderr, r.method, {**r.metadata, "truth": avg})
    return out


def reconstruction_tables(results: dict[str, ReconstructionResult]) -> dict[str, Table]:
    """``f_Hz estimate stderr [truth] [f_lo_Hz f_hi_Hz]`` per result."""
    out = {}
    for name, r in results.items():
        cols = ["f_Hz", "estimate", "stderr"]
        data = [r.omega / TWO_PI, r.estimate, r.stderr]
        if "truth" in r.metadata:
            cols.append("truth")
            data.append(r.metadata["truth"])
        if "boundaries" in r.metadata:
            b = np.asarray(r.metadata["boundaries"]) / TWO_PI
            cols += ["f_lo_Hz", "f_hi_Hz"]
            data += [b[:-1], b[1:]]
        out[name] = Table(tuple(cols), np.column_stack(data), note=f"method={r.method}")
    return out


# --------------------------------------------------------------------------- compare

@dataclass(frozen=True)
class Comparison:
    """Estimates per truth and method, per-method error metrics and scan-range markers."""

    results: dict
    metrics: dict
    scan_ranges: Table


def _mare(est, truth) -> float:
    est, truth = np.asarray(est), np.asarray(truth)
    ok = truth > 0
    return float(np.mean(np.abs(est[ok] - truth[ok]) / truth[ok])) if ok.any() else float("nan")


def _signals(ffs: Sequence[FilterFunction], waves, spec: Spectrum, axis: int, cfg, tag: int):
    """Measured second moments, either exact overlaps or Monte Carlo tomography."""
    sim = cfg.simulation
    if sim.mode == "expectation":
        return np.array([spec.overlap(f.omega, f.values) for f in ffs]), np.zeros(len(ffs))
    tau = max(w.tau for w in waves)
    d_omega = TWO_PI * sim.comb_spacing_hz if sim.comb_spacing_hz else TWO_PI / (4 * tau)
    ens = realize_ensemble(spec, sim.realizations, d_omega, [cfg.seed, tag], omega_max=spec.omega_c)
    y, se = [], []
    for i, w in enumerate(waves):
        rec = tomography(w, ens, None, sim.mode, sim.shots, sim.fidelity, [cfg.seed, tag, i], sim.substeps)
        p = signal_projections(rec)
        y.append(p.as_array()[axis])
        se.append(p.stderr[axis])
    return np.array(y), np.array(se)


def compare(cfg: ExperimentConfig) -> Comparison:
    """
    DPSS, n-pulse CPMG and A-S reconstructions of each truth spectrum.

    Metrics per truth: mean absolute relative error of DPSS over the scan
    range shared with the pulsed methods and of CPMG over its points, the
    CPMG relative bias at the lowest ``low_n`` pulse numbers, and the A-S
    mean absolute error, also relative to the truth peak below the A-S band
    edge, together with the fraction of spectral weight above that edge.
    """
    if cfg.compare is None:
        raise ConfigError("a compare section is required", "compare")
    c: CompareConfig = cfg.compare
    plat = PLATFORMS[c.platform]
    tau_pi = plat["tau_pi"] if c.tau_pi_s is None else c.tau_pi_s
    buffer = plat["buffer"] if c.buffer_s is None else c.buffer_s
    dt = c.tau_s / c.n_points
    omega = default_grid(dt, cfg.grid.points) if cfg.grid.f_max_hz is None else frequency_grid(cfg)
    s = _dpss_set(c.n_points, c.nw / c.n_points, c.order)
    shifts = TWO_PI * (c.shift_start_hz + c.shift_step_hz * np.arange(c.shift_count))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        dpss_w = [fd_waveform(s, c.order, sh, dt, "max_theta", c.max_theta) for sh in shifts]
    dpss_ff = [dephasing_ff(w, omega) for w in dpss_w]

    dmin = tau_pi + buffer
    n_max = c.n_max or int(np.floor(c.tau_s / dmin * (1 + 1e-12)))
    ns = np.arange(1, n_max + 1)
    cpmg_w = [cpmg(int(n), c.tau_s, tau_pi, buffer).render() for n in ns]
    cpmg_ff = [dephasing_zz_ff(w, omega) for w in cpmg_w]

    ms = np.arange(1, c.as_m_max + 1)
    reps = [c.as_rep_factor * int(m) for m in ms]
    bases = [cpmg(2, c.as_tau_b_s / m, tau_pi, buffer) for m in ms]
    base_ff = [lambda x, w=b.render(): dephasing_zz_ff(w, x).values for b in bases]
    system = as_system(base_ff, c.as_tau_b_s, reps)
    as_w = [b.repeat(r).render() for b, r in zip(bases, reps)]
    as_ff = [dephasing_zz_ff(w, omega) for w in as_w]

    ranges = [scan_range(tau_pi, buffer, r, dt=dt, tau=c.tau_s, tau_b=c.as_tau_b_s,
                         shift_spacing=TWO_PI * c.shift_step_hz) for r in c.r_idle]
    scan = Table(("r_idle", "cpmg_f_max_Hz", "as_f_max_Hz", "dpss_f_max_Hz"),
                 np.array([[r, x.cpmg_omega_max / TWO_PI, x.as_omega_max / TWO_PI, x.dpss_omega_max / TWO_PI]
                           for r, x in zip(c.r_idle, ranges)]))
    shared = ranges[0].cpmg_omega_max
    as_edge = c.as_m_max * TWO_PI / c.as_tau_b_s

    results, metrics = {}, {}
    for t_index, (label, sc) in enumerate(c.truths.items()):
        spec = sc.build()
        tag = 10 + 3 * t_index
        y_d, se_d = _signals(dpss_ff, dpss_w, spec, 1, cfg, tag)
        y_c, se_c = _signals(cpmg_ff, cpmg_w, spec, 2, cfg, tag + 1)
        y_a, se_a = _signals(as_ff, as_w, spec, 2, cfg, tag + 2)
        est = [single_taper(y, f, stderr=e) for y, f, e in zip(y_d, dpss_ff, se_d)]
        r_d = ReconstructionResult(shifts, [e.value for e in est], [e.stderr for e in est], "dpss")
        r_c = cpmg_npulse_estimate(ns, c.tau_s, y_c, cpmg_ff, se_c)
        r_a = as_inversion(system, y_a, se_a)
        for name, r in (("dpss", r_d), ("cpmg", r_c), ("as", r_a)):
            results[f"{label}_{name}"] = _with_truth(r, spec)
        sel = shifts <= shared
        truth_c = spec(r_c.omega)
        low = slice(0, min(c.low_n, ns.size))
        weight = spec(omega)
        total = np.trapezoid(weight, omega)
        as_err = float(np.mean(np.abs(r_a.estimate - spec(r_a.omega))))
        metrics[label] = {
            "dpss_mare": _mare(r_d.estimate[sel], spec(shifts[sel])),
            "cpmg_mare": _mare(r_c.estimate, truth_c),
            "cpmg_low_bias": ((r_c.estimate[low] - truth_c[low]) / truth_c[low]).tolist(),
            "as_mean_abs_error": as_err,
            "as_error_over_peak": as_err / float(weight[omega <= as_edge].max()),
            "as_condition": float(system.condition),
            "weight_above_as_edge": float(np.trapezoid(np.where(omega > as_edge, weight, 0.0), omega) / total),
            "shared_f_max_Hz": float(shared / TWO_PI),
            "cpmg_n_max": int(n_max),
        }
    return Comparison(results, metrics, scan)
