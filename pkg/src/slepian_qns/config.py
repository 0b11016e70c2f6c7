"""
Experiment configuration.

Configs are YAML or JSON mappings. Frequencies carry a ``_hz`` suffix and
times an ``_s`` suffix; both are converted to rad/s and seconds when the
objects are built. Spectral densities (``level``, ``height``,
``amplitude``) are one-sided PSD values in rad^2/s and tone ``power`` in
rad^2/s^2. Unknown keys are rejected.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from .errors import ConfigError
from .noise import (
    Spectrum,
    builtin_spectra,
    delta_tone,
    gaussian_bump,
    one_over_f_with_spurs,
    sum_spectra,
    white,
)

TWO_PI = 2 * np.pi


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class SpurConfig(_Model):
    center_hz: float = Field(ge=0)
    width_hz: float = Field(gt=0)
    height: float = Field(ge=0)


class SpectrumConfig(_Model):
    """One spectrum; ``form="builtin"`` selects a named reference shape."""

    form: Literal["builtin", "white", "gaussian_bump", "one_over_f_with_spurs", "delta_tone", "sum"]
    name: str | None = None
    scale: float = Field(1.0, ge=0)
    level: float | None = Field(None, ge=0)
    center_hz: float | None = Field(None, ge=0)
    width_hz: float | None = Field(None, gt=0)
    height: float | None = Field(None, ge=0)
    amplitude: float | None = Field(None, ge=0)
    exponent: float = Field(1.0, gt=0)
    knee_hz: float = Field(1e3, gt=0)
    spurs: list[SpurConfig] = Field(default_factory=list)
    tone_hz: float | None = Field(None, ge=0)
    power: float | None = Field(None, ge=0)
    cutoff_hz: float | None = Field(None, gt=0)
    components: list["SpectrumConfig"] = Field(default_factory=list)

    @model_validator(mode="after")
    def _required(self):
        needs = {
            "builtin": ["name"],
            "white": ["level"],
            "gaussian_bump": ["center_hz", "width_hz", "height"],
            "one_over_f_with_spurs": ["amplitude"],
            "delta_tone": ["tone_hz", "power"],
            "sum": [],
        }[self.form]
        missing = [k for k in needs if getattr(self, k) is None]
        if missing:
            raise ValueError(f"form {self.form!r} requires {', '.join(missing)}")
        if self.form == "sum" and not self.components:
            raise ValueError("form 'sum' requires at least one component")
        return self

    def build(self) -> Spectrum:
        cut = None if self.cutoff_hz is None else TWO_PI * self.cutoff_hz
        if self.form == "builtin":
            extra = {} if cut is None else {"omega_c": cut}
            s = builtin_spectra(self.name, **extra)
        elif self.form == "white":
            s = white(self.level, cut)
        elif self.form == "gaussian_bump":
            s = gaussian_bump(TWO_PI * self.center_hz, TWO_PI * self.width_hz, self.height, cut)
        elif self.form == "one_over_f_with_spurs":
            spurs = [(TWO_PI * p.center_hz, TWO_PI * p.width_hz, p.height) for p in self.spurs]
            s = one_over_f_with_spurs(self.amplitude, self.exponent, spurs, TWO_PI * self.knee_hz, cut)
        elif self.form == "delta_tone":
            s = delta_tone(TWO_PI * self.tone_hz, self.power)
        else:
            s = sum_spectra(*(c.build() for c in self.components), omega_c=cut)
        return s if self.scale == 1.0 else s.scaled(self.scale)


class WaveformConfig(_Model):
    """
    A control waveform or, with ``shifts_hz``, a family of them named
    ``{id}_{index:02d}``.
    """

    kind: Literal["dpss", "cos", "fd", "fd_dd", "cpmg", "rotary", "pulsed_dpss"]
    id: str = Field("w", min_length=1, pattern=r"^[A-Za-z0-9_.-]+$")
    n_points: int | None = Field(None, ge=2)
    nw: float | None = Field(None, gt=0)
    w: float | None = Field(None, gt=0, lt=0.5)
    order: int = Field(0, ge=0)
    dt_s: float | None = Field(None, gt=0)
    shift_hz: float = Field(0.0, ge=0)
    shifts_hz: list[float] | None = None
    normalization: Literal["scale", "energy", "theta_energy", "max_theta"] = "max_theta"
    target: float = Field(0.05, ge=0)
    omega_max_hz: float | None = Field(None, gt=0)
    n_pulses: int | None = Field(None, ge=1)
    tau_s: float | None = Field(None, gt=0)
    tau_pi_s: float = Field(0.0, ge=0)
    buffer_s: float = Field(0.0, ge=0)
    c_tau_s: float | None = Field(None, gt=0)
    period_s: float | None = Field(None, gt=0)
    rabi_hz: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _consistent(self):
        if self.kind in ("dpss", "cos", "fd", "fd_dd", "pulsed_dpss"):
            if self.n_points is None or self.dt_s is None:
                raise ValueError(f"kind {self.kind!r} requires n_points and dt_s")
            if (self.nw is None) == (self.w is None):
                raise ValueError("give exactly one of nw and w")
            if self.half_bandwidth >= 0.5:
                raise ValueError("w = nw / n_points must be below 0.5")
            if self.order >= self.n_points:
                raise ValueError("order must be below n_points")
        if self.kind == "cpmg" and (self.n_pulses is None or self.tau_s is None):
            raise ValueError("kind 'cpmg' requires n_pulses and tau_s")
        if self.kind == "rotary" and None in (self.rabi_hz, self.period_s, self.tau_s):
            raise ValueError("kind 'rotary' requires rabi_hz, period_s and tau_s")
        if self.kind == "pulsed_dpss" and self.c_tau_s is None:
            raise ValueError("kind 'pulsed_dpss' requires c_tau_s")
        return self

    @property
    def half_bandwidth(self) -> float:
        return self.w if self.w is not None else self.nw / self.n_points

    def expand(self) -> list["WaveformConfig"]:
        if self.shifts_hz is None:
            return [self]
        return [self.model_copy(update={"id": f"{self.id}_{i:02d}", "shift_hz": float(f), "shifts_hz": None})
                for i, f in enumerate(self.shifts_hz)]


class DpssConfig(_Model):
    n_points: int = Field(ge=2)
    nw: float | None = Field(None, gt=0)
    w: float | None = Field(None, gt=0, lt=0.5)
    k_max: int = Field(0, ge=0)
    dt_s: float = Field(1.0, gt=0)
    grid_points: int = Field(2048, ge=16)

    @model_validator(mode="after")
    def _consistent(self):
        if (self.nw is None) == (self.w is None):
            raise ValueError("give exactly one of nw and w")
        if self.half_bandwidth >= 0.5:
            raise ValueError("w = nw / n_points must be below 0.5")
        if self.k_max >= self.n_points:
            raise ValueError("k_max must be below n_points")
        return self

    @property
    def half_bandwidth(self) -> float:
        return self.w if self.w is not None else self.nw / self.n_points


class GridConfig(_Model):
    """Frequency grid ``[0, f_max_hz]``; ``f_max_hz`` defaults to the Nyquist frequency of the finest step."""

    f_max_hz: float | None = Field(None, gt=0)
    points: int = Field(4096, ge=16)


class SpectraConfig(_Model):
    z: SpectrumConfig | None = None
    omega: SpectrumConfig | None = None


class SweepConfig(_Model):
    """Single dephasing tone swept over ``points`` frequencies, averaged over ``phases`` phases."""

    f_min_hz: float = Field(ge=0)
    f_max_hz: float = Field(gt=0)
    points: int = Field(ge=2)
    phases: int = Field(5, ge=2)
    power: float = Field(gt=0)


class SimulationConfig(_Model):
    mode: Literal["exact", "first_order", "expectation"] = "exact"
    realizations: int = Field(100, ge=1)
    shots: int | None = Field(None, ge=1)
    fidelity: float = Field(0.997, gt=0.5, le=1.0)
    comb_spacing_hz: float | None = Field(None, gt=0)
    substeps: int | None = Field(None, ge=1)
    spectra: SpectraConfig = Field(default_factory=SpectraConfig)
    sweep: SweepConfig | None = None


class ReconstructionConfig(_Model):
    method: Literal["single_taper", "amplitude", "multi_axis", "bayesian"] = "single_taper"
    coarse_id: str = "coarse"
    fine_id: str = "fine"
    lam: float = Field(0.35, ge=0, alias="lambda")
    regularized_segments: list[int] = Field(default_factory=list)
    upper_hz: float | None = Field(None, gt=0)


class CompareConfig(_Model):
    platform: Literal["ion", "superconducting"] = "ion"
    tau_s: float = Field(gt=0)
    n_points: int = Field(ge=2)
    nw: float = Field(2.0, gt=0)
    order: int = Field(0, ge=0)
    max_theta: float = Field(0.05, gt=0)
    shift_start_hz: float = Field(ge=0)
    shift_step_hz: float = Field(gt=0)
    shift_count: int = Field(ge=1)
    tau_pi_s: float | None = Field(None, ge=0)
    buffer_s: float | None = Field(None, ge=0)
    n_max: int | None = Field(None, ge=1)
    as_tau_b_s: float = Field(gt=0)
    as_m_max: int = Field(ge=1)
    as_rep_factor: int = Field(ge=1)
    r_idle: list[float] = Field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2])
    low_n: int = Field(6, ge=1)
    truths: dict[str, SpectrumConfig]

    @model_validator(mode="after")
    def _truths(self):
        if not self.truths:
            raise ValueError("at least one truth spectrum is required")
        return self


class ExperimentConfig(_Model):
    name: str = "custom"
    seed: int = Field(0, ge=0)
    dpss: DpssConfig | None = None
    waveforms: list[WaveformConfig] = Field(default_factory=list)
    grid: GridConfig = Field(default_factory=GridConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    reconstruction: ReconstructionConfig | None = None
    compare: CompareConfig | None = None

    def expanded_waveforms(self) -> list[WaveformConfig]:
        out = [x for w in self.waveforms for x in w.expand()]
        ids = [w.id for w in out]
        if len(set(ids)) != len(ids):
            raise ConfigError("waveform ids must be unique after expansion", "waveforms")
        return out

    def canonical(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def deep_merge(base: dict, update: dict) -> dict:
    """Recursive dict merge; lists and scalars in ``update`` replace those in ``base``."""
    out = copy.deepcopy(base)
    for key, val in update.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _line_of(node, loc) -> int | None:
    """1-based line of the YAML node at ``loc``; None unless the whole path is present."""
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == part), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
        else:
            node = None
        if node is None:
            return None
    return node.start_mark.line + 1


def validate_config(data: dict, source_text: str | None = None) -> ExperimentConfig:
    """
    Validate a raw mapping.

    Raises
    ------
    ConfigError
        Naming the first offending field and, when ``source_text`` is
        given, its line.
    """
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping", "")
    try:
        return ExperimentConfig.model_validate(data)
    except PydanticValidationError as exc:
        err = exc.errors()[0]
        loc = tuple(err["loc"])
        field = ".".join(str(p) for p in loc)
        where = ""
        if source_text is not None:
            try:
                line = _line_of(yaml.compose(source_text), loc)
            except yaml.YAMLError:
                line = None
            if line is not None:
                where = f" (line {line})"
        raise ConfigError(f"{err['msg']}{where}", field or "config") from None


def load_config(path=None, preset: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """
    Read a YAML/JSON file, merge it over ``preset`` and apply ``overrides``.
    """
    data: dict[str, Any] = copy.deepcopy(preset) if preset else {}
    text = None
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}", "") from None
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}", "") from None
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a mapping", "")
        data = deep_merge(data, raw)
    if overrides:
        data = deep_merge(data, overrides)
    return validate_config(data, text)
