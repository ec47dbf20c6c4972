"""Experiment configuration: YAML schema, bundled defaults, overrides.

Physical values carry unit suffixes in their keys (``_hz``, ``_v``, ``_k``,
``_n``, ``_n_per_m``, ``_s``). Example::

    scenario: pump-sweep
    seed: 1
    temperature_k: 300
    target: {spring_constant_n_per_m: 0.071, frequency_hz: 6760, quality_factor: 1200}
    detector: {spring_constant_n_per_m: 1.0, frequency_hz: 37410, quality_factor: 1700}
    pump: {capacitance_curvature_f_per_m2: 6.5e-7, v_dc_v: 36, v_ac_v: 3}
    drive: {force_n: 1.0e-12}
    sweep: {variable: v_ac_v, start: 0.5, stop: 10, points: 12}
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from ..errors import DomainError
from ..model import (
    CoupledSystem,
    DriveTone,
    PumpField,
    Resonator,
    derive_resonator,
    fc_pump_frequency,
)

SCENARIOS = ("thermal", "fc-sweep", "linearity", "pump-sweep", "noise", "proposal")

SWEEP_VARIABLES = {
    "thermal": (),
    "fc-sweep": ("detuning_linewidths",),
    "linearity": ("drive_force_n",),
    "pump-sweep": ("v_ac_v",),
    "noise": ("v_ac_v",),
    "proposal": ("detector_quality_factor",),
}

FAST_Q_FACTOR = 10.0


@dataclass
class ResonatorSpec:
    spring_constant_n_per_m: float
    frequency_hz: float
    quality_factor: float
    temperature_k: Optional[float] = None

    def build(self, default_temperature: float, q_scale: float = 1.0) -> Resonator:
        T = self.temperature_k if self.temperature_k is not None else default_temperature
        return derive_resonator(self.spring_constant_n_per_m, self.frequency_hz,
                                self.quality_factor / q_scale, T)


@dataclass
class PumpSpec:
    capacitance_curvature_f_per_m2: float = 6.5e-7
    v_dc_v: float = 36.0
    v_ac_v: float = 0.0
    include_nonresonant_terms: bool = True
    max_v_dc_v: Optional[float] = None
    max_v_ac_v: Optional[float] = None


@dataclass
class DriveSpec:
    force_n: float = 1e-14
    frequency_hz: Optional[float] = None


@dataclass
class SweepSpec:
    variable: str
    start: Optional[float] = None
    stop: Optional[float] = None
    points: Optional[int] = None
    spacing: str = "linear"
    values: Optional[list] = None

    def grid(self) -> np.ndarray:
        if self.values is not None:
            vals = np.asarray(self.values, dtype=float)
        else:
            if self.start is None or self.stop is None or not self.points:
                raise DomainError("sweep", "give either values or start/stop/points")
            if self.spacing == "log":
                vals = np.geomspace(self.start, self.stop, int(self.points))
            elif self.spacing == "linear":
                vals = np.linspace(self.start, self.stop, int(self.points))
            else:
                raise DomainError("sweep.spacing", f"unknown spacing {self.spacing!r}")
        if vals.size == 0:
            raise DomainError("sweep", "range is empty")
        return vals


@dataclass
class SimulationSpec:
    samples_per_detector_period: int = 100
    dt_s: Optional[float] = None
    # per-run duration and transient in units of Q_t / f_t unless given in seconds
    duration_s: Optional[float] = None
    # taken literally, also in fast mode (set by the CLI's --duration)
    duration_override_s: Optional[float] = None
    duration_q_periods: float = 20.0
    settle_q_periods: float = 5.0
    record_every: int = 5
    method: str = "etd"
    seeds_per_point: int = 1


@dataclass
class MeasurementSpec:
    lockin_bandwidth_hz: float = 1.0
    psd_resolution_hz: float = 1.0
    band_hz: float = 3.0
    overlap: float = 0.5


@dataclass
class ProposalSpec:
    target_force_noise_n_per_rthz: float = 1e-21
    target_frequency_hz: float = 10e3
    target_spring_constant_n_per_m: float = 1e-6
    detector_frequency_hz: float = 1e6
    detector_spring_constant_n_per_m: float = 1.9
    detector_quality_factor: float = 3e5
    temperature_k: float = 0.1
    # ceiling on eta / k_t; the measured device reached about 1.6e-3
    max_relative_coupling: float = 1.6e-3


@dataclass
class ExperimentConfig:
    scenario: str
    target: ResonatorSpec
    detector: ResonatorSpec
    pump: PumpSpec = field(default_factory=PumpSpec)
    drive: Optional[DriveSpec] = None
    sweep: Optional[SweepSpec] = None
    simulation: SimulationSpec = field(default_factory=SimulationSpec)
    measurement: MeasurementSpec = field(default_factory=MeasurementSpec)
    proposal: Optional[ProposalSpec] = None
    pump_voltages_v: Optional[list] = None
    temperature_k: float = 300.0
    seed: int = 0
    output_dir: Optional[str] = None
    fast: bool = False
    workers: Optional[int] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise DomainError("scenario", f"unknown scenario {self.scenario!r}; expected {SCENARIOS}")
        if self.sweep is not None and self.sweep.variable not in SWEEP_VARIABLES[self.scenario]:
            raise DomainError(
                "sweep.variable",
                f"{self.sweep.variable!r} does not apply to {self.scenario}; "
                f"allowed: {SWEEP_VARIABLES[self.scenario]}",
            )
        if self.sweep is not None:
            self.sweep.grid()

    # --- derived objects -------------------------------------------------

    @property
    def q_scale(self) -> float:
        return FAST_Q_FACTOR if self.fast else 1.0

    @property
    def capacitance_curvature(self) -> float:
        """Effective curvature; fast mode raises it so eta^2 Q_t Q_d stays fixed."""
        return self.pump.capacitance_curvature_f_per_m2 * self.q_scale

    @property
    def drive_force(self) -> Optional[float]:
        """Effective drive; fast mode raises it so the drive-to-noise ratio stays fixed."""
        return None if self.drive is None else self.drive.force_n * self.q_scale

    def resonators(self) -> tuple[Resonator, Resonator]:
        return (self.target.build(self.temperature_k, self.q_scale),
                self.detector.build(self.temperature_k, self.q_scale))

    def system(self, v_ac: Optional[float] = None, drive: bool = True,
               drive_force: Optional[float] = None, drive_frequency: Optional[float] = None,
               pump_frequency: Optional[float] = None) -> CoupledSystem:
        tgt, det = self.resonators()
        p = self.pump
        w_pu = pump_frequency
        if w_pu is None:
            w_pu = fc_pump_frequency(tgt.natural_frequency, det.natural_frequency)
        pump = PumpField(self.capacitance_curvature, p.v_dc_v,
                         p.v_ac_v if v_ac is None else v_ac, w_pu, p.include_nonresonant_terms)
        tone = None
        if drive and self.drive is not None:
            f = self.drive_force if drive_force is None else drive_force * self.q_scale
            if drive_frequency is not None:
                w = drive_frequency
            elif self.drive.frequency_hz is not None:
                w = 2 * math.pi * self.drive.frequency_hz
            else:
                w = tgt.natural_frequency
            tone = DriveTone(f, w)
        return CoupledSystem(tgt, det, pump, tone)

    def dt(self, sys: CoupledSystem) -> float:
        if self.simulation.dt_s is not None:
            return self.simulation.dt_s
        return 2 * math.pi / (self.simulation.samples_per_detector_period
                              * sys.detector.natural_frequency)

    def q_time(self) -> float:
        tgt, _ = self.resonators()
        return tgt.quality_factor / tgt.frequency_hz

    def duration(self) -> float:
        if self.simulation.duration_override_s is not None:
            return self.simulation.duration_override_s
        if self.simulation.duration_s is not None:
            return self.simulation.duration_s / self.q_scale
        return self.simulation.duration_q_periods * self.q_time()

    def settle(self) -> float:
        return self.simulation.settle_q_periods * self.q_time()

    def bandwidth_scale(self) -> float:
        """Measurement bandwidths widen with the linewidths in fast mode."""
        return self.q_scale

    # --- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


_NESTED = {
    "target": ResonatorSpec,
    "detector": ResonatorSpec,
    "pump": PumpSpec,
    "drive": DriveSpec,
    "sweep": SweepSpec,
    "simulation": SimulationSpec,
    "measurement": MeasurementSpec,
    "proposal": ProposalSpec,
}


def _coerce(annotation: str, value, where: str):
    # YAML 1.1 reads exponents without a sign (3.0e5) as strings
    if isinstance(value, str) and "float" in annotation:
        try:
            return float(value)
        except ValueError:
            raise DomainError(where, f"expected a number, got {value!r}") from None
    if isinstance(value, list) and "list" in annotation:
        return [_coerce("float", v, where) for v in value]
    return value


def _build(cls, data: dict, where: str):
    fields = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise DomainError(where, f"unknown keys {sorted(unknown)}")
    data = {k: _coerce(fields[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**data)
    except TypeError as exc:
        raise DomainError(where, str(exc)) from exc


def from_dict(data: dict) -> ExperimentConfig:
    data = copy.deepcopy(data)
    for key, cls in _NESTED.items():
        if data.get(key) is not None:
            data[key] = _build(cls, data[key], key)
    return _build(ExperimentConfig, data, "config")


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def bundled_config(scenario: str) -> dict:
    if scenario not in SCENARIOS:
        raise DomainError("scenario", f"unknown scenario {scenario!r}")
    text = resources.files("mechtransduce").joinpath("configs", f"{scenario}.yaml").read_text()
    return yaml.safe_load(text)


def load_config(scenario: str, path: Optional[str | Path] = None, **overrides: Any) -> ExperimentConfig:
    """Bundled defaults for ``scenario``, updated by the file at ``path`` and ``overrides``.

    Overrides use dotted keys for nested fields, e.g. ``{"simulation.dt_s": 1e-7}``.
    """
    data = bundled_config(scenario)
    if path is not None:
        user = yaml.safe_load(Path(path).read_text()) or {}
        if user.get("scenario", scenario) != scenario:
            raise DomainError("scenario", f"config is for {user['scenario']!r}, not {scenario!r}")
        data = _merge(data, user)
    for key, value in overrides.items():
        if value is None:
            continue
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    data["scenario"] = scenario
    return from_dict(data)
