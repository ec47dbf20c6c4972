"""Physical entities of the two-resonator frequency-conversion device.

All internal frequencies are angular (rad/s). Spectral densities use the
convention ``<x^2> = (1/pi) * int_0^inf S(w) dw``, which makes the thermal
force density white with ``S_F = 2 k_B T Gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from scipy import constants as _codata

from .errors import DomainError

ROOM_TEMPERATURE = 300.0  # K

# Device parameters of the measured T/D pair.
TARGET_SPRING_CONSTANT = 0.071  # N/m
TARGET_FREQUENCY_HZ = 6760.0
TARGET_Q = 1200.0
DETECTOR_SPRING_CONSTANT = 1.0  # N/m
DETECTOR_FREQUENCY_HZ = 37410.0
DETECTOR_Q = 1700.0
CAPACITANCE_CURVATURE = 6.5e-7  # F/m^2
DEFAULT_DRIVE_FORCE = 1e-14  # N


@dataclass(frozen=True)
class PhysicalConstants:
    boltzmann: float = _codata.k
    reduced_planck: float = _codata.hbar


CONSTANTS = PhysicalConstants()


def _require_positive(name, value):
    if not (value > 0) or not math.isfinite(value):
        raise DomainError(name, f"must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class Resonator:
    """One mechanical mode.

    Parameters
    ----------
    spring_constant : float
        Effective spring constant k [N/m].
    natural_frequency : float
        Angular resonance frequency w0 [rad/s].
    quality_factor : float
        Q (dimensionless).
    temperature : float
        Bath temperature [K].
    """

    spring_constant: float
    natural_frequency: float
    quality_factor: float
    temperature: float = ROOM_TEMPERATURE
    constants: PhysicalConstants = field(default=CONSTANTS, repr=False, compare=False)

    def __post_init__(self):
        _require_positive("spring_constant", self.spring_constant)
        _require_positive("natural_frequency", self.natural_frequency)
        _require_positive("quality_factor", self.quality_factor)
        _require_positive("temperature", self.temperature)

    @property
    def frequency_hz(self) -> float:
        return self.natural_frequency / (2 * math.pi)

    @property
    def effective_mass(self) -> float:
        return self.spring_constant / self.natural_frequency**2

    @property
    def damping_coefficient(self) -> float:
        """Viscous damping Gamma = m w0 / Q [kg/s]."""
        return self.effective_mass * self.natural_frequency / self.quality_factor

    @property
    def energy_decay_rate(self) -> float:
        return self.natural_frequency / self.quality_factor

    @property
    def thermal_force_density(self) -> float:
        """White thermal force density 2 k_B T Gamma [N^2 s]."""
        return 2 * self.constants.boltzmann * self.temperature * self.damping_coefficient

    @property
    def thermal_variance(self) -> float:
        """Equipartition displacement variance k_B T / k [m^2]."""
        return self.constants.boltzmann * self.temperature / self.spring_constant

    def with_temperature(self, temperature: float) -> "Resonator":
        return replace(self, temperature=temperature)


def derive_resonator(k: float, f0: float, Q: float, T: float = ROOM_TEMPERATURE) -> Resonator:
    """Build a resonator from spring constant, frequency in Hz, Q and temperature."""
    _require_positive("spring_constant", k)
    _require_positive("frequency_hz", f0)
    _require_positive("quality_factor", Q)
    _require_positive("temperature", T)
    return Resonator(k, 2 * math.pi * f0, Q, T)


def pump_coupling(C2: float, v_dc: float, v_ac: float) -> float:
    """Resonant coupling strength eta = C2 * v_dc * v_ac / 2 [N/m].

    Only the d.c./a.c. cross term of the squared pump voltage oscillates at the
    pump frequency, so it alone drives the conversion.
    """
    if not (C2 > 0):
        raise DomainError("capacitance_curvature", f"must be positive, got {C2!r}")
    if v_dc < 0:
        raise DomainError("v_dc", f"must be non-negative, got {v_dc!r}")
    if v_ac < 0:
        raise DomainError("v_ac", f"must be non-negative, got {v_ac!r}")
    return 0.5 * C2 * v_dc * v_ac


def fc_pump_frequency(omega_t: float, omega_d: float) -> float:
    """Pump frequency satisfying the conversion condition w_pu = w_d - w_t."""
    if not omega_d > omega_t:
        raise DomainError(
            "omega_d", f"detector frequency {omega_d!r} must exceed target frequency {omega_t!r}"
        )
    return omega_d - omega_t


@dataclass(frozen=True)
class PumpField:
    """Electrostatic parametric pump, eta(t) = 2 eta cos(w_pu t)."""

    capacitance_curvature: float
    v_dc: float
    v_ac: float
    pump_frequency: float
    include_nonresonant_terms: bool = True

    def __post_init__(self):
        # validates signs
        pump_coupling(self.capacitance_curvature, self.v_dc, self.v_ac)
        if self.pump_frequency < 0:
            raise DomainError("pump_frequency", "must be non-negative")

    @property
    def coupling_strength(self) -> float:
        return pump_coupling(self.capacitance_curvature, self.v_dc, self.v_ac)

    @classmethod
    def for_coupling(
        cls,
        eta: float,
        pump_frequency: float,
        capacitance_curvature: float = CAPACITANCE_CURVATURE,
        v_dc: float = 36.0,
        include_nonresonant_terms: bool = True,
    ) -> "PumpField":
        """Pump whose a.c. amplitude yields the requested coupling."""
        v_ac = 2 * eta / (capacitance_curvature * v_dc)
        return cls(capacitance_curvature, v_dc, v_ac, pump_frequency, include_nonresonant_terms)


@dataclass(frozen=True)
class DriveTone:
    """Coherent force applied to the target only."""

    force_amplitude: float = DEFAULT_DRIVE_FORCE
    drive_frequency: float = 0.0

    def __post_init__(self):
        if self.force_amplitude < 0:
            raise DomainError("force_amplitude", "must be non-negative")
        if self.drive_frequency < 0:
            raise DomainError("drive_frequency", "must be non-negative")


@dataclass(frozen=True)
class CoupledSystem:
    target: Resonator
    detector: Resonator
    pump: Optional[PumpField] = None
    drive: Optional[DriveTone] = None

    def __post_init__(self):
        if not self.detector.natural_frequency > self.target.natural_frequency:
            raise DomainError(
                "detector.natural_frequency", "detector must be the higher-frequency mode"
            )

    @property
    def coupling_strength(self) -> float:
        return 0.0 if self.pump is None else self.pump.coupling_strength

    @property
    def fc_pump_frequency(self) -> float:
        return fc_pump_frequency(self.target.natural_frequency, self.detector.natural_frequency)

    def with_pump_voltage(self, v_ac: float) -> "CoupledSystem":
        return replace(self, pump=replace(self.pump, v_ac=v_ac))

    def with_drive(self, drive: Optional[DriveTone]) -> "CoupledSystem":
        return replace(self, drive=drive)

    def uncoupled(self) -> "CoupledSystem":
        return replace(self, pump=None)


def device_target(T: float = ROOM_TEMPERATURE) -> Resonator:
    return derive_resonator(TARGET_SPRING_CONSTANT, TARGET_FREQUENCY_HZ, TARGET_Q, T)


def device_detector(T: float = ROOM_TEMPERATURE) -> Resonator:
    return derive_resonator(DETECTOR_SPRING_CONSTANT, DETECTOR_FREQUENCY_HZ, DETECTOR_Q, T)


def device_system(
    v_dc: float = 36.0,
    v_ac: float = 0.0,
    drive: Optional[DriveTone] = None,
    T: float = ROOM_TEMPERATURE,
    include_nonresonant_terms: bool = True,
) -> CoupledSystem:
    """The measured device, pumped at the conversion condition."""
    target, detector = device_target(T), device_detector(T)
    pump = PumpField(
        CAPACITANCE_CURVATURE,
        v_dc,
        v_ac,
        fc_pump_frequency(target.natural_frequency, detector.natural_frequency),
        include_nonresonant_terms,
    )
    return CoupledSystem(target, detector, pump, drive)
