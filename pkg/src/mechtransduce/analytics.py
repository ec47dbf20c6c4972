"""Closed-form frequency-domain predictions for the converted system.

Densities follow the package convention ``<x^2> = (1/pi) int_0^inf S dw``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import CONSTANTS, CoupledSystem, Resonator

_FC_RTOL = 1e-9


def thermal_displacement_psd(r: Resonator, omega):
    """Thermal displacement density S_F w0^4 / (k^2 [(w0^2 - w^2)^2 + w0^2 w^2 / Q^2])."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("omega", "must be non-negative")
    w0, Q, k = r.natural_frequency, r.quality_factor, r.spring_constant
    return r.thermal_force_density * w0**4 / (k**2 * ((w0**2 - w**2) ** 2 + (w0 * w / Q) ** 2))


def susceptibility(r: Resonator, omega):
    """Mechanical response chi(w) = 1 / (m (w0^2 - w^2) - i Gamma w) [m/N]."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("omega", "must be non-negative")
    m = r.effective_mass
    return 1.0 / (m * (r.natural_frequency**2 - w**2) - 1j * r.damping_coefficient * w)


def _require_fc(sys: CoupledSystem):
    if sys.pump is None:
        return
    want = sys.fc_pump_frequency
    if abs(sys.pump.pump_frequency - want) > _FC_RTOL * want:
        raise DomainError(
            "pump_frequency",
            f"{sys.pump.pump_frequency:.6g} rad/s violates w_pu = w_d - w_t = {want:.6g} rad/s",
        )


def effective_target_susceptibility(sys: CoupledSystem, omega):
    """Target response with the pumped detector loop closed.

    The pump maps target motion at ``w`` onto the detector at ``w + w_pu`` and
    back, giving chi_t / (1 - eta^2 chi_t(w) chi_d(w + w_pu)).
    """
    w = np.asarray(omega, dtype=float)
    eta = sys.coupling_strength
    chi_t = susceptibility(sys.target, w)
    if eta == 0:
        return chi_t
    chi_d = susceptibility(sys.detector, w + sys.pump.pump_frequency)
    return chi_t / (1 - eta**2 * chi_t * chi_d)


def effective_detector_susceptibility(sys: CoupledSystem, omega):
    w = np.asarray(omega, dtype=float)
    eta = sys.coupling_strength
    chi_d = susceptibility(sys.detector, w)
    if eta == 0:
        return chi_d
    chi_t = susceptibility(sys.target, np.abs(w - sys.pump.pump_frequency))
    return chi_d / (1 - eta**2 * chi_d * chi_t)


def transduced_amplitude(sys: CoupledSystem, force: float, omega_dr: float) -> float:
    """Steady detector amplitude at ``omega_dr + w_pu`` for a target drive."""
    eta = sys.coupling_strength
    if eta == 0:
        return 0.0
    x_t = abs(effective_target_susceptibility(sys, omega_dr)) * force
    return float(abs(susceptibility(sys.detector, omega_dr + sys.pump.pump_frequency)) * eta * x_t)


@dataclass(frozen=True)
class RwaPrediction:
    coupled_rate: float
    cooperativity: float
    gain: float
    imprecision_density: float
    backaction_density: float
    noise_product: float

    def to_dict(self):
        def num(v):
            return None if math.isinf(v) else v

        return {
            "coupled_rate_rad_s": self.coupled_rate,
            "cooperativity": self.cooperativity,
            "gain": self.gain,
            "imprecision_m_per_rthz": num(self.imprecision_density),
            "imprecision_unbounded": math.isinf(self.imprecision_density),
            "backaction_n_per_rthz": self.backaction_density,
            "noise_product_m2n2_s2": self.noise_product,
        }


def cooperativity(sys: CoupledSystem) -> float:
    t, d = sys.target, sys.detector
    g = coupled_rate(sys)
    return 4 * g**2 / (t.energy_decay_rate * d.energy_decay_rate)


def coupled_rate(sys: CoupledSystem) -> float:
    t, d = sys.target, sys.detector
    return sys.coupling_strength / (
        2 * math.sqrt(t.effective_mass * t.natural_frequency * d.effective_mass * d.natural_frequency)
    )


def rwa_predict(sys: CoupledSystem) -> RwaPrediction:
    """Coupled-mode gain and transduction noise at the conversion condition.

    With eta = 0 the imprecision is reported as ``inf``.
    """
    _require_fc(sys)
    d = sys.detector
    eta = sys.coupling_strength
    C = cooperativity(sys)
    sx_d = float(thermal_displacement_psd(d, d.natural_frequency))
    sf_d = d.thermal_force_density
    imprecision = math.sqrt(sf_d) / eta if eta > 0 else math.inf
    backaction = eta * math.sqrt(sx_d)
    # eta cancels in the product; the closed form also covers the uncoupled limit
    return RwaPrediction(coupled_rate(sys), C, 1 / (1 + C), imprecision, backaction, sx_d * sf_d)


def quantum_noise_product(n_d: float) -> float:
    """Lower bound 4 hbar^2 (n_d + 1)^2 on the imprecision/back-action product."""
    if n_d < 0:
        raise DomainError("n_d", "must be non-negative")
    return 4 * CONSTANTS.reduced_planck**2 * (n_d + 1) ** 2


def phonon_number(r: Resonator) -> float:
    """Bose occupancy 1 / (exp(hbar w0 / k_B T) - 1)."""
    x = r.constants.reduced_planck * r.natural_frequency / (r.constants.boltzmann * r.temperature)
    if x > 700:
        return 0.0
    return 1 / math.expm1(x)


def noise_product_ratio(sys: CoupledSystem) -> float:
    """sqrt(S_x^im S_F^ba / (S_x,t^th(w_t) S_F,t^th)); independent of eta."""
    _require_fc(sys)
    t, d = sys.target, sys.detector
    sx_d = float(thermal_displacement_psd(d, d.natural_frequency))
    sx_t = float(thermal_displacement_psd(t, t.natural_frequency))
    return math.sqrt(sx_d * d.thermal_force_density / (sx_t * t.thermal_force_density))
