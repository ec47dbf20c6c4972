"""Transduction quantities computed from measured amplitudes and densities.

Every formula here is applied literally to its operands; the harness decides
which measured amplitude feeds each one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

from .errors import DomainError


def gain_factor(x_on: float, x_off: float) -> float:
    """Ratio of target amplitudes with the pump on and off."""
    if not x_off > 0:
        raise DomainError("x_off", "pump-off amplitude must be positive")
    return x_on / x_off


def transduced_force(dx_d: float, k_d: float, Q_d: float, G: float) -> float:
    """Force felt by the detector, dx_d k_d / (G Q_d)."""
    if G == 0:
        raise DomainError("G", "gain factor must be non-zero")
    for name, v in (("dx_d", dx_d), ("k_d", k_d), ("Q_d", Q_d), ("G", G)):
        if not v > 0:
            raise DomainError(name, "must be positive")
    return dx_d * k_d / (G * Q_d)


def coupling_estimate(dF_d: float, G: float, dx_t: float) -> float:
    """Coupling strength dF_d / (G dx_t) [N/m]."""
    if not G > 0:
        raise DomainError("G", "must be positive")
    if not dx_t > 0:
        raise DomainError("dx_t", "must be positive")
    return dF_d / (G * dx_t)


def transduction_factor(dF_d: float, dx_t: float) -> float:
    """Effective transduction factor dF_d / dx_t [N/m]."""
    if not dx_t > 0:
        raise DomainError("dx_t", "must be positive")
    return dF_d / dx_t


def transduction_noise(S_F_d_tot: float, S_F_d_th: float, eta: float, chi: float):
    """Imprecision sqrt(S_F,d^th)/eta and total noise sqrt(S_F,d^tot)/chi [m/sqrt(Hz)].

    A zero coupling gives ``inf`` for the corresponding term.
    """
    if S_F_d_tot < 0 or S_F_d_th < 0:
        raise DomainError("density", "must be non-negative")
    if eta < 0 or chi < 0:
        raise DomainError("coupling", "must be non-negative")
    imprecision = math.sqrt(S_F_d_th) / eta if eta > 0 else math.inf
    total = math.sqrt(S_F_d_tot) / chi if chi > 0 else math.inf
    return imprecision, total


class Backaction(NamedTuple):
    value: float
    raw_difference: float
    clipped: bool


def backaction_estimate(S_F_t_tot: float, S_F_t_th: float) -> Backaction:
    """sqrt(S_F,t^tot - S_F,t^th), clipping negative differences to zero."""
    if S_F_t_tot < 0 or S_F_t_th < 0:
        raise DomainError("density", "must be non-negative")
    diff = S_F_t_tot - S_F_t_th
    return Backaction(math.sqrt(max(diff, 0.0)), diff, diff < 0)


def measured_noise_product_ratio(imprecision: float, backaction: float,
                                 S_x_t_th_peak: float, S_F_t_th: float) -> float:
    return math.sqrt(imprecision**2 * backaction**2 / (S_x_t_th_peak * S_F_t_th))


@dataclass
class TransductionReport:
    gain: Optional[float] = None
    force_on_detector: Optional[float] = None
    coupling_estimate: Optional[float] = None
    transduction_factor: Optional[float] = None
    imprecision: Optional[float] = None
    total_noise: Optional[float] = None
    backaction: Optional[float] = None
    noise_product_ratio: Optional[float] = None

    _UNITS = {
        "gain": "gain",
        "force_on_detector": "force_on_detector_n",
        "coupling_estimate": "coupling_estimate_n_per_m",
        "transduction_factor": "transduction_factor_n_per_m",
        "imprecision": "imprecision_m_per_rthz",
        "total_noise": "total_noise_m_per_rthz",
        "backaction": "backaction_n_per_rthz",
        "noise_product_ratio": "noise_product_ratio",
    }

    def to_dict(self) -> dict:
        out = {}
        for name, value in asdict(self).items():
            if isinstance(value, float) and math.isinf(value):
                value = None
            out[self._UNITS[name]] = value
        return out
