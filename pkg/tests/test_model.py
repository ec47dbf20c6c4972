import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mechtransduce.errors import DomainError
from mechtransduce.model import (
    CONSTANTS,
    CoupledSystem,
    DriveTone,
    PumpField,
    Resonator,
    derive_resonator,
    fc_pump_frequency,
    device_detector,
    device_system,
    device_target,
    pump_coupling,
)

# frozen from an independent 30-digit evaluation of k / w0^2 and 2 k_B T m w0 / Q
TARGET_MASS = 3.935548058654055e-11
DETECTOR_MASS = 1.8099427870824358e-11
TARGET_SQRT_FORCE = 3.3969764471976487e-15
DETECTOR_SQRT_FORCE = 4.553119172113751e-15


def test_target_derived_quantities():
    t = device_target()
    assert t.effective_mass == pytest.approx(TARGET_MASS, rel=1e-12)
    assert math.sqrt(t.thermal_force_density) == pytest.approx(TARGET_SQRT_FORCE, rel=1e-9)
    assert t.frequency_hz == pytest.approx(6760.0)


def test_detector_derived_quantities():
    d = device_detector()
    assert d.effective_mass == pytest.approx(DETECTOR_MASS, rel=1e-12)
    assert math.sqrt(d.thermal_force_density) == pytest.approx(DETECTOR_SQRT_FORCE, rel=1e-9)


def test_measured_force_noise_levels():
    # reported calibration: 3.4e-15 and 4.6e-15 N/sqrt(Hz)
    assert math.sqrt(device_target().thermal_force_density) == pytest.approx(3.4e-15, rel=0.02)
    assert math.sqrt(device_detector().thermal_force_density) == pytest.approx(4.6e-15, rel=0.02)


def test_coupling_at_strongest_pump():
    assert pump_coupling(6.5e-7, 36.0, 9.5) == pytest.approx(1.1115e-4, rel=1e-12)


def test_zero_ac_voltage_gives_zero_coupling():
    assert pump_coupling(6.5e-7, 36.0, 0.0) == 0.0


@pytest.mark.parametrize("args", [(0.0, 36, 1), (-1e-7, 36, 1), (6.5e-7, -1, 1), (6.5e-7, 36, -1)])
def test_pump_coupling_rejects_bad_inputs(args):
    with pytest.raises(DomainError):
        pump_coupling(*args)


def test_fc_pump_frequency():
    assert fc_pump_frequency(1.0, 3.5) == 2.5
    with pytest.raises(DomainError):
        fc_pump_frequency(3.0, 3.0)


@pytest.mark.parametrize("field", ["k", "f0", "Q", "T"])
def test_derive_resonator_rejects_non_positive(field):
    kw = dict(k=1.0, f0=1e3, Q=10.0, T=300.0)
    kw[field] = 0.0
    with pytest.raises(DomainError):
        derive_resonator(**kw)


def test_system_requires_detector_above_target():
    with pytest.raises(DomainError):
        CoupledSystem(device_detector(), device_target())


def test_drive_validation():
    with pytest.raises(DomainError):
        DriveTone(-1e-14, 1.0)
    with pytest.raises(DomainError):
        DriveTone(1e-14, -1.0)


def test_pump_for_coupling_roundtrip():
    p = PumpField.for_coupling(2e-5, 100.0)
    assert p.coupling_strength == pytest.approx(2e-5, rel=1e-12)


def test_device_system_is_at_conversion_condition():
    s = device_system(v_ac=3.0)
    assert s.pump.pump_frequency == pytest.approx(s.detector.natural_frequency
                                                  - s.target.natural_frequency)
    assert s.with_pump_voltage(9.5).coupling_strength == pytest.approx(1.1115e-4)
    assert s.uncoupled().coupling_strength == 0.0


@given(
    k=st.floats(1e-4, 1e2), f0=st.floats(10, 1e7), Q=st.floats(1, 1e7), T=st.floats(1e-3, 1e3)
)
def test_equipartition_and_damping_identities(k, f0, Q, T):
    r = derive_resonator(k, f0, Q, T)
    assert r.thermal_variance * k == pytest.approx(CONSTANTS.boltzmann * T, rel=1e-12)
    assert r.damping_coefficient == pytest.approx(r.effective_mass * r.natural_frequency / Q, rel=1e-12)
    assert r.thermal_force_density == pytest.approx(2 * CONSTANTS.boltzmann * T * r.damping_coefficient,
                                                    rel=1e-12)


def test_with_temperature():
    r = device_target().with_temperature(0.1)
    assert isinstance(r, Resonator) and r.temperature == 0.1
