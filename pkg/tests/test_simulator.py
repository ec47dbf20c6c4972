import math

import numpy as np
import pytest

from mechtransduce import analytics, simulator
from mechtransduce.errors import DomainError, IntegrationDiverged
from mechtransduce.model import CoupledSystem, DriveTone, derive_resonator, device_system
from mechtransduce.simulator import (
    SimulationConfig,
    TimeSeries,
    default_dt,
    settle_time,
    simulate,
    thermal_force_sequence,
)


def small_system(v_ac=0.0, drive=None):
    """Low-Q copy of the device so transients die quickly."""
    s = device_system(v_ac=v_ac, drive=drive)
    t = derive_resonator(0.071, 6760.0, 60.0)
    d = derive_resonator(1.0, 37410.0, 85.0)
    return CoupledSystem(t, d, s.pump, drive)


class TestTimeSeries:
    def test_validation(self):
        with pytest.raises(DomainError):
            TimeSeries(0.0, [1.0, 2.0])
        with pytest.raises(DomainError):
            TimeSeries(1.0, [1.0])
        with pytest.raises(DomainError):
            TimeSeries(1.0, [1.0, np.nan])
        with pytest.raises(DomainError):
            TimeSeries(1.0, [1.0, 2.0], unit_tag="volts")

    def test_values_are_read_only(self):
        x = TimeSeries(1.0, np.arange(4.0))
        with pytest.raises(ValueError):
            x.values[0] = 5.0

    def test_after_and_times(self):
        x = TimeSeries(0.5, np.arange(10.0), t0=1.0)
        y = x.after(2.2)
        assert y.t0 == pytest.approx(2.5)
        assert y.values[0] == 3.0
        assert x.duration == 5.0

    def test_csv_roundtrip(self, tmp_path):
        x = TimeSeries(1e-6, np.random.default_rng(1).standard_normal(50), "force", 7, 0.25)
        x.to_csv(tmp_path / "x.csv")
        y = TimeSeries.from_csv(tmp_path / "x.csv")
        assert y.dt == x.dt and y.rng_seed == 7 and y.unit_tag == "force" and y.t0 == 0.25
        np.testing.assert_array_equal(y.values, x.values)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(dt=0.0, duration=1.0),
        dict(dt=1e-3, duration=1e-3),
        dict(dt=1e-3, duration=1.0, record_every=0),
        dict(dt=1e-3, duration=1.0, method="euler"),
        dict(dt=1e-3, duration=1.0, initial_state="hot"),
    ])
    def test_rejects(self, kw):
        with pytest.raises(DomainError):
            SimulationConfig(**kw)

    def test_defaults(self):
        s = device_system()
        assert default_dt(s) == pytest.approx(1 / (100 * 37410.0))
        assert settle_time(s) == pytest.approx(5 * 1200 / 6760)


def test_thermal_force_sequence():
    r = derive_resonator(0.071, 6760.0, 1200.0)
    dt = 1e-6
    f = thermal_force_sequence(r, dt, 200_000, seed=3)
    assert f.unit_tag == "force"
    assert np.std(f.values) == pytest.approx(math.sqrt(r.thermal_force_density / dt), rel=0.01)
    g = thermal_force_sequence(r, dt, 200_000, seed=3)
    np.testing.assert_array_equal(f.values, g.values)
    with pytest.raises(DomainError):
        thermal_force_sequence(r, dt, 1, seed=3)


def test_dt_limit():
    s = device_system()
    cfg = SimulationConfig(dt=2 * math.pi / (40 * s.detector.natural_frequency), duration=1e-3)
    with pytest.raises(DomainError):
        simulate(s, cfg)


def test_same_seed_is_bit_identical_and_seeds_differ():
    s = device_system(v_ac=3.0)
    dt = default_dt(s)
    a = simulate(s, SimulationConfig(dt, 0.02, rng_seed=11))
    b = simulate(s, SimulationConfig(dt, 0.02, rng_seed=11))
    c = simulate(s, SimulationConfig(dt, 0.02, rng_seed=12))
    np.testing.assert_array_equal(a[0].values, b[0].values)
    np.testing.assert_array_equal(a[1].values, b[1].values)
    assert not np.array_equal(a[1].values, c[1].values)


def test_record_every_decimates():
    s = device_system()
    dt = default_dt(s)
    full = simulate(s, SimulationConfig(dt, 0.01, rng_seed=1))
    dec = simulate(s, SimulationConfig(dt, 0.01, rng_seed=1, record_every=5))
    assert dec[1].dt == pytest.approx(5 * dt)
    np.testing.assert_array_equal(dec[1].values, full[1].values[::5])


def test_record_both_false_returns_detector_only():
    s = device_system()
    x_t, x_d = simulate(s, SimulationConfig(default_dt(s), 0.005, record_both=False))
    assert x_t is None and len(x_d) > 2


def test_noiseless_rest_start_stays_at_rest():
    s = device_system()
    x_t, x_d = simulate(s, SimulationConfig(default_dt(s), 0.005, thermal_noise=False,
                                            initial_state="rest"))
    assert not np.any(x_t.values) and not np.any(x_d.values)


def test_divergence_is_reported(monkeypatch):
    monkeypatch.setattr(simulator, "_DIVERGENCE_FACTOR", 1e-3)
    s = device_system()
    with pytest.raises(IntegrationDiverged):
        simulate(s, SimulationConfig(default_dt(s), 0.005, rng_seed=1))


def _steady_amplitude(x, w, t_start):
    y = x.after(t_start)
    ph = np.exp(-1j * w * y.times)
    return abs(2 * np.mean(y.values * ph))


@pytest.mark.parametrize("method,rel", [("etd", 2e-3), ("heun", 2e-2)])
def test_driven_target_matches_susceptibility(method, rel):
    F = 1e-12
    s = small_system(drive=DriveTone(F, 2 * math.pi * 6760.0))
    s = CoupledSystem(s.target, s.detector, None, s.drive)
    w = s.drive.drive_frequency
    cfg = SimulationConfig(default_dt(s), 0.2, thermal_noise=False, initial_state="rest",
                           method=method)
    x_t, _ = simulate(s, cfg)
    # whole number of drive periods in the averaging window
    t0 = 0.2 - 1000 * 2 * math.pi / w
    expected = F * abs(analytics.susceptibility(s.target, w))
    assert _steady_amplitude(x_t, w, t0) == pytest.approx(expected, rel=rel)


def test_pumped_detector_response_matches_coupled_mode_theory():
    F = 1e-12
    w = 2 * math.pi * 6760.0
    s = small_system(v_ac=9.5, drive=DriveTone(F, w))
    cfg = SimulationConfig(default_dt(s), 0.2, thermal_noise=False, initial_state="rest")
    x_t, x_d = simulate(s, cfg)
    w_d = w + s.pump.pump_frequency
    t0 = 0.2 - 1000 * 2 * math.pi / w
    assert _steady_amplitude(x_d, w_d, t0) == pytest.approx(
        analytics.transduced_amplitude(s, F, w), rel=5e-3)
    assert _steady_amplitude(x_t, w, t0) == pytest.approx(
        F * abs(analytics.effective_target_susceptibility(s, w)), rel=5e-3)


def test_thermal_variance_short_run():
    # low-Q modes decorrelate fast, so a short ensemble checks the noise scaling
    s = small_system()
    s = CoupledSystem(s.target, s.detector)
    var_t, var_d = [], []
    for seed in range(8):
        x_t, x_d = simulate(s, SimulationConfig(default_dt(s, 50), 0.5, rng_seed=seed, record_every=5))
        var_t.append(np.var(x_t.values))
        var_d.append(np.var(x_d.values))
    # relative standard errors are about 2.7% (target) and 1.3% (detector)
    assert np.mean(var_t) == pytest.approx(s.target.thermal_variance, rel=0.10)
    assert np.mean(var_d) == pytest.approx(s.detector.thermal_variance, rel=0.05)
