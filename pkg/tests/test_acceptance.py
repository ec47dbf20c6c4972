"""Exit criteria at full fidelity; each test records one PASS/FAIL line."""

import math

import numpy as np
import pytest

from mechtransduce import analytics
from mechtransduce.harness import load_config, run_scenario
from mechtransduce.harness.scenarios import _coherent
from mechtransduce.model import CONSTANTS, CoupledSystem, PumpField, derive_resonator, device_system

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


@pytest.fixture(scope="module")
def thermal():
    return run_scenario(load_config("thermal"))


@pytest.fixture(scope="module")
def fc_sweep():
    return run_scenario(load_config("fc-sweep", pump_voltages_v=[3.0]))


@pytest.fixture(scope="module")
def pump_sweep():
    return run_scenario(load_config("pump-sweep"))


@pytest.fixture(scope="module")
def noise():
    return run_scenario(load_config("noise", **{"sweep.values": [9.5]}))


def within(value, expected, rel):
    return abs(value / expected - 1) <= rel


def test_1_thermal_calibration(thermal, criterion_line):
    t, d = thermal.records
    targets = [
        ("k_t", t["spring_constant_n_per_m"], 0.071, 0.05),
        ("k_d", d["spring_constant_n_per_m"], 1.0, 0.05),
        ("sqrtSF_t", t["force_noise_n_per_rthz"], 3.4e-15, 0.10),
        ("sqrtSF_d", d["force_noise_n_per_rthz"], 4.6e-15, 0.10),
        ("peak_t", t["peak_sqrt_density_m_per_rthz"], 5.6e-11, 0.10),
        ("peak_d", d["peak_sqrt_density_m_per_rthz"], 0.74e-11, 0.10),
    ]
    ok = all(within(v, e, tol) for _, v, e, tol in targets)
    detail = ", ".join(f"{n}={v:.4g} (want {e:g} +/-{tol:.0%})" for n, v, e, tol in targets)
    assert criterion_line(1, "thermal calibration roundtrip", ok, detail)


def test_2_fc_response_transfer(fc_sweep, criterion_line):
    fit = fc_sweep.summary["fits"]["3"]
    w_rel = fit["center_hz"] / 6760.0 - 1
    q_rel = fit["quality_factor"] / 1200.0 - 1
    ok = abs(w_rel) <= 0.001 and abs(q_rel) <= 0.15
    assert criterion_line(2, "fc response transfer", ok,
                          f"center {fit['center_hz']:.3f} Hz ({w_rel:+.2e}), Q {fit['quality_factor']:.1f} "
                          f"({q_rel:+.1%})")


def test_3_pump_strength_scaling(pump_sweep, criterion_line):
    s = pump_sweep.summary
    recs = pump_sweep.records
    g_dev = max(abs(r["gain"] / r["gain_theory"] - 1) for r in recs)
    high = [r for r in recs if r["v_ac_v"] >= 8]
    ratio_dev = max(abs(x / g - 1) for x, g in zip(s["high_pump_linear_ratio"], s["high_pump_gain_theory"]))
    ok = (s["low_pump_r_squared"] > 0.99 and len(high) > 0 and max(s["high_pump_linear_ratio"]) < 0.95
          and ratio_dev <= 0.10 and g_dev <= 0.10)
    assert criterion_line(3, "pump-strength scaling", ok,
                          f"R2(<=3 V)={s['low_pump_r_squared']:.5f}, high-pump ratio "
                          f"{[round(x, 3) for x in s['high_pump_linear_ratio']]} vs G "
                          f"{[round(x, 3) for x in s['high_pump_gain_theory']]} (max dev {ratio_dev:.1%}), "
                          f"G vs 1/(1+C) max dev {g_dev:.2%}")


@pytest.mark.xfail(strict=True, reason=(
    "the literal estimator dF_d/(G dx_t) with dF_d = dx_d k_d/(G Q_d) returns eta/G^2; "
    "G falls to about 0.72 at 10 V, so the 10% band cannot hold across the sweep"))
def test_4_known_coupling_recovery(pump_sweep, criterion_line):
    recs = pump_sweep.records
    errs = [r["coupling_estimate_n_per_m"] / r["coupling_n_per_m"] - 1 for r in recs]
    worst = max(errs, key=abs)
    bad = [r["v_ac_v"] for r, e in zip(recs, errs) if abs(e) > 0.10]
    c2 = pump_sweep.summary.get("fitted_capacitance_curvature_f_per_m2")
    ok = not bad
    criterion_line(4, "known-eta recovery", ok,
                   f"max |eta_hat/eta-1|={abs(worst):.1%}, outside 10% at v_ac={[round(v, 2) for v in bad]}; "
                   f"C2 fitted to dx_d(v_ac) = {c2:.3e} F/m^2 ({c2 / 6.5e-7 - 1:+.1%})")
    assert ok


def test_5_noise_budget(noise, criterion_line):
    r = noise.records[0]
    assert r["v_ac_v"] == 9.5
    imp, ba = r["imprecision_m_per_rthz"], r["backaction_n_per_rthz"]
    ok = (within(imp, 3.9e-11, 0.15) and imp < 5.6e-11
          and ba is not None and 0.5 <= ba / 0.8e-15 <= 2.0 and ba < 3.4e-15)
    assert criterion_line(5, "noise budget at 9.5 V", ok,
                          f"imprecision {imp:.3e} +/- {r['imprecision_err_m_per_rthz']:.1e} m/rtHz, "
                          f"back-action {ba:.3e} +/- {r['backaction_err_n_per_rthz']:.1e} N/rtHz")


def test_6_noise_product_identity(pump_sweep, criterion_line):
    base = device_system()
    d = base.detector
    expected = float(analytics.thermal_displacement_psd(d, d.natural_frequency)) * d.thermal_force_density
    etas = [r["coupling_n_per_m"] for r in pump_sweep.records]
    etas += list(np.geomspace(1e-8, 1e-2, 25))
    worst = 0.0
    for eta in etas:
        pump = PumpField.for_coupling(eta, base.fc_pump_frequency)
        p = analytics.rwa_predict(CoupledSystem(base.target, d, pump))
        worst = max(worst, abs(p.imprecision_density**2 * p.backaction_density**2 / expected - 1))
    q0 = analytics.quantum_noise_product(0)
    ok = worst <= 0.10 and q0 == pytest.approx(4 * CONSTANTS.reduced_planck**2, rel=1e-15)
    assert criterion_line(6, "noise-product identity", ok,
                          f"max rel dev {worst:.1e} over {len(etas)} couplings; 4hbar^2(n_d+1)^2 at n_d=0 = {q0:.4e}")


def test_7_scaling_law(criterion_line):
    t = derive_resonator(0.071, 6760.0, 1200.0)
    r1 = analytics.noise_product_ratio(CoupledSystem(t, derive_resonator(1.0, 37410.0, 1700.0)))
    r2 = analytics.noise_product_ratio(CoupledSystem(t, derive_resonator(1.0, 74820.0, 1700.0)))
    rel = abs(r2 / r1 - 0.5) / 0.5
    assert criterion_line(7, "scaling law", rel <= 1e-6, f"ratio {r1:.6f} -> {r2:.6f} (rel err {rel:.1e})")


def test_8_numerical_hygiene(thermal, criterion_line):
    eq = max(abs(r["equipartition_ratio"] - 1) for r in thermal.records)
    pv = max(abs(r["parseval_ratio"] - 1) for r in thermal.records)

    cfg = load_config("pump-sweep")
    sys = cfg.system(v_ac=9.5)
    coarse = _coherent(cfg, sys, 0, noise=False)
    fine_cfg = load_config("pump-sweep", **{"simulation.dt_s": cfg.dt(sys) / 2,
                                            "simulation.record_every": 10})
    fine = _coherent(fine_cfg, sys, 0, noise=False)
    dt_dev = max(abs(abs(fine[k]) / abs(coarse[k]) - 1) for k in ("x_t", "x_d"))

    small = load_config("linearity", fast=True, **{"sweep.values": [0.0, 5e-13, 1e-12]})
    a, b = run_scenario(small), run_scenario(small)
    same = a.records == b.records
    ok = eq <= 0.03 and pv <= 0.02 and dt_dev <= 0.005 and same
    assert criterion_line(8, "numerical hygiene", ok,
                          f"equipartition {eq:.2%}, Parseval {pv:.2%}, dt-halving {dt_dev:.1e}, "
                          f"identical-seed records equal: {same}")
