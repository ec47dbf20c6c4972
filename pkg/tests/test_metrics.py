import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mechtransduce import metrics
from mechtransduce.errors import DomainError


def test_gain_factor():
    assert metrics.gain_factor(0.7, 1.0) == 0.7
    with pytest.raises(DomainError):
        metrics.gain_factor(1.0, 0.0)


def test_transduced_force():
    assert metrics.transduced_force(1.7e-9, 1.0, 1700.0, 0.5) == pytest.approx(2e-12)
    for bad in [(0.0, 1, 1, 1), (1, -1, 1, 1), (1, 1, 0, 1), (1, 1, 1, 0), (1, 1, 1, -0.5)]:
        with pytest.raises(DomainError):
            metrics.transduced_force(*bad)


def test_coupling_and_transduction_factor():
    assert metrics.coupling_estimate(2e-12, 0.5, 1e-8) == pytest.approx(4e-4)
    assert metrics.transduction_factor(2e-12, 1e-8) == pytest.approx(2e-4)
    with pytest.raises(DomainError):
        metrics.coupling_estimate(1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        metrics.coupling_estimate(1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        metrics.transduction_factor(1.0, 0.0)


def test_transduction_noise():
    imp, tot = metrics.transduction_noise(4e-30, 1e-30, 1e-4, 2e-4)
    assert imp == pytest.approx(1e-11)
    assert tot == pytest.approx(1e-11)
    imp, tot = metrics.transduction_noise(4e-30, 1e-30, 0.0, 0.0)
    assert math.isinf(imp) and math.isinf(tot)
    with pytest.raises(DomainError):
        metrics.transduction_noise(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        metrics.transduction_noise(1.0, 1.0, -1.0, 1.0)


def test_backaction_clips_negative_difference():
    b = metrics.backaction_estimate(1.0, 1.5)
    assert b.value == 0.0 and b.clipped and b.raw_difference == pytest.approx(-0.5)
    b = metrics.backaction_estimate(1.25, 1.0)
    assert b.value == pytest.approx(0.5) and not b.clipped
    with pytest.raises(DomainError):
        metrics.backaction_estimate(-1.0, 1.0)


def test_measured_noise_product_ratio():
    assert metrics.measured_noise_product_ratio(2.0, 3.0, 4.0, 9.0) == pytest.approx(1.0)


def test_report_keys_and_infinities():
    r = metrics.TransductionReport(gain=0.9, imprecision=math.inf)
    d = r.to_dict()
    assert d["gain"] == 0.9
    assert d["imprecision_m_per_rthz"] is None
    assert set(d) == {"gain", "force_on_detector_n", "coupling_estimate_n_per_m",
                      "transduction_factor_n_per_m", "imprecision_m_per_rthz",
                      "total_noise_m_per_rthz", "backaction_n_per_rthz", "noise_product_ratio"}


@given(eta=st.floats(1e-7, 1e-3), gain=st.floats(0.3, 1.0), x_off=st.floats(1e-12, 1e-6),
       q_d=st.floats(10, 1e5), k_d=st.floats(0.01, 10))
def test_estimators_on_ideal_measurements(eta, gain, x_off, q_d, k_d):
    # ideal readout: target moves G x_off with the pump on, detector answers eta x_on Q_d / k_d
    x_on = gain * x_off
    dx_d = eta * x_on * q_d / k_d
    dF = metrics.transduced_force(dx_d, k_d, q_d, gain)
    assert dF == pytest.approx(eta * x_off, rel=1e-9)
    assert metrics.coupling_estimate(dF, gain, x_on) == pytest.approx(eta / gain**2, rel=1e-9)
    assert metrics.coupling_estimate(dF, gain, x_off) == pytest.approx(eta / gain, rel=1e-9)
    chi = metrics.transduction_factor(dF, x_on)
    assert chi == pytest.approx(gain * metrics.coupling_estimate(dF, gain, x_on), rel=1e-9)
    assert 1 / chi <= 1 / eta * (1 + 1e-9)
