import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powertalk.errors import InsufficientBlanks, NotCalibrated
from powertalk.grid import DerUnit, LoadModel, Mode
from powertalk.phy import (
    DetectorState,
    PhyConfig,
    SlotObservation,
    ber_monte_carlo,
    ber_paper,
    ber_standard,
    detect,
    detect_load_change,
    link_levels,
    load_change_margin,
    modulate,
    mu_closed_form,
    q_func,
    recalibrate,
    sample_slot,
)

Q1 = 0.15865525393145707  # standard normal upper tail at 1


def units6():
    return [DerUnit(i, Mode.VSC, 48.0, 0.2, 0.2) for i in range(6)]


def test_modulate():
    c = PhyConfig()
    assert modulate(0, c) == -0.01
    assert modulate(1, c) == 0.01
    assert modulate(None, c) == 0.0


def test_sample_count_and_sigma():
    c = PhyConfig()
    assert c.n_samples == 382500
    assert c.sigma == pytest.approx(0.0858 / math.sqrt(382500), rel=1e-12)
    assert c.sigma == pytest.approx(1.387e-4, abs=1e-7)


def test_sample_slot_noiseless_and_replay():
    c = PhyConfig(eta=0.0)
    assert sample_slot(47.5, c, 3).mean_v == 47.5
    c = PhyConfig()
    assert sample_slot(47.5, c, 11) == sample_slot(47.5, c, 11)


def test_sample_slot_std():
    c = PhyConfig()
    rng = np.random.default_rng(5)
    xs = np.array([sample_slot(0.0, c, rng).mean_v for _ in range(20000)])
    # sample std of 20000 normals is within 2% of sigma with overwhelming probability
    assert xs.std(ddof=1) == pytest.approx(c.sigma, rel=0.02)


def test_detect_levels_and_tie():
    det = DetectorState.from_threshold(48.0, 1e-3, 1e-3)
    assert detect(SlotObservation(48.001, 1), det) == 1
    assert detect(SlotObservation(47.999, 1), det) == 0
    assert detect(SlotObservation(48.0, 1), det) == 0
    with pytest.raises(NotCalibrated):
        detect(SlotObservation(48.0, 1), DetectorState())


def test_load_change_detection():
    c = PhyConfig()
    u = units6()
    lo, thr, hi = link_levels(u, LoadModel(1.5), c, 1, 0)
    det = DetectorState.from_threshold(thr, thr - lo, hi - thr)
    assert not detect_load_change(SlotObservation(hi, 1), det, c)
    assert not detect_load_change(SlotObservation(hi + 2 * c.sigma, 1), det, c)
    assert load_change_margin(det, c) > 2 * c.sigma
    # heavier load: the bus falls to 1.0*15*48/16 = 45 V exactly
    lo2, _, _ = link_levels(u, LoadModel(1.0), c, 1, 0)
    assert detect_load_change(SlotObservation(lo2, 1), det, c)


def test_heavier_load_bus_value():
    from powertalk.grid import solve_steady_state

    assert solve_steady_state(units6(), LoadModel(1.0)).v_bus == pytest.approx(45.0, rel=1e-12)


def test_recalibrate():
    c1 = PhyConfig(m_blank=1, eta=0.0)
    assert recalibrate([SlotObservation(47.3, 1)], c1).threshold == 47.3
    c4 = PhyConfig(m_blank=4)
    with pytest.raises(InsufficientBlanks):
        recalibrate([SlotObservation(47.3, 1)] * 3, c4)
    rng = np.random.default_rng(9)
    thr = [recalibrate([sample_slot(0.0, c4, rng) for _ in range(4)], c4).threshold for _ in range(20000)]
    assert np.std(thr, ddof=1) == pytest.approx(c4.sigma / 2, rel=0.02)


def test_ber_formulas():
    assert ber_paper(0.0, 0.0, 1.0) == 1.0
    assert ber_standard(0.0, 0.0, 1.0) == 0.5
    assert ber_standard(1.0, 1.0, 1.0) == pytest.approx(Q1, rel=1e-12)
    assert q_func(1.0) == pytest.approx(Q1, rel=1e-12)
    assert ber_paper(50.0, 50.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        ber_standard(1.0, 1.0, 0.0)


@settings(max_examples=200)
@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0), st.floats(0.01, 5.0))
def test_ber_paper_is_twice_standard(a, b, s):
    assert ber_paper(a, b, s) == pytest.approx(2 * ber_standard(a, b, s), rel=1e-12, abs=1e-300)


@settings(max_examples=200)
@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0), st.floats(0.0, 1.0), st.floats(0.05, 2.0))
def test_ber_monotone(a, b, d, s):
    assert ber_standard(a + d, b, s) <= ber_standard(a, b, s)
    assert ber_standard(a, b, s * 1.5) >= ber_standard(a, b, s)


def test_ber_point_below_1e7():
    c = PhyConfig(gamma=0.01, t_pt=0.01)
    lo, thr, hi = link_levels(units6(), LoadModel(1.5), c, 1, 0)
    assert ber_standard(thr - lo, hi - thr, c.sigma) < 1e-7
    assert ber_paper(thr - lo, hi - thr, c.sigma) < 1e-7


def test_monte_carlo_noiseless_and_coin():
    u, load = units6(), LoadModel(1.5)
    assert ber_monte_carlo(u, load, PhyConfig(eta=0.0), 1, 0, 10000, 1).errors == 0
    est = ber_monte_carlo(u, load, PhyConfig(gamma=0.0), 1, 0, 200000, 1)
    assert abs(est.estimate - 0.5) < 3 * math.sqrt(0.25 / 200000)


def test_monte_carlo_worker_independent():
    u, load = units6(), LoadModel(1.5)
    c = PhyConfig(gamma=0.004, t_pt=0.004)
    a = ber_monte_carlo(u, load, c, 1, 0, 3_000_000, 42, workers=1)
    b = ber_monte_carlo(u, load, c, 1, 0, 3_000_000, 42, workers=3)
    assert a == b


def test_monte_carlo_matches_closed_form_random_points():
    rng = np.random.default_rng(2016)
    u, load = units6(), LoadModel(1.5)
    n = 200_000
    for k in range(20):
        gamma = float(rng.uniform(0.001, 0.01))
        t_pt = float(rng.uniform(0.0025, 0.006))
        c = PhyConfig(gamma=gamma, t_pt=t_pt)
        lo, thr, hi = link_levels(u, load, c, 1, 0)
        p = ber_standard(thr - lo, hi - thr, c.sigma)
        est = ber_monte_carlo(u, load, c, 1, 0, n, 100 + k)
        se = math.sqrt(p * (1 - p) / n)
        assert abs(est.estimate - p) <= 3 * se + 1.0 / n, (gamma, t_pt, est.estimate, p)


def test_mu_closed_form():
    assert mu_closed_form(2, 10, 5, 1e-3, 0.0, 4) == pytest.approx(0.06, rel=1e-12)
    assert mu_closed_form(1084, 3392, 2, 0.0025, 0.0, 4) == (1084 + 3392) * 2 * 0.0025
    vals = [mu_closed_form(434, 1357, 5, 0.01, lam, 4) for lam in (0.0, 1e-4, 1e-3, 1e-2)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        mu_closed_form(0, 1, 1, 0.01, 0.0, 1)


@settings(max_examples=100)
@given(st.floats(0.0, 0.5), st.floats(1e-4, 0.5), st.integers(1, 20))
def test_mu_closed_form_increasing_in_lambda(lam, dlam, m):
    assert mu_closed_form(10, 20, 2, 0.01, lam + dlam, m) > mu_closed_form(10, 20, 2, 0.01, lam, m)


def test_config_validation():
    with pytest.raises(ValueError):
        PhyConfig(t_pt=0.002)  # shorter than the settling time
    with pytest.raises(ValueError):
        PhyConfig(gamma=-0.1)
    with pytest.raises(ValueError):
        PhyConfig(gamma=3.0).check_gamma(48.0)
    PhyConfig(gamma=0.1).check_gamma(48.0)


def test_sigma_halves_when_samples_quadruple():
    a = PhyConfig(t_pt=0.00335, tau=0.00235, nu=50e6)   # 50 000 samples
    b = PhyConfig(t_pt=0.00635, tau=0.00235, nu=50e6)   # 200 000 samples
    assert b.n_samples == 4 * a.n_samples
    rng = np.random.default_rng(17)
    sa = np.std([sample_slot(0.0, a, rng).mean_v for _ in range(20000)], ddof=1)
    sb = np.std([sample_slot(0.0, b, rng).mean_v for _ in range(20000)], ddof=1)
    # ratio of two sample stds from 20000 draws each: relative error about 0.7%
    assert sa / sb == pytest.approx(2.0, rel=0.03)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 0.1), st.lists(st.integers(0, 1), min_size=1, max_size=64), st.integers(0, 5))
def test_noiseless_channel_is_identity(gamma, bits, tx):
    c = PhyConfig(gamma=gamma, eta=0.0)
    u = units6()
    rx = (tx + 1) % 6
    lo, thr, hi = link_levels(u, LoadModel(1.5), c, tx, rx)
    det = DetectorState.from_threshold(thr, thr - lo, hi - thr)
    got = [detect(SlotObservation(hi if b else lo, 1), det) for b in bits]
    assert got == bits


def calibrated_ber(units, load, c, n, rng):
    """Error rate when every trial first recalibrates from M noisy blank slots at this load."""
    lo, thr, hi = link_levels(units, load, c, 1, 0)
    m = c.m_blank
    thr_hat = thr + rng.normal(0.0, c.sigma, size=(n, m)).mean(axis=1)
    bits = rng.integers(0, 2, size=n)
    v = np.where(bits == 1, hi, lo) + rng.normal(0.0, c.sigma, size=n)
    return np.mean((v > thr_hat).astype(int) != bits), (lo, thr, hi)


def predicted_calibrated_ber(lo, thr, hi, c):
    s = c.sigma * math.sqrt(1.0 + 1.0 / c.m_blank)
    return ber_standard(thr - lo, hi - thr, s)


@pytest.mark.parametrize("r_new", [1.0, 1.2, 1.9, 3.0])
def test_recalibration_restores_ber_after_load_step(r_new):
    c = PhyConfig(gamma=0.006, t_pt=0.006)
    u = units6()
    rng = np.random.default_rng(int(r_new * 100))
    n = 400_000
    before, lv0 = calibrated_ber(u, LoadModel(1.5), c, n, rng)
    after, lv1 = calibrated_ber(u, LoadModel(r_new), c, n, rng)
    for emp, lv in ((before, lv0), (after, lv1)):
        p = predicted_calibrated_ber(*lv, c)
        assert abs(emp - p) <= 3 * math.sqrt(p * (1 - p) / n)
    # keeping the old threshold at the new load point is far worse
    lo1, _, hi1 = lv1
    stale = ber_standard(lv0[1] - lo1, hi1 - lv0[1], c.sigma) if lo1 < lv0[1] < hi1 else 0.5
    assert stale > 10 * after
