import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qho_kam.errors import DomainError
from qho_kam.resonance import (
    build_Dprime,
    build_h2_region,
    difference_window,
    fit_power_law,
    interval_measure,
    interval_union_measure,
    iota_exponents,
    measure_budget,
)
from qho_kam.spectrum import custom, nu_array, qho

TWO_PI = 2 * np.pi
# |x^2 + x| <= 0.05 on [0, 1] is [0, (sqrt(1.2) - 1)/2]; a 10^6-point grid agrees to 1e-6
QUAD_MEASURE = (np.sqrt(1.2) - 1) / 2


def _grid_measure(lo, hi, pts=2_000_001):
    x = np.linspace(0, TWO_PI, pts, endpoint=False)
    inside = np.zeros(pts, dtype=bool)
    for a, b in zip(lo, hi):
        inside |= (x > a) & (x < b)
    return inside.mean() * TWO_PI


def test_k1_exact_measure():
    gamma = 0.05
    reg = build_h2_region(qho(), gamma, 1, 1, samples=200_000, seed=3)
    # independent oracle: intervals of radius gamma (1 + |d|) around -2d for k = 1,
    # (the k = -1 conditions are the same intervals), clipped to [0, 2 pi)
    D = 20
    d = np.arange(-D, D + 1)
    lo, hi = -2.0 * d - gamma * (1 + np.abs(d)), -2.0 * d + gamma * (1 + np.abs(d))
    assert reg.exact == pytest.approx(_grid_measure(lo, hi), abs=1e-5)
    assert abs(reg.measure_excluded - reg.exact) <= reg.halfwidth


def test_measure_vanishes_with_gamma():
    vals = [build_h2_region(qho(), g, 2, 1, samples=50_000).exact for g in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] <= 1e-4


def test_h2_constant_bounded_under_k_doubling():
    # measure / (gamma K^(n+1)) must not grow when K doubles: the K^2 growth is an upper bound
    g = 5e-3
    c = [build_h2_region(qho(), g, K, 1, samples=10).exact / (g * K**2) for K in (2, 4, 8, 16)]
    assert all(b <= a * 1.05 for a, b in zip(c, c[1:]))


def test_retained_samples_obey_conditions():
    reg = build_h2_region(qho(), 0.02, 3, 2, samples=20_000, seed=1)
    w = reg.retained
    assert len(w) > 0
    assert 0 <= reg.measure_excluded <= TWO_PI**2
    for k1 in range(-3, 4):
        for k2 in range(-3, 4):
            if k1 == 0 and k2 == 0:
                continue
            kw = w @ np.array([k1, k2], float)
            for d in range(-40, 41):
                assert np.all(np.abs(kw + 2 * d) >= 0.02 * (1 + abs(d)))


def test_custom_sequence_matches_oscillator():
    a = build_h2_region(qho(), 0.03, 2, 1, samples=1000)
    b = build_h2_region(custom(lambda i: 2.0 * np.asarray(i) - 1, 1, 1, 1), 0.03, 2, 1, N_idx=60, samples=1000)
    assert a.exact == pytest.approx(b.exact, abs=1e-12)


def test_difference_window():
    assert difference_window(1, 1, 0.1) == int(np.floor((TWO_PI + 0.1) / 1.9))
    with pytest.raises(DomainError):
        difference_window(1, 1, 2.0)


def test_iota_values():
    assert iota_exponents(0.5, 1, 1.0) == (pytest.approx(1 / 3), 2.0)
    assert iota_exponents(0.5, 2)[1] == 3.0


def test_dprime_unperturbed():
    gamma, K, beta, c = 0.05, 2, 0.5, 0.05
    lam = nu_array(qho(), 200)
    reg = build_Dprime(lam, qho(), gamma, K, c, beta, samples=50_000, seed=2)
    h2 = build_h2_region(qho(), 2 * gamma, K, 1, samples=10)
    assert reg.exact >= h2.exact - 1e-12
    kappa = gamma ** (1 + 1 / beta)
    window = 2 * kappa * (1 + reg.params["d_max"]) * len(reg.zone_c)
    assert reg.exact <= h2.exact + window
    assert abs(reg.measure_excluded - reg.exact) <= reg.halfwidth
    # every kept sample is outside both families of zones
    assert not np.any(reg.excluded_mask(reg.retained[:2000]))


def test_dprime_small_kappa_limit():
    # with lambda = nu the window zones sit inside the H2 zones at 2 gamma once kappa is small
    gamma, K = 1e-3, 2
    lam = nu_array(qho(), 2000)
    reg = build_Dprime(lam, qho(), gamma, K, 1e-3, 0.5, samples=1000)
    h2 = build_h2_region(qho(), 2 * gamma, K, 1, samples=10)
    assert reg.exact == pytest.approx(h2.exact, rel=1e-9)


def test_dprime_rejects_far_lambda():
    lam = nu_array(qho(), 200) + 1.0
    with pytest.raises(DomainError):
        build_Dprime(lam, qho(), 0.05, 2, 0.05, 0.5, samples=100)


def test_interval_measure_examples():
    r = interval_measure(lambda x: x - 0.5, 1.0, 0.1)
    assert r.measure == pytest.approx(0.2, abs=1e-15) and r.passed
    r = interval_measure(lambda x: 2 * x, 1.0, 0.1)
    assert r.measure == pytest.approx(0.05, abs=1e-14) and r.measure <= 0.1
    r = interval_measure(lambda x: x * x + x, 1.0, 0.05)
    assert r.measure == pytest.approx(QUAD_MEASURE, abs=1e-12)
    x = np.linspace(0, 1, 1_000_001)
    assert abs(np.mean(np.abs(x * x + x) <= 0.05) - QUAD_MEASURE) <= 1e-6
    assert r.measure <= 0.1


def test_interval_measure_slope_audit():
    with pytest.raises(DomainError):
        interval_measure(lambda x: (x - 0.5) ** 2, 0.5, 0.1)


def test_fit_power_law_exact():
    x = np.array([1.0, 2.0, 4.0])
    e, c = fit_power_law(x, 3 * x**1.5)
    assert e == pytest.approx(1.5) and c == pytest.approx(3.0)


def test_budget_exponent_and_threshold():
    rep = measure_budget(1e-3)
    assert rep.iota1 == pytest.approx(1 / 3)
    assert rep.exponent == pytest.approx(1 / 51)
    tiny = measure_budget(rep.eps_threshold * 0.5)
    assert tiny.passed
    assert not measure_budget(min(0.99, rep.eps_threshold * 2)).passed


def test_interval_union():
    assert interval_union_measure([0, 0.5, 2], [1, 1.5, 3]) == pytest.approx(2.5)
    assert interval_union_measure([-1], [0.5]) == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-0.5, 0.5), st.floats(0.001, 0.3))
def test_interval_measure_linear_bound(slope, shift, kappa):
    r = interval_measure(lambda x: slope * (x - 0.5) + shift, slope, kappa)
    assert r.passed
    assert r.measure <= 2 * kappa / slope * (1 + 1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(1e-3, 0.05), st.integers(1, 4), st.integers(0, 1000))
def test_monte_carlo_within_halfwidth(gamma, K, seed):
    reg = build_h2_region(qho(), gamma, K, 1, samples=20_000, seed=seed)
    assert 0 <= reg.measure_excluded <= TWO_PI
    # 3-sigma band; allow a little slack for the rare outlier of a random test
    assert abs(reg.measure_excluded - reg.exact) <= 1.5 * reg.halfwidth + 1e-12
