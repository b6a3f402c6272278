import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qho_kam.decay_matrix import NormParams
from qho_kam.errors import DomainError, ResonantFrequency
from qho_kam.fourier import FourierMatrixSeries
from qho_kam.homological import (
    derivative_solution_check,
    divisor_scan,
    key_lemma_check,
    key_lemma_constant,
    solve_homological,
)

GOLDEN = (1 + np.sqrt(5)) / 2
P = NormParams(1.0, 0.5)


def random_hermitian_series(rng, N, K, n=1, sigma=1.0, scale=1.0):
    shape = (2 * K + 1,) * n + (N, N)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    S = FourierMatrixSeries(scale * c, sigma)
    return (S + S.adjoint()) * 0.5


def test_constant_diagonal_is_absorbed():
    lam = 2.0 * np.arange(1, 5) - 1
    D = np.diag([0.1, -0.2, 0.3, 0.05])
    S = FourierMatrixSeries.constant(D, 1, 2, sigma=1.0)
    sol = solve_homological(lam, S, [GOLDEN], 2, 1e-3)
    assert np.all(sol.B.coeffs == 0)
    assert np.all(sol.R.coeffs == 0)
    assert np.allclose(sol.A_tilde, D)


def test_two_level_single_mode():
    lam = np.array([1.0, 3.0])
    M = np.zeros((2, 2), dtype=complex)
    M[1, 0] = 1.0
    S = FourierMatrixSeries.from_modes({(1,): M, (-1,): M.conj().T}, 1, 1, 2, sigma=1.0)
    sol = solve_homological(lam, S, [1.0], 1, 0.1)
    assert sol.B.coeff((1,))[1, 0] == pytest.approx(-1.0 / 3.0, abs=1e-15)
    # d/domega of -1/(omega + 2) at omega = 1 is 1/9
    h = 1e-4
    bp = solve_homological(lam, S, [1.0 + h], 1, 0.1, compute_residual=False).B.coeff((1,))[1, 0]
    bm = solve_homological(lam, S, [1.0 - h], 1, 0.1, compute_residual=False).B.coeff((1,))[1, 0]
    assert ((bp - bm) / (2 * h)).real == pytest.approx(1.0 / 9.0, abs=1e-6)


def test_random_residual_small():
    rng = np.random.default_rng(0)
    lam = 2.0 * np.arange(1, 9) - 1
    S = random_hermitian_series(rng, 8, 3)
    sol = solve_homological(lam, S, [GOLDEN], 3, 1e-3)
    assert sol.residual <= 1e-11


def test_structure_of_solution():
    rng = np.random.default_rng(1)
    lam = 2.0 * np.arange(1, 11) - 1
    S = random_hermitian_series(rng, 10, 3)
    sol = solve_homological(lam, S, [GOLDEN], 2, 1e-3)
    assert sol.B.is_antihermitian(1e-12)
    assert sol.R.is_hermitian(1e-12)
    assert np.allclose(sol.A_tilde, sol.A_tilde.conj().T)
    assert np.all(np.diag(sol.B.coeff((0,))) == 0)
    assert np.all(sol.A_tilde == np.diag(np.diag(sol.A_tilde)))
    # modes beyond the cutoff go to R untouched
    assert np.array_equal(sol.R.coeff((3,)), S.coeff((3,)))
    assert np.all(sol.R.coeff((1,)) == 0)


def test_resonance_detected():
    lam = 2.0 * np.arange(1, 6) - 1
    S = FourierMatrixSeries.zeros(1, 2, 5, sigma=1.0)
    with pytest.raises(ResonantFrequency) as err:
        solve_homological(lam, S, [1.0], 2, 1e-3)
    assert err.value.divisor == 0.0


def test_divisor_scan_reports_worst_pair():
    lam = 2.0 * np.arange(1, 6) - 1
    val, k, i, j, div = divisor_scan(lam, [GOLDEN], 3, 1e-6)
    brute = min(
        abs(kk * GOLDEN + lam[a] - lam[b]) / (1 + abs(a - b))
        for kk in range(-3, 4) for a in range(5) for b in range(5) if (kk, a) != (0, b) and not (kk == 0 and a == b)
    )
    assert val == pytest.approx(brute, rel=1e-14)


def test_non_hermitian_rejected():
    S = FourierMatrixSeries.from_modes({(0,): np.array([[0, 1.0], [0, 0]])}, 1, 0, 2)
    with pytest.raises(DomainError):
        solve_homological(np.array([1.0, 3.0]), S, [GOLDEN], 0, 1e-3)


def test_key_lemma_zero_and_constant():
    rep = key_lemma_check(np.zeros((6, 6)), 2.0 * np.arange(1, 7) - 1, [GOLDEN], [1], 0.1, P, 0.1, 1.0)
    assert rep.max_ratio == 0.0 and rep.passed
    for cm in (1e-6, 0.1, 0.5):
        assert key_lemma_constant(0.5, cm, 1.0) == pytest.approx(2**1.5 * (cm + 2.0))


def test_key_lemma_preconditions():
    mu = 2.0 * np.arange(1, 6) - 1
    with pytest.raises(DomainError):
        key_lemma_check(np.ones((5, 5)), mu, [1.0], [2], 0.1, P, 0.1, 1.0)  # 2 + 1 - 3 = 0
    bad = mu.copy()
    bad[3] += 0.5
    with pytest.raises(DomainError):
        key_lemma_check(np.ones((5, 5)), bad, [GOLDEN], [1], 0.01, P, 0.1, 1.0)


def test_derivative_examples():
    lam = 2.0 * np.arange(1, 5) - 1
    D = FourierMatrixSeries.constant(np.diag([0.1, 0.2, 0.3, 0.4]), 1, 2, sigma=1.0)
    assert derivative_solution_check(lam, D, [GOLDEN], 2, 1e-3) == 0.0
    rng = np.random.default_rng(3)
    lam8 = 2.0 * np.arange(1, 9) - 1
    S = random_hermitian_series(rng, 8, 3)
    assert derivative_solution_check(lam8, S, [GOLDEN], 3, 1e-3, h=1e-4) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 12), st.integers(0, 3))
def test_residual_property(seed, N, K):
    rng = np.random.default_rng(seed)
    lam = 2.0 * np.arange(1, N + 1) - 1
    S = random_hermitian_series(rng, N, K)
    sol = solve_homological(lam, S, [GOLDEN], K, 1e-4)
    assert sol.residual <= 1e-10 * max(1.0, float(np.max(np.abs(S.coeffs))))
    assert sol.B.is_antihermitian(1e-10)
