"""Mode-by-mode solution of the homological equation [A, B] - i dB/dt = A~ - P + R.

With A = diag(lambda) and B(omega t) = sum_k B^(k) e^{i k.omega t}, the equation
decouples into scalar equations

    (k.omega + lambda_i - lambda_j) B^(k)_i^j = delta_{k0} A~_i^j - P^(k)_i^j + R^(k)_i^j

which are solved for |k| <= K, leaving the modes beyond K in the remainder R
and the diagonal of the mean in A~.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .decay_matrix import NormParams, delta, norm_alpha_beta, norm_alpha_plus_beta
from .errors import DomainError, ResonantFrequency
from .fourier import FourierMatrixSeries, _modes, strip_sample_points

__all__ = [
    "HomologicalSolution",
    "divisor_scan",
    "solve_homological",
    "homological_residual",
    "BoundReport",
    "key_lemma_constant",
    "key_lemma_check",
    "derivative_solution_check",
]


@dataclass
class HomologicalSolution:
    A_tilde: np.ndarray
    B: FourierMatrixSeries
    R: FourierMatrixSeries
    smallest_divisor: float
    residual: float
    K: int
    kappa: float


def divisor_scan(lam, omega, K: int, kappa: float, chunk: int = 4096):
    """Smallest normalized divisor |k.omega + lam_i - lam_j| / (1 + |i-j|) over |k| <= K.

    The pairs (k=0, i=i) are skipped. Returns ``(value, k, i, j, divisor)`` of
    the worst case, 1-based indices; raises :class:`ResonantFrequency` if it is
    below ``kappa``.
    """
    lam = np.asarray(lam, dtype=float)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n, N = omega.size, lam.size
    idx = np.arange(N)
    dlam = lam[:, None] - lam[None, :]
    weight = 1.0 + np.abs(idx[:, None] - idx[None, :])
    modes = _modes(n, K)
    best = (np.inf, None, 0, 0, np.inf)
    for start in range(0, len(modes), chunk):
        ks = modes[start : start + chunk]
        div = np.abs((ks @ omega)[:, None, None] + dlam[None])
        zero = np.all(ks == 0, axis=1)
        for q in np.flatnonzero(zero):
            div[q, idx, idx] = np.inf
        ratio = div / weight
        a = int(np.argmin(ratio))
        q, i, j = np.unravel_index(a, ratio.shape)
        if ratio[q, i, j] < best[0]:
            best = (float(ratio[q, i, j]), ks[q], i + 1, j + 1, float(div[q, i, j]))
    value, k, i, j, div = best
    if k is None:
        return np.inf, (0,) * n, 0, 0, np.inf
    if value < kappa:
        raise ResonantFrequency(k, i, j, div, kappa * (1 + abs(i - j)))
    return value, tuple(int(v) for v in k), i, j, div


def _default_sigma_prime(S):
    return 0.5 * S.sigma if np.isfinite(S.sigma) else 0.5


def homological_residual(lam, omega, P, sol, p: NormParams = NormParams(), sigma_prime=None) -> float:
    """sup over strip samples of |[diag lam, B] - i dB/dt - (A~ - P + R)|_{a,b}.

    Every term is synthesized separately at the sample angles and combined
    there, so the check does not reuse the mode-wise division.
    """
    sp = _default_sigma_prime(P) if sigma_prime is None else sigma_prime
    K = max(P.K, sol.B.K)
    pts = strip_sample_points(P.n, K, sp)
    lam = np.asarray(lam, dtype=float)
    Bv = sol.B.synthesize(pts, check_strip=False)
    Bdot = sol.B.theta_time_derivative(omega).synthesize(pts, check_strip=False)
    Pv = P.synthesize(pts, check_strip=False)
    Rv = sol.R.synthesize(pts, check_strip=False)
    comm = (lam[:, None] - lam[None, :]) * Bv
    Z = comm - 1j * Bdot - (sol.A_tilde - Pv + Rv)
    return float(np.max(norm_alpha_beta(Z, p)))


def solve_homological(
    lam,
    P: FourierMatrixSeries,
    omega,
    K: int,
    kappa: float,
    p: NormParams = NormParams(),
    compute_residual: bool = True,
    sigma_prime=None,
    herm_tol: float = 1e-10,
) -> HomologicalSolution:
    """Solve for (A~, B, R) with Fourier cutoff K and divisor floor kappa.

    Every divisor with |k| <= K is screened against kappa (1 + |i-j|), also for
    modes absent from P, and a violation raises :class:`ResonantFrequency`.
    B and R are stored with P's cutoff.
    """
    lam = np.asarray(lam, dtype=float)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    if K < 0:
        raise DomainError("K must be >= 0")
    if omega.shape != (P.n,):
        raise DomainError(f"omega must have {P.n} components")
    if lam.shape != (P.N,):
        raise DomainError("lambda length must match the matrix size")
    scale = float(np.max(np.abs(P.coeffs), initial=0.0))
    if P.hermitian_defect() > herm_tol * max(scale, 1.0):
        raise DomainError("P is not hermitian")

    smallest = divisor_scan(lam, omega, K, kappa)[0]

    Kb = min(K, P.K)
    head, R = P.split_tail(Kb)
    modes = P.modes()
    shape = (2 * P.K + 1,) * P.n
    kw = (modes @ omega).reshape(shape)
    div = kw[(...,) + (None, None)] + (lam[:, None] - lam[None, :])
    zero = (P.K,) * P.n
    N = P.N
    with np.errstate(divide="ignore", invalid="ignore"):
        Bc = -head.coeffs / div
    Bc[zero][np.arange(N), np.arange(N)] = 0.0
    inside = (np.max(np.abs(modes), axis=1) <= Kb).reshape(shape)
    Bc[~inside] = 0.0
    A_tilde = np.diag(np.real(np.diag(P.coeffs[zero]))).astype(float)
    B = FourierMatrixSeries(Bc, P.sigma)
    sol = HomologicalSolution(A_tilde, B, R, smallest, np.nan, K, kappa)
    if compute_residual:
        sol.residual = homological_residual(lam, omega, P, sol, p, sigma_prime)
    return sol


class BoundReport(NamedTuple):
    max_ratio: float
    C: float
    passed: bool
    argmax: tuple
    norm_ratio: float


def key_lemma_constant(beta: float, c_mu: float, c1: float) -> float:
    return 2.0 ** (beta + 1) * (c_mu + c1 + 1.0)


def key_lemma_check(Q, mu, omega, k, kappa: float, p: NormParams, c_mu: float, c1: float, nu=None) -> BoundReport:
    """Divide one Fourier block by its divisors and measure the decay bound.

    Forms B_i^j = Q_i^j / (k.omega + mu_i - mu_j) and reports the largest
    pointwise ratio of (1+|i-j|)^(a+1)|B_i^j| + (1+|i-j|)(ij)^b |Delta B_i^j|
    to |Q|_{a,b} / kappa^2, against C = 2^(b+1)(c_mu + c1 + 1). Entries of the
    last row and column, where Delta B is not defined, carry only the first
    term. ``norm_ratio`` is |B|_{a+,b} kappa^2 / |Q|_{a,b}. For k = 0 the
    diagonal of B is set to zero.

    ``nu`` defaults to the oscillator levels 2i - 1.
    """
    Q = np.asarray(Q)
    mu = np.asarray(mu, dtype=float)
    N = Q.shape[-1]
    if mu.shape != (N,):
        raise DomainError("mu must have one entry per row of Q")
    nu = 2.0 * np.arange(1, N + 1) - 1.0 if nu is None else np.asarray(nu, dtype=float)[:N]
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    k = np.atleast_1d(np.asarray(k))
    kw = float(k @ omega)
    idx = np.arange(1, N + 1, dtype=float)
    dist = np.abs(idx[:, None] - idx[None, :])
    div = kw + mu[:, None] - mu[None, :]
    check = np.ones((N, N), dtype=bool)
    if not np.any(k):
        np.fill_diagonal(check, False)
    bad = np.argwhere(check & (np.abs(div) < kappa * (1 + dist)))
    if len(bad):
        pairs = [(int(a) + 1, int(b) + 1) for a, b in bad[:10]]
        raise DomainError(f"small divisor condition fails at (i, j) = {pairs}{' ...' if len(bad) > 10 else ''}")
    step = np.diff(mu) - np.diff(nu)
    lim = c_mu / idx[:-1] ** (2 * p.beta)
    bad = np.flatnonzero(np.abs(step) > lim * (1 + 1e-12))
    if len(bad):
        raise DomainError(f"mu - nu difference condition fails at i = {[int(i) + 1 for i in bad[:10]]}")
    B = np.where(check, Q / np.where(check, div, 1.0), 0.0)
    C = key_lemma_constant(p.beta, c_mu, c1)
    qn = float(norm_alpha_beta(Q, p))
    if qn == 0.0:
        return BoundReport(0.0, C, True, (), 0.0)
    lhs = (1 + dist) ** (p.alpha + 1) * np.abs(B)
    if N >= 2:
        lhs[:-1, :-1] += (1 + dist[:-1, :-1]) * np.outer(idx[:-1], idx[:-1]) ** p.beta * np.abs(delta(B))
    ratio = lhs * kappa**2 / qn
    a = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    nr = float(norm_alpha_plus_beta(B, p)) * kappa**2 / qn
    mr = float(ratio[a])
    return BoundReport(mr, C, mr <= C, (int(a[0]) + 1, int(a[1]) + 1), nr)


def derivative_solution_check(lam, P: FourierMatrixSeries, omega, K: int, kappa: float, h: float = 1e-4) -> float:
    """Residual of the omega-differentiated homological equation.

    The solution is re-solved at omega +- h e_l; the central differences dB,
    dA~ (and d lambda when ``lam`` is a callable of omega) must satisfy

        (k.omega) dB + [diag lam, dB] + k_l B + [diag dlam, B] = delta_{k0} dA~

    for every solved mode (P itself does not depend on omega). Returns the max
    entry of the left minus right side over k, i, j and l.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    lam_of = lam if callable(lam) else (lambda w, _l=np.asarray(lam, dtype=float): _l)
    base = solve_homological(lam_of(omega), P, omega, K, kappa, compute_residual=False)
    l0 = np.asarray(lam_of(omega), dtype=float)
    modes = P.modes()
    shape = (2 * P.K + 1,) * P.n
    zero = (P.K,) * P.n
    worst = 0.0
    for l in range(P.n):
        e = np.zeros(P.n)
        e[l] = h
        sp = solve_homological(lam_of(omega + e), P, omega + e, K, kappa, compute_residual=False)
        sm = solve_homological(lam_of(omega - e), P, omega - e, K, kappa, compute_residual=False)
        dB = (sp.B.coeffs - sm.B.coeffs) / (2 * h)
        dA = (sp.A_tilde - sm.A_tilde) / (2 * h)
        dl = (np.asarray(lam_of(omega + e)) - np.asarray(lam_of(omega - e))) / (2 * h)
        kw = (modes @ omega).reshape(shape)[(...,) + (None, None)]
        kl = modes[:, l].reshape(shape)[(...,) + (None, None)]
        lhs = (kw + (l0[:, None] - l0[None, :])) * dB + kl * base.B.coeffs + (dl[:, None] - dl[None, :]) * base.B.coeffs
        lhs[zero] -= dA
        worst = max(worst, float(np.max(np.abs(lhs))))
    return worst
