"""Matrix-valued trigonometric polynomials on the n-torus.

A series stores its coefficients densely, ``coeffs[k_1+K, ..., k_n+K]`` being
the ``N x N`` matrix of mode ``k`` (sup-norm cutoff ``|k| <= K``). Products of
series are formed on uniform theta grids and brought back with :func:`analyze`.
"""

from __future__ import annotations

import itertools
from typing import Callable

import numpy as np

from .decay_matrix import NormParams, norm_alpha_beta, norm_alpha_plus_beta
from .errors import DomainError

__all__ = [
    "FourierMatrixSeries",
    "theta_grid",
    "analyze",
    "strip_sample_points",
    "strip_norm",
    "FD_STEP",
    "series_from_function",
]

FD_STEP = 1e-4


def _modes(n, K):
    r = np.arange(-K, K + 1)
    return np.stack(np.meshgrid(*([r] * n), indexing="ij"), axis=-1).reshape(-1, n)


class FourierMatrixSeries:
    """sum_{|k| <= K} coeff(k) e^{i k.theta} with matrix coefficients.

    Parameters
    ----------
    coeffs : ndarray, shape (2K+1,)*n + (N, N)
    sigma : float
        Half-width of the strip |Im theta| < sigma the series is declared on.
    """

    def __init__(self, coeffs, sigma: float = np.inf):
        coeffs = np.asarray(coeffs, dtype=complex)
        n = coeffs.ndim - 2
        if n < 1:
            raise DomainError("coefficient array needs at least one mode axis")
        L = coeffs.shape[0]
        if L % 2 != 1 or any(s != L for s in coeffs.shape[:n]):
            raise DomainError(f"mode axes must all have odd length 2K+1, got {coeffs.shape[:n]}")
        if coeffs.shape[-1] != coeffs.shape[-2]:
            raise DomainError("coefficients must be square matrices")
        self.coeffs = coeffs
        self.n = n
        self.K = (L - 1) // 2
        self.sigma = float(sigma)

    # construction ----------------------------------------------------------------
    @classmethod
    def zeros(cls, n, K, N, sigma=np.inf):
        return cls(np.zeros((2 * K + 1,) * n + (N, N), dtype=complex), sigma)

    @classmethod
    def constant(cls, M, n=1, K=0, sigma=np.inf):
        M = np.asarray(M, dtype=complex)
        S = cls.zeros(n, K, M.shape[-1], sigma)
        S.coeffs[(K,) * n] = M
        return S

    @classmethod
    def from_modes(cls, modes: dict, n, K, N, sigma=np.inf):
        S = cls.zeros(n, K, N, sigma)
        for k, M in modes.items():
            S.coeffs[S._index(k)] = M
        return S

    # basic access ----------------------------------------------------------------
    @property
    def N(self) -> int:
        return self.coeffs.shape[-1]

    def modes(self) -> np.ndarray:
        """All k with |k| <= K, in the storage order of ``coeffs``."""
        return _modes(self.n, self.K)

    def _index(self, k):
        k = tuple(int(v) for v in np.atleast_1d(k))
        if len(k) != self.n:
            raise DomainError(f"mode must have {self.n} components")
        if max(abs(v) for v in k) > self.K:
            raise DomainError(f"mode {k} beyond cutoff K={self.K}")
        return tuple(v + self.K for v in k)

    def coeff(self, k) -> np.ndarray:
        kk = tuple(int(v) for v in np.atleast_1d(k))
        if max(abs(v) for v in kk) > self.K:
            return np.zeros((self.N, self.N), dtype=complex)
        return self.coeffs[self._index(kk)]

    def average(self) -> np.ndarray:
        return self.coeffs[(self.K,) * self.n].copy()

    def copy(self):
        return FourierMatrixSeries(self.coeffs.copy(), self.sigma)

    def resized(self, K: int):
        """Same series stored with cutoff K (modes beyond K are dropped)."""
        out = FourierMatrixSeries.zeros(self.n, K, self.N, self.sigma)
        m = min(K, self.K)
        src = tuple(slice(self.K - m, self.K + m + 1) for _ in range(self.n))
        dst = tuple(slice(K - m, K + m + 1) for _ in range(self.n))
        out.coeffs[dst] = self.coeffs[src]
        return out

    # algebra ---------------------------------------------------------------------
    def _check_compat(self, other):
        if (self.n, self.K, self.N) != (other.n, other.K, other.N):
            raise DomainError("series shapes differ")

    def __add__(self, other):
        self._check_compat(other)
        return FourierMatrixSeries(self.coeffs + other.coeffs, min(self.sigma, other.sigma))

    def __sub__(self, other):
        self._check_compat(other)
        return FourierMatrixSeries(self.coeffs - other.coeffs, min(self.sigma, other.sigma))

    def __mul__(self, c):
        return FourierMatrixSeries(self.coeffs * c, self.sigma)

    __rmul__ = __mul__

    def __neg__(self):
        return FourierMatrixSeries(-self.coeffs, self.sigma)

    def adjoint(self):
        """theta -> S(conj theta)^H, which for real theta is the pointwise adjoint."""
        flipped = self.coeffs[(slice(None, None, -1),) * self.n]
        return FourierMatrixSeries(np.conj(np.swapaxes(flipped, -1, -2)), self.sigma)

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs - self.adjoint().coeffs), initial=0.0))

    def is_hermitian(self, tol=1e-12) -> bool:
        return self.hermitian_defect() <= tol

    def is_antihermitian(self, tol=1e-12) -> bool:
        return float(np.max(np.abs(self.coeffs + self.adjoint().coeffs), initial=0.0)) <= tol

    def max_entry_by_mode(self) -> np.ndarray:
        return np.max(np.abs(self.coeffs), axis=(-2, -1))

    # operations ------------------------------------------------------------------
    def split_tail(self, K_cut: int):
        """(head, tail): modes with |k| <= K_cut and the rest, same storage shape."""
        if K_cut > self.K or K_cut < 0:
            raise DomainError(f"need 0 <= K_cut <= K={self.K}")
        mask = np.max(np.abs(self.modes()), axis=1) <= K_cut
        mask = mask.reshape((2 * self.K + 1,) * self.n)[(...,) + (None, None)]
        head = np.where(mask, self.coeffs, 0)
        tail = np.where(mask, 0, self.coeffs)
        return FourierMatrixSeries(head, self.sigma), FourierMatrixSeries(tail, self.sigma)

    def theta_time_derivative(self, omega):
        """d/dt S(omega t): coefficient k picks up the factor i k.omega."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if omega.shape != (self.n,):
            raise DomainError(f"omega must have {self.n} components")
        kw = (self.modes() @ omega).reshape((2 * self.K + 1,) * self.n)
        return FourierMatrixSeries(self.coeffs * (1j * kw)[(...,) + (None, None)], self.sigma)

    def synthesize(self, theta, check_strip: bool = True):
        """Evaluate at one point (shape (n,)) or a stack (M, n) of complex angles."""
        th = np.asarray(theta)
        single = th.ndim <= 1
        th = np.atleast_2d(th.reshape(-1, self.n) if th.ndim <= 1 else th)
        if th.shape[1] != self.n:
            raise DomainError(f"theta must have {self.n} components")
        if check_strip and np.any(np.abs(th.imag) >= self.sigma):
            raise DomainError(f"|Im theta| must be < sigma = {self.sigma}")
        phase = np.exp(1j * th @ self.modes().T)  # (M, modes)
        flat = self.coeffs.reshape(-1, self.N * self.N)
        out = (phase @ flat).reshape(-1, self.N, self.N)
        return out[0] if single else out

    def grid_samples(self, L: int | None = None):
        """Values on the uniform grid with L points per axis, shape (L,)*n + (N, N)."""
        L = 2 * self.K + 2 if L is None else L
        if L < 2 * self.K + 1:
            raise DomainError("grid too coarse for the stored modes")
        pad = np.zeros((L,) * self.n + (self.N, self.N), dtype=complex)
        r = np.arange(-self.K, self.K + 1) % L
        pad[np.ix_(*([r] * self.n))] = self.coeffs
        return np.fft.ifftn(pad, axes=tuple(range(self.n))) * L**self.n

    def __repr__(self):
        return f"FourierMatrixSeries(n={self.n}, K={self.K}, N={self.N}, sigma={self.sigma})"


def theta_grid(n: int, L: int) -> np.ndarray:
    """Uniform grid points, shape (L**n, n), in the C order of :meth:`grid_samples`."""
    g = 2 * np.pi * np.arange(L) / L
    return np.stack(np.meshgrid(*([g] * n), indexing="ij"), axis=-1).reshape(-1, n)


def analyze(samples, K: int, sigma: float = np.inf) -> FourierMatrixSeries:
    """Fourier coefficients |k| <= K of a map sampled on a uniform grid.

    ``samples`` has shape (L,)*n + (N, N) with grid point m at 2 pi m / L.
    """
    samples = np.asarray(samples)
    n = samples.ndim - 2
    L = samples.shape[0]
    if n < 1 or any(s != L for s in samples.shape[:n]):
        raise DomainError("samples must be on a uniform grid, shape (L,)*n + (N, N)")
    if L < 2 * K + 1:
        raise DomainError(f"aliasing: {L} grid points cannot resolve K={K} (need {2 * K + 1})")
    F = np.fft.fftn(samples, axes=tuple(range(n))) / L**n
    r = np.arange(-K, K + 1) % L
    return FourierMatrixSeries(F[np.ix_(*([r] * n))], sigma)


def strip_sample_points(n: int, K: int, sigma_prime: float, per_dim: int | None = None) -> np.ndarray:
    """Deterministic angles for strip norms: a real grid shifted by i*y, y in {-s, 0, s}^n, s = 0.95 sigma'."""
    per_dim = max(4 * (K + 1), 8) if per_dim is None else per_dim
    real = theta_grid(n, per_dim)
    s = 0.95 * sigma_prime
    shifts = np.array(list(itertools.product((-s, 0.0, s), repeat=n)))
    return (real[:, None, :] + 1j * shifts[None, :, :]).reshape(-1, n)


_NORMS = {"alpha_beta": norm_alpha_beta, "alpha_plus_beta": norm_alpha_plus_beta}


def strip_norm(
    S,
    p: NormParams,
    sigma_prime: float,
    omega_samples=None,
    kind: str = "alpha_beta",
    h: float = FD_STEP,
    per_dim: int | None = None,
) -> float:
    """Sampled sup over the strip of |S(theta)|, with the omega-Lipschitz part.

    ``S`` is a series, or a callable ``omega -> series`` when the map depends
    on the frequency; then ``omega_samples`` (shape (M, n)) lists where to
    sample, and the l=1 term is a central difference of step ``h`` along each
    frequency axis. The returned value is the max of the l=0 and l=1 parts.
    """
    norm = _NORMS[kind]
    if isinstance(S, FourierMatrixSeries):
        # samples sit at 0.95 sigma', strictly inside the declared strip
        if not 0 <= sigma_prime <= S.sigma:
            raise DomainError(f"sigma' = {sigma_prime} must lie in [0, sigma = {S.sigma}]")
        pts = strip_sample_points(S.n, S.K, sigma_prime, per_dim)
        return float(np.max(norm(S.synthesize(pts), p), initial=0.0))
    if not callable(S) or omega_samples is None:
        raise DomainError("a frequency-dependent series needs omega_samples")
    best = 0.0
    for om in np.atleast_2d(np.asarray(omega_samples, dtype=float)):
        S0 = S(om)
        best = max(best, strip_norm(S0, p, sigma_prime, kind=kind, per_dim=per_dim))
        for l in range(S0.n):
            e = np.zeros(S0.n)
            e[l] = h
            d = (S(om + e) - S(om - e)) * (1.0 / (2 * h))
            best = max(best, strip_norm(d, p, sigma_prime, kind=kind, per_dim=per_dim))
    return best


def series_from_function(f: Callable, n: int, K: int, sigma: float = np.inf, L: int | None = None):
    """Analyze a matrix function of theta sampled on a grid with L >= 2K+2 points per axis."""
    L = 2 * K + 2 if L is None else L
    th = theta_grid(n, L)
    vals = np.stack([np.asarray(f(t)) for t in th])
    N = vals.shape[-1]
    return analyze(vals.reshape((L,) * n + (N, N)), K, sigma)

