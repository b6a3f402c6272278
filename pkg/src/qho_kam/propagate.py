"""Time integration of i u' = (A + eps P(omega t)) u on the truncated basis.

The default integrator works in the interaction picture v = e^{i A t} u, where
the generator has entries

    H_ij(t) = sum_k P^(k)_ij exp(i (k.omega + lambda_i - lambda_j) t).

A Magnus expansion truncated after the commutator term is used with both terms
integrated exactly over each step: the single integral in closed form and the
ordered double integral by a Gauss-Legendre rule that separates into matrix
products. Both moments depend on the step start only through diagonal phase
factors, so they are tabulated once. Each step multiplies v by the exponential
of an anti-hermitian matrix, hence the flow is unitary up to roundoff.

An adaptive Runge-Kutta alternative (scipy DOP853) is available for checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from .decay_matrix import matrix_exp
from .errors import AccuracyError, DomainError
from .fourier import FourierMatrixSeries, _modes
from .kam import ReducibilityResult, compose_transform
from .spectrum import SpectrumModel, nu_array

__all__ = [
    "sobolev_norm",
    "Trajectory",
    "integrate",
    "reduced_trajectory",
    "DriftReport",
    "norm_drift_report",
    "PAD",
    "REPORT_EXCLUDE",
]

PAD = 16
REPORT_EXCLUDE = 8


def sobolev_norm(u, p: float) -> np.ndarray:
    """(sum_i i^p |u_i|^2)^(1/2), along the last axis."""
    if not np.isfinite(p):
        raise DomainError("p must be finite")
    u = np.asarray(u)
    w = np.arange(1, u.shape[-1] + 1, dtype=float) ** p
    out = np.sqrt(np.sum(w * np.abs(u) ** 2, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray
    method: str
    error_estimate: float = np.nan

    def norms(self, p: float, exclude_top: int = 0) -> np.ndarray:
        u = self.u[:, : self.u.shape[1] - exclude_top] if exclude_top else self.u
        return sobolev_norm(u, p)

    def drift(self) -> float:
        n0 = sobolev_norm(self.u, 0.0)
        return float(np.max(np.abs(n0 / n0[0] - 1.0)))

    def records(self, p: float, exclude_top: int = 0) -> list[dict]:
        l0 = self.norms(0.0, exclude_top)
        lp = self.norms(p, exclude_top)
        return [{"t": float(t), "norm_l0": float(a), "norm_lp": float(b)} for t, a, b in zip(self.t, l0, lp)]


def _phi1_imag(y):
    """(e^{iy} - 1)/(iy), stable at y = 0."""
    return np.sinc(y / np.pi) + 0.5j * y * np.sinc(y / (2 * np.pi)) ** 2


class _MagnusTables:
    """Step-independent moments of the interaction-picture generator."""

    def __init__(self, lam, P: FourierMatrixSeries, omega, h, nodes=48):
        self.lam = lam
        self.h = h
        n = P.n
        ks = _modes(n, P.K)
        self.ks = ks
        kw = ks @ omega
        dl = lam[:, None] - lam[None, :]
        Phi = kw[:, None, None] + dl[None]  # (modes, N, N)
        Pk = P.coeffs.reshape(-1, P.N, P.N)
        keep = np.flatnonzero(np.max(np.abs(Pk), axis=(1, 2)) > 0)
        self.first = Pk[keep] * h * _phi1_imag(Phi[keep] * h)
        self.first_k = ks[keep]
        u, w = np.polynomial.legendre.leggauss(nodes)
        u, w = 0.5 * (u + 1.0), 0.5 * w
        # ordered double integral int_0^h ds1 int_0^s1 ds2 of e^{i a s1 + i b s2}
        # = h^2 int_0^1 e^{i a h u} u phi1(i b h u) du, separable at each node u
        q_of = {}
        for a_i in range(len(keep)):
            for b_i in range(len(keep)):
                ka, kb = keep[a_i], keep[b_i]
                q = tuple(ks[ka] + ks[kb])
                acc = q_of.setdefault(q, np.zeros((P.N, P.N), dtype=complex))
                for uq, wq in zip(u, w):
                    Ea = Pk[ka] * np.exp(1j * Phi[ka] * h * uq)
                    Ga = Pk[ka] * (uq * _phi1_imag(Phi[ka] * h * uq))
                    Eb = Pk[kb] * np.exp(1j * Phi[kb] * h * uq)
                    Gb = Pk[kb] * (uq * _phi1_imag(Phi[kb] * h * uq))
                    acc += (wq * h * h) * (Ea @ Gb - Ga @ Eb)
        self.second_q = np.array(list(q_of.keys()), dtype=float).reshape(-1, n)
        self.second = np.array(list(q_of.values())).reshape(-1, P.N, P.N)

    def omega_step(self, t0, omega, eps):
        ph1 = np.exp(1j * (self.first_k @ omega) * t0)
        ph2 = np.exp(1j * (self.second_q @ omega) * t0)
        M = -1j * eps * np.tensordot(ph1, self.first, axes=1) - 0.5 * eps**2 * np.tensordot(ph2, self.second, axes=1)
        d = np.exp(1j * self.lam * t0)
        return d[:, None] * M * np.conj(d)[None, :]


def _lam_of(A0, N):
    return nu_array(A0, N) if isinstance(A0, SpectrumModel) else np.asarray(A0, dtype=float)


def _magnus(lam, P, eps, omega, u0, T, h, out_every, nodes):
    steps = int(np.ceil(T / h - 1e-12))
    h = T / steps
    tab = _MagnusTables(lam, P, omega, h, nodes) if eps != 0 else None
    v = u0.astype(complex).copy()
    ts, us = [0.0], [u0.astype(complex).copy()]
    for s in range(steps):
        t0 = s * h
        if tab is not None:
            v = matrix_exp(tab.omega_step(t0, omega, eps), tol=1e-17) @ v
        if (s + 1) % out_every == 0 or s + 1 == steps:
            t1 = (s + 1) * h
            ts.append(t1)
            us.append(np.exp(-1j * lam * t1) * v)
    return np.array(ts), np.array(us)


def _dop853(lam, P, eps, omega, u0, T, t_eval, rtol, atol):
    ks = _modes(P.n, P.K)
    kw = ks @ omega
    Pk = P.coeffs.reshape(-1, P.N, P.N)
    keep = np.flatnonzero(np.max(np.abs(Pk), axis=(1, 2)) > 0)
    Pk, kw = Pk[keep], kw[keep]
    N = len(lam)

    def rhs(t, y):
        v = y[:N] + 1j * y[N:]
        d = np.exp(1j * lam * t)
        M = np.tensordot(np.exp(1j * kw * t), Pk, axes=1)
        dv = -1j * eps * (d * (M @ (np.conj(d) * v)))
        return np.concatenate([dv.real, dv.imag])

    y0 = np.concatenate([u0.real, u0.imag]).astype(float)
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise AccuracyError(f"adaptive integration failed: {sol.message}")
    v = sol.y[:N].T + 1j * sol.y[N:].T
    return sol.t, np.exp(-1j * lam[None, :] * sol.t[:, None]) * v


def integrate(
    A0,
    P0: FourierMatrixSeries,
    eps: float,
    omega,
    u0,
    T: float,
    dt: float = 0.1,
    out_every: int = 10,
    method: str = "magnus",
    nodes: int = 48,
    rtol: float = 1e-11,
    atol: float = 1e-13,
    estimate_error: bool = False,
) -> Trajectory:
    """Solve i u' = (A0 + eps P0(omega t)) u on [0, T].

    ``method="magnus"`` uses fixed steps ``dt`` and stores every
    ``out_every``-th state. ``method="dop853"`` is adaptive with the given
    tolerances and reports at the same times. With ``estimate_error`` the
    Magnus run is repeated at twice the step and the largest difference is
    stored as ``error_estimate``.
    """
    u0 = np.asarray(u0, dtype=complex)
    if not T > 0:
        raise DomainError("T must be positive")
    nrm = np.linalg.norm(u0)
    if abs(nrm - 1.0) > 1e-12:
        raise DomainError("u0 must be normalized in l^2")
    lam = _lam_of(A0, P0.N)
    if u0.shape != (P0.N,) or lam.shape != (P0.N,):
        raise DomainError("state, spectrum and matrix sizes differ")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if method == "magnus":
        if not dt > 0:
            raise AccuracyError("step size must be positive")
        t, u = _magnus(lam, P0, eps, omega, u0, T, dt, out_every, nodes)
        err = np.nan
        if estimate_error:
            if out_every % 2:
                raise DomainError("error estimate needs an even out_every")
            t2, u2 = _magnus(lam, P0, eps, omega, u0, T, 2 * dt, out_every // 2, nodes)
            m = min(len(t), len(t2))
            if not np.allclose(t[:m], t2[:m]):
                raise DomainError("step grids do not align for the error estimate")
            err = float(np.max(np.linalg.norm(u[:m] - u2[:m], axis=1)))
        return Trajectory(t, u, method, err)
    if method == "dop853":
        steps = int(np.ceil(T / dt - 1e-12))
        t_eval = np.unique(np.concatenate([np.arange(0, steps + 1, out_every) * (T / steps), [T]]))
        t, u = _dop853(lam, P0, eps, omega, u0, T, t_eval, rtol, atol)
        return Trajectory(t, u, method)
    raise DomainError(f"unknown method {method!r}")


def reduced_trajectory(result: ReducibilityResult, u0, times) -> Trajectory:
    """u(t) = Phi(omega t) e^{-i t Lambda_inf} Phi(0)^{-1} u0 from a reducibility run."""
    u0 = np.asarray(u0, dtype=complex)
    times = np.asarray(times, dtype=float)
    gens = result.state.generators
    N = len(result.lambda_inf)
    n = len(result.omega)
    Phi0 = compose_transform(gens, np.zeros(n), N)
    w0 = np.linalg.solve(Phi0, u0)
    th = times[:, None] * result.omega[None, :]
    Phit = compose_transform(gens, th, N)
    if Phit.ndim == 2:
        Phit = Phit[None]
    w = np.exp(-1j * times[:, None] * result.lambda_inf[None, :]) * w0[None, :]
    u = np.einsum("mij,mj->mi", Phit, w)
    if times.size and times[0] == 0.0:
        u[0] = u0
    return Trajectory(times, u, "reduced")


class DriftReport(NamedTuple):
    max_ratio: float
    min_ratio: float
    C_fit: float


def norm_drift_report(traj: Trajectory, p: float, alpha: float = 1.0, eps: float | None = None,
                      exclude_top: int = REPORT_EXCLUDE) -> DriftReport:
    """Extremal ||u(t)||_p / ||u(0)||_p, ignoring the top ``exclude_top`` modes.

    ``C_fit`` is max(max_ratio - 1, 1 - min_ratio) / eps when eps is given.
    """
    if not 0 <= p < 2 * alpha + 1:
        raise DomainError(f"p must lie in [0, {2 * alpha + 1})")
    nrm = traj.norms(p, exclude_top)
    r = nrm / nrm[0]
    hi, lo = float(np.max(r)), float(np.min(r))
    C = max(hi - 1.0, 1.0 - lo) / eps if eps else np.nan
    return DriftReport(hi, lo, C)
