"""The KAM iteration: schedule, one conjugation step, composition and residual.

One step solves the homological equation for the current diagonal
A_m = diag(lambda^(m)) and perturbation P_m, then sets

    A_{m+1} = A_m + A~_m
    P_{m+1} = R_m + int_0^1 e^{-s B} [(1-s)(A~_m + R_m) + s P_m, B] e^{s B} ds

with B = B_{m+1}. The integral is evaluated pointwise on a theta grid by
Gauss-Legendre quadrature in s and re-analyzed into Fourier modes.

The nominal schedule (eps_m, kappa_m, sigma_m, K_m) is always recorded. The
arithmetic uses a working divisor floor and a working Fourier cutoff, see
:class:`KamConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .decay_matrix import NormParams, matrix_exp, norm_alpha_beta, weighted_op_norm
from .errors import DomainError, NormBlowup, ResonantFrequency
from .fourier import FourierMatrixSeries, analyze, strip_norm, theta_grid
from .homological import solve_homological
from .spectrum import SpectrumModel, nu_array

__all__ = [
    "C_STAR",
    "KamSchedule",
    "KamConfig",
    "KamState",
    "ReducibilityResult",
    "initial_state",
    "kam_step",
    "run",
    "run_sampled",
    "compose_transform",
    "reducibility_residual",
    "ResidualReport",
    "transformation_report",
]

C_STAR = np.pi**2 / 6


@dataclass(frozen=True)
class KamSchedule:
    """Nominal parameters for steps m = 0..steps (index 0 holds eps0, sigma0)."""

    eps0: float
    sigma0: float
    eps: np.ndarray
    kappa: np.ndarray
    sigma: np.ndarray
    K: np.ndarray

    @classmethod
    def build(cls, eps0: float, sigma0: float, steps: int = 8) -> "KamSchedule":
        if not 0 < eps0 < 1:
            raise DomainError("eps0 must lie in (0, 1)")
        if not sigma0 > 0:
            raise DomainError("sigma0 must be positive")
        m = np.arange(steps + 1)
        with np.errstate(over="ignore", divide="ignore"):
            eps = eps0 ** ((4.0 / 3.0) ** m)
        drop = np.zeros(steps + 1)
        drop[1:] = sigma0 / (2 * C_STAR) / m[1:] ** 2
        sigma = sigma0 - np.cumsum(drop)
        kappa = np.full(steps + 1, np.nan)
        K = np.full(steps + 1, np.nan)
        kappa[1:] = eps[:-1] ** (1.0 / 16.0)
        with np.errstate(divide="ignore"):
            K[1:] = 2.0 * np.log(1.0 / eps[:-1]) / drop[1:]
        for a in (eps, kappa, sigma, K):
            a.setflags(write=False)
        return cls(eps0, sigma0, eps, kappa, sigma, K)

    @property
    def steps(self) -> int:
        return len(self.eps) - 1

    def table(self) -> list[dict]:
        return [
            {"m": int(m), "eps_m": float(self.eps[m]), "kappa_m": float(self.kappa[m]),
             "sigma_m": float(self.sigma[m]), "K_m": float(self.K[m])}
            for m in range(self.steps + 1)
        ]


@dataclass(frozen=True)
class KamConfig:
    """Numerical choices of the finite iteration.

    kappa_floor
        Working divisor floor: a step refuses a frequency only when a
        normalized divisor falls below min(kappa_m, kappa_floor).
    K_cap
        Working Fourier cutoff: step m uses min(floor(K_m), K_cap).
    quad_order, audit_order
        Gauss-Legendre orders of the s-integral and of its audit (None skips it).
    omega_derivative
        Carry companion iterations at omega +- h e_l so the recorded norms
        include the frequency derivative.
    blowup_factor
        NormBlowup is raised when |P_{m+1}| > blowup_factor * eps_{m+1}.
    """

    params: NormParams = NormParams()
    kappa_floor: float = 1e-5
    K_cap: int = 16
    quad_order: int = 8
    audit_order: int | None = 12
    omega_derivative: bool = True
    fd_step: float = 1e-4
    blowup_factor: float = 1.0


@dataclass
class KamState:
    m: int
    lam: np.ndarray
    P: FourierMatrixSeries
    omega: np.ndarray
    lam0: np.ndarray
    generators: list = field(default_factory=list)
    norms_log: list = field(default_factory=list)
    side: list = field(default_factory=list)  # [(omega, lam, P)] companions at omega +- h e_l


def _legendre01(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _conjugation_integral(X0, X1, Bv, order):
    """int_0^1 e^{-sB}[(1-s) X0 + s X1, B] e^{sB} ds, pointwise over the leading axis."""
    s, w = _legendre01(order)
    acc = np.zeros_like(Bv)
    for sq, wq in zip(s, w):
        X = (1.0 - sq) * X0 + sq * X1
        C = X @ Bv - Bv @ X
        acc += wq * (matrix_exp(-sq * Bv) @ C @ matrix_exp(sq * Bv))
    return acc


class _Advance(NamedTuple):
    lam: np.ndarray
    P: FourierMatrixSeries
    A_tilde: np.ndarray
    B: FourierMatrixSeries
    R: FourierMatrixSeries
    smallest: float
    quad_defect: float


def _advance(lam, P, omega, K, kappa, cfg: KamConfig, audit: bool):
    sol = solve_homological(lam, P, omega, K, kappa, cfg.params, compute_residual=False)
    Kw = P.K
    L = 4 * Kw + 2  # quadratic products stay alias-free on this grid
    n, N = P.n, P.N
    Bv = sol.B.grid_samples(L).reshape(-1, N, N)
    Pv = P.grid_samples(L).reshape(-1, N, N)
    Rv = sol.R.grid_samples(L).reshape(-1, N, N)
    X0 = sol.A_tilde[None] + Rv
    vals = Rv + _conjugation_integral(X0, Pv, Bv, cfg.quad_order)
    defect = np.nan
    if audit and cfg.audit_order:
        ref = Rv + _conjugation_integral(X0, Pv, Bv, cfg.audit_order)
        defect = float(np.max(np.abs(ref - vals), initial=0.0))
    Pn = analyze(vals.reshape((L,) * n + (N, N)), Kw, P.sigma)
    return _Advance(lam + np.diag(sol.A_tilde), Pn, sol.A_tilde, sol.B, sol.R, sol.smallest_divisor, defect)


def initial_state(P0: FourierMatrixSeries, A0, omega, K_work: int, cfg: KamConfig = KamConfig()) -> KamState:
    """State at m = 0. ``A0`` is a spectrum model or the array lambda_1..lambda_N."""
    lam0 = nu_array(A0, P0.N) if isinstance(A0, SpectrumModel) else np.asarray(A0, dtype=float).copy()
    if lam0.shape != (P0.N,):
        raise DomainError("A0 does not match the matrix size of P0")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.shape != (P0.n,):
        raise DomainError(f"omega must have {P0.n} components")
    P = P0.resized(K_work)
    side = []
    if cfg.omega_derivative:
        for l in range(P0.n):
            for sgn in (1.0, -1.0):
                e = np.zeros(P0.n)
                e[l] = sgn * cfg.fd_step
                side.append((omega + e, lam0.copy(), P.copy()))
    return KamState(0, lam0.copy(), P, omega, lam0, [], [], side)


def _measured_norm(main, diffs, fn):
    return max([fn(main)] + [fn(d) for d in diffs])


def kam_step(state: KamState, schedule: KamSchedule, cfg: KamConfig = KamConfig()) -> KamState:
    """Advance the state by one conjugation.

    Raises :class:`ResonantFrequency` from the homological solver and
    :class:`NormBlowup` (with the advanced state attached) when the new
    perturbation exceeds the schedule.
    """
    m = state.m
    if m + 1 > schedule.steps:
        raise DomainError("schedule too short for another step")
    p = cfg.params
    K_nom = schedule.K[m + 1]
    K = int(min(np.floor(K_nom), cfg.K_cap))
    kappa = float(min(schedule.kappa[m + 1], cfg.kappa_floor))
    if state.P.K != K:
        state = replace(state, P=state.P.resized(K), side=[(w, l, Pp.resized(K)) for (w, l, Pp) in state.side])
    main = _advance(state.lam, state.P, state.omega, K, kappa, cfg, audit=True)
    side = []
    side_adv = []
    for w, l, Pp in state.side:
        adv = _advance(l, Pp, w, K, kappa, cfg, audit=False)
        side_adv.append(adv)
        side.append((w, adv.lam, adv.P))
    h = cfg.fd_step
    sig = float(schedule.sigma[m + 1])
    dP = [(b.P - a.P) * (1.0 / (2 * h)) for a, b in zip(side_adv[1::2], side_adv[0::2])]
    dB = [(b.B - a.B) * (1.0 / (2 * h)) for a, b in zip(side_adv[1::2], side_adv[0::2])]
    dA = [(b.A_tilde - a.A_tilde) / (2 * h) for a, b in zip(side_adv[1::2], side_adv[0::2])]

    def pnorm(S):
        return strip_norm(S, p, sig)

    def bnorm(S):
        return strip_norm(S, p, sig, kind="alpha_plus_beta")

    def anorm(A):
        return float(norm_alpha_beta(A, p))

    norm_P0 = pnorm(main.P)
    rec = {
        "m": m + 1,
        "eps_m": float(schedule.eps[m + 1]),
        "kappa_m": float(schedule.kappa[m + 1]),
        "sigma_m": sig,
        "K_m": float(K_nom),
        "kappa_work": kappa,
        "K_work": K,
        "norm_Atilde": _measured_norm(main.A_tilde, dA, anorm),
        "norm_B": _measured_norm(main.B, dB, bnorm),
        "norm_P": max([norm_P0] + [pnorm(d) for d in dP]),
        "norm_P_l0": norm_P0,
        "min_divisor": float(main.smallest),
        "quad_defect": main.quad_defect,
        "herm_defect": main.P.hermitian_defect(),
        "shift": float(norm_alpha_beta(np.diag(main.lam - state.lam0), p)),
    }
    new = KamState(
        m + 1, main.lam, main.P, state.omega, state.lam0,
        state.generators + [main.B], state.norms_log + [rec], side,
    )
    if rec["norm_P"] > cfg.blowup_factor * rec["eps_m"]:
        raise NormBlowup(m + 1, rec["norm_P"], cfg.blowup_factor * rec["eps_m"], new)
    return new


@dataclass
class ReducibilityResult:
    lambda_inf: np.ndarray
    theta: np.ndarray
    Phi: np.ndarray
    Phi_series: FourierMatrixSeries
    diagnostics: list
    schedule: KamSchedule
    state: KamState
    converged: bool
    departure_step: int | None
    omega: np.ndarray
    eps0: float
    excluded_region: object = None

    def table(self) -> list[dict]:
        return list(self.diagnostics)

    def with_generators(self, generators) -> "ReducibilityResult":
        """Copy with the transform rebuilt from ``generators`` (used for sensitivity probes)."""
        th, Phi, series = _phi_on_grid(list(generators), len(self.omega), len(self.lambda_inf), self.Phi_series.K)
        state = replace(self.state, generators=list(generators))
        return replace(self, theta=th, Phi=Phi, Phi_series=series, state=state)


def compose_transform(generators, theta, N: int | None = None) -> np.ndarray:
    """Phi(theta) = e^{B_1(theta)} ... e^{B_m(theta)} for one angle or a stack (M, n).

    With no generators the identity of size ``N`` is returned.
    """
    th = np.asarray(theta)
    single = th.ndim <= 1
    if not generators:
        if N is None:
            raise DomainError("the size N is needed when there are no generators")
        eye = np.eye(N, dtype=complex)
        return eye if single else np.broadcast_to(eye, (len(np.atleast_2d(th)), N, N)).copy()
    n, N = generators[0].n, generators[0].N
    th = np.atleast_2d(th.reshape(-1, n) if th.ndim <= 1 else th)
    out = np.broadcast_to(np.eye(N, dtype=complex), (len(th), N, N)).copy()
    for B in generators:
        if (B.n, B.N) != (n, N):
            raise DomainError("generators have inconsistent shapes")
        out = out @ matrix_exp(B.synthesize(th, check_strip=False))
    return out[0] if single else out


def _phi_on_grid(generators, n, N, K):
    L = 2 * K + 2
    th = theta_grid(n, L)
    Phi = compose_transform(generators, th, N)
    series = analyze(Phi.reshape((L,) * n + (N, N)), K)
    return th, Phi, series


def run(
    P0: FourierMatrixSeries,
    A0,
    omega,
    eps0: float | None = None,
    sigma0: float | None = None,
    max_steps: int = 4,
    stop_tol: float = 1e-9,
    cfg: KamConfig = KamConfig(),
) -> ReducibilityResult:
    """Iterate until |P_m| <= stop_tol or ``max_steps`` steps.

    ``eps0`` defaults to the measured strip norm of P0 on its full strip
    ``sigma0`` (default: the strip P0 is declared on); a given eps0 below that
    norm is a precondition violation. A NormBlowup does not stop the run: the
    first step where the schedule is exceeded is recorded as
    ``departure_step``. For P0 = 0 the identity transform is returned.
    """
    sigma0 = P0.sigma if sigma0 is None else sigma0
    if not np.isfinite(sigma0):
        raise DomainError("sigma0 must be finite")
    p = cfg.params
    measured = strip_norm(P0, p, sigma0)
    if eps0 is None:
        eps0 = measured
    elif measured > eps0 * (1 + 1e-12):
        raise DomainError(f"|P0| = {measured:.4e} exceeds eps0 = {eps0:.4e}")
    lam_init = nu_array(A0, P0.N) if isinstance(A0, SpectrumModel) else np.asarray(A0, dtype=float)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if measured == 0.0:
        sched = KamSchedule.build(eps0 if eps0 > 0 else 0.5, sigma0, max_steps)
        state = initial_state(P0, lam_init, omega, P0.K, replace(cfg, omega_derivative=False))
        th, Phi, series = _phi_on_grid([], P0.n, P0.N, max(P0.K, 1))
        return ReducibilityResult(lam_init.copy(), th, Phi, series, [], sched, state, True, None, omega, float(eps0))
    sched = KamSchedule.build(eps0, sigma0, max_steps)
    K0 = int(min(np.floor(sched.K[1]), cfg.K_cap))
    state = initial_state(P0, lam_init, omega, K0, cfg)
    departure = None
    converged = False
    for _ in range(max_steps):
        try:
            state = kam_step(state, sched, cfg)
        except NormBlowup as err:
            state = err.state
            if departure is None:
                departure = err.step
        if state.norms_log[-1]["norm_P_l0"] <= stop_tol:
            converged = True
            break
    K_phi = state.P.K
    th, Phi, series = _phi_on_grid(state.generators, P0.n, P0.N, K_phi)
    return ReducibilityResult(
        state.lam.copy(), th, Phi, series, state.norms_log, sched, state, converged, departure, omega, float(eps0)
    )


def run_sampled(P0, A0, region, tries: int = 20, **kw):
    """Run at retained frequencies of ``region`` until one is not resonant.

    Returns ``(result, omega, rejected)`` where ``rejected`` lists the
    frequencies refused by the homological solver.
    """
    rejected = []
    for t in range(tries):
        omega = region.sample(t)
        try:
            res = run(P0, A0, omega, **kw)
        except ResonantFrequency as err:
            rejected.append((omega, err))
            continue
        res.excluded_region = region
        return res, omega, rejected
    raise rejected[-1][1] if rejected else DomainError("no frequency tried")


class ResidualReport(NamedTuple):
    residual: float
    offdiag: float
    variation: float
    deviation: float


def reducibility_residual(result: ReducibilityResult, P0: FourierMatrixSeries, A0, omega=None, eps: float = 1.0) -> ResidualReport:
    """How far Phi conjugates A0 + eps P0 to the constant diagonal lambda_inf.

    Q(theta) = Phi^{-1}(A0 + eps P0(theta)) Phi - i Phi^{-1} (omega . d_theta Phi),
    with d_theta Phi from Phi's own Fourier series, on the grid of ``result``.
    Returns the max over theta of (largest off-diagonal |Q|) + (largest
    deviation of diag Q from its theta mean) + (largest |diag Q - lambda_inf|).
    """
    omega = result.omega if omega is None else np.atleast_1d(np.asarray(omega, dtype=float))
    lam0 = nu_array(A0, P0.N) if isinstance(A0, SpectrumModel) else np.asarray(A0, dtype=float)
    th = result.theta
    Phi = result.Phi
    dPhi = result.Phi_series.theta_time_derivative(omega).synthesize(th, check_strip=False)
    H = np.diag(lam0)[None] + eps * P0.synthesize(th, check_strip=False)
    Q = np.linalg.solve(Phi, H @ Phi - 1j * dPhi)
    d = np.real(np.diagonal(Q, axis1=-2, axis2=-1))
    off = np.abs(Q - np.einsum("mi,ij->mij", np.diagonal(Q, axis1=-2, axis2=-1), np.eye(Q.shape[-1])))
    off_m = np.max(off, axis=(-2, -1))
    var_m = np.max(np.abs(d - d.mean(axis=0)), axis=-1)
    dev_m = np.max(np.abs(np.diagonal(Q, axis1=-2, axis2=-1) - result.lambda_inf), axis=-1)
    tot = off_m + var_m + dev_m
    return ResidualReport(float(np.max(tot)), float(np.max(off_m)), float(np.max(var_m)), float(np.max(dev_m)))


def transformation_report(result: ReducibilityResult, p_values=(0.0, 2.0)) -> dict:
    """Max over the grid of ||Phi(theta) - Id|| on l^2_p and the unitarity defect."""
    Phi = result.Phi
    N = Phi.shape[-1]
    I = np.eye(N)
    out = {}
    for pv in p_values:
        out[f"p={pv:g}"] = max(weighted_op_norm(F - I, pv, pv) for F in Phi)
    out["unitarity"] = float(np.max(np.abs(np.conj(np.swapaxes(Phi, -1, -2)) @ Phi - I)))
    return out
