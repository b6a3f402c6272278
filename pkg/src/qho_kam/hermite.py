"""Hermite functions, Gauss-Hermite quadrature and the perturbation matrix.

``h_i`` is the (i-1)-th normalized Hermite function, an eigenfunction of
``-d^2/dx^2 + x^2`` with eigenvalue ``2i - 1``. Matrix entries of a potential,
``P_i^j(theta) = int V(x, theta) h_i(x) h_j(x) dx``, are computed with a
Gauss-Hermite rule whose weights are pre-multiplied by ``exp(x_q^2)`` so that
the Gaussian factor never has to be formed explicitly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import roots_hermite

from .errors import AccuracyError, DomainError
from .fourier import FourierMatrixSeries, analyze, theta_grid

__all__ = [
    "hermite_functions",
    "eval_hermite",
    "HermiteBasis",
    "PotentialSpec",
    "AuditReport",
    "audit_potential",
    "potential",
    "CATALOG",
    "assemble_P",
    "LadderReport",
    "ladder_check",
    "DecayReport",
    "verify_P_decay",
    "perturbation_series",
]

_RESCALE = 1e150
_LOG_RESCALE = np.log(_RESCALE)


def hermite_functions(n_funcs: int, x) -> np.ndarray:
    """Values of psi_0 .. psi_{n_funcs-1} at the points ``x``.

    Uses the normalized three-term recurrence

        psi_{k+1} = sqrt(2/(k+1)) x psi_k - sqrt(k/(k+1)) psi_{k-1}

    carried in scaled form: the pair (psi_{k-1}, psi_k) is stored relative to a
    per-point log scale, which starts at -x^2/2 and is bumped whenever the
    scaled values grow large. This avoids the underflow of exp(-x^2/2) at the
    outer quadrature nodes, where high-index functions are still O(1).

    Returns
    -------
    ndarray of shape (n_funcs,) + x.shape
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_funcs,) + x.shape)
    if n_funcs == 0:
        return out
    logscale = -0.5 * x * x - 0.25 * np.log(np.pi)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    out[0] = np.exp(logscale)
    for k in range(n_funcs - 1):
        nxt = np.sqrt(2.0 / (k + 1)) * x * cur - np.sqrt(k / (k + 1.0)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            prev = np.where(big, prev / _RESCALE, prev)
            cur = np.where(big, cur / _RESCALE, cur)
            logscale = np.where(big, logscale + _LOG_RESCALE, logscale)
        # cur * exp(logscale) cannot overflow: |psi_k| <= 1
        with np.errstate(under="ignore"):
            out[k + 1] = cur * np.exp(np.minimum(logscale, 700.0))
    return out


def eval_hermite(i: int, x):
    """h_i(x) for i >= 1 (the (i-1)-th Hermite function)."""
    if int(i) != i or i < 1:
        raise DomainError(f"Hermite index must be a positive integer, got {i!r}")
    x = np.asarray(x, dtype=float)
    val = hermite_functions(int(i), x)[-1]
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class HermiteBasis:
    """h_1 .. h_N tabulated on a Gauss-Hermite rule.

    ``quad_weights`` are the scaled weights ``w_q exp(x_q^2)``, so that
    ``sum_q W_q f(x_q)`` approximates ``int f dx`` for f = Gaussian x polynomial.
    The default rule has max(4N, 256) nodes; the floor keeps potentials with
    slowly decaying tails (like (1+x^2)^(-1/2)) converged at small N.
    """

    N: int
    quad_nodes: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, N: int, n_nodes: int | None = None) -> "HermiteBasis":
        if N < 1:
            raise DomainError("basis size must be >= 1")
        Q = max(4 * N, 256) if n_nodes is None else int(n_nodes)
        if Q < 2 * N:
            raise DomainError(f"need at least 2N = {2 * N} nodes, got {Q}")
        x, _ = roots_hermite(Q)
        allpsi = hermite_functions(Q, x)
        # Christoffel identity for Gauss nodes: w_q exp(x_q^2) = 1 / sum_k psi_k(x_q)^2
        W = 1.0 / np.sum(allpsi**2, axis=0)
        psi = np.ascontiguousarray(allpsi[:N])
        for a in (x, W, psi):
            a.setflags(write=False)
        return cls(N, x, W, psi)

    @property
    def n_nodes(self) -> int:
        return self.quad_nodes.size

    def gram(self) -> np.ndarray:
        return (self.psi * self.quad_weights) @ self.psi.T

    def gram_defect(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.N))))

    def project(self, values) -> np.ndarray:
        """Coefficients <h_i, f> of a function sampled at the nodes."""
        return self.psi @ (self.quad_weights * np.asarray(values))

    def integrate(self, values_q) -> np.ndarray:
        """P_ij = sum_q W_q v_q psi_i(x_q) psi_j(x_q) for each row of ``values_q``."""
        v = np.atleast_2d(values_q)
        return np.einsum("iq,mq,jq->mij", self.psi, v * self.quad_weights, self.psi, optimize=True)


@dataclass(frozen=True)
class PotentialSpec:
    """A potential V(x, theta) on R x T^n_sigma.

    ``v(x, theta)`` receives a 1-D array of positions and a length-n vector of
    (possibly complex) angles and returns values at every x.
    """

    v: Callable = field(repr=False)
    n: int
    sigma: float
    c_bound: float
    name: str = "custom"
    audit_exempt: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("torus dimension must be >= 1")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    def __call__(self, x, theta):
        theta = np.atleast_1d(np.asarray(theta))
        if theta.shape != (self.n,):
            raise DomainError(f"theta must have {self.n} components")
        return np.broadcast_to(self.v(np.asarray(x, dtype=float), theta), np.shape(x))


class AuditReport(NamedTuple):
    max_abs_v: float
    max_abs_xdv: float
    max_imag_real_theta: float
    passed: bool


def _audit_thetas(n, sigma, per_dim=16):
    base = 2 * np.pi * np.arange(per_dim) / per_dim
    real = np.array(list(itertools.product(base, repeat=n)))
    shift = 0.9 * sigma
    return real, [real + 1j * s for s in (shift, -shift)]


def audit_potential(pot: PotentialSpec, fd_step: float = 1e-5) -> AuditReport:
    """Sampled check of |V| <= C and |x dV/dx| <= C on real and complex angles."""
    x = np.concatenate([np.linspace(-20, 20, 201), [-100.0, -50.0, 50.0, 100.0]])
    h = fd_step * np.maximum(1.0, np.abs(x))
    real, shifted = _audit_thetas(pot.n, pot.sigma)
    vmax = xdv = imag = 0.0
    for th in itertools.chain(real, *shifted):
        val = pot(x, th)
        dv = (pot(x + h, th) - pot(x - h, th)) / (2 * h)
        vmax = max(vmax, float(np.max(np.abs(val))))
        xdv = max(xdv, float(np.max(np.abs(x * dv))))
    for th in real:
        imag = max(imag, float(np.max(np.abs(np.imag(pot(x, th))))))
    ok = vmax <= pot.c_bound * (1 + 1e-12) and xdv <= pot.c_bound * (1 + 1e-6) and imag <= 1e-14
    return AuditReport(vmax, xdv, imag, bool(ok or pot.audit_exempt))


def _v_zero(x, th):
    return np.zeros_like(x)


def _v_one(x, th):
    return np.ones_like(x)


def _v_x(x, th):
    return x


def _v_cos_decay(x, th):
    return np.cos(th[0]) / np.sqrt(1.0 + x * x)


def potential(name: str, n: int = 1, sigma: float = 1.0, mu: float = 1.0) -> PotentialSpec:
    """Build a catalog potential.

    ``zero``, ``one``: constants. ``x``: the position operator (audit exempt,
    unbounded). ``cos_decay``: cos(theta_1) (1+x^2)^(-1/2). ``remark``:
    prod_l cos(theta_l) <x>^(-mu).
    """
    if name == "zero":
        return PotentialSpec(_v_zero, n, sigma, 0.0, name)
    if name == "one":
        return PotentialSpec(_v_one, n, sigma, 1.0, name)
    if name == "x":
        return PotentialSpec(_v_x, n, sigma, np.inf, name, audit_exempt=True)
    if name == "cos_decay":
        # |x d/dx (1+x^2)^(-1/2)| = x^2 (1+x^2)^(-3/2) <= 1
        return PotentialSpec(_v_cos_decay, n, sigma, float(np.cosh(sigma)), name)
    if name == "remark":
        if not mu > 0:
            raise DomainError("mu must be positive")

        def v(x, th, mu=mu):
            return np.prod(np.cos(th)) * (1.0 + x * x) ** (-mu / 2)

        # |x d/dx <x>^(-mu)| = mu x^2 <x>^(-mu-2) <= mu
        return PotentialSpec(v, n, sigma, float(np.cosh(sigma) ** n * max(1.0, mu)), name)
    raise DomainError(f"unknown potential {name!r}; choose from {CATALOG}")


CATALOG = ("zero", "one", "x", "cos_decay", "remark")


def _assemble(basis, pot, thetas):
    vals = np.stack([pot(basis.quad_nodes, th) for th in thetas])
    return basis.integrate(vals)


def assemble_P(basis: HermiteBasis, pot: PotentialSpec, theta, check: bool = True, rtol: float = 1e-9):
    """Matrix of V(., theta) in the basis h_1..h_N.

    ``theta`` is one torus point (shape ``(n,)``) or a stack ``(M, n)``; the
    result has shape ``(N, N)`` or ``(M, N, N)``. With ``check`` the matrices
    are recomputed on a rule with 1.5x as many nodes and an
    :class:`AccuracyError` is raised if any entry moves by more than
    ``rtol`` relative to the largest entry.
    """
    th = np.asarray(theta)
    single = th.ndim <= 1
    th = np.atleast_2d(th.reshape(-1, pot.n) if th.ndim <= 1 else th)
    if th.shape[1] != pot.n:
        raise DomainError(f"theta must have {pot.n} components")
    if np.any(np.abs(th.imag) >= pot.sigma):
        raise DomainError(f"|Im theta| must be < sigma = {pot.sigma}")
    out = _assemble(basis, pot, th)
    if check and pot.name != "x":
        ref = _assemble(HermiteBasis.build(basis.N, (3 * basis.n_nodes) // 2), pot, th)
        scale = max(float(np.max(np.abs(ref))), 1e-300)
        change = float(np.max(np.abs(out - ref))) / scale
        if change > rtol:
            raise AccuracyError(f"quadrature not converged: relative change {change:.2e} > {rtol:.0e}")
    if np.all(th.imag == 0):
        out = out.real
    return out[0] if single else out


class LadderReport(NamedTuple):
    max_residual: float
    lowering: float
    raising: float
    number: float


def ladder_check(basis: HermiteBasis) -> LadderReport:
    """Residuals of T h_i = sqrt(2(i-1)) h_{i-1}, T^+ h_i = sqrt(2i) h_{i+1} and TT^+ h_i = 2i h_i.

    Multiplication by x is done pointwise on the nodes. The derivative is
    spectral: a node function is projected on the basis and differentiated
    with d/dx h_i = sqrt((i-1)/2) h_{i-1} - sqrt(i/2) h_{i+1}. The working basis
    has two extra functions so that every product stays inside it. Residuals
    are sup norms over the nodes, for i <= N-1.
    """
    N = basis.N
    M = N + 2
    work = HermiteBasis.build(M, max(basis.n_nodes, 2 * M + 8))
    x, psi = work.quad_nodes, work.psi
    k = np.arange(1, M, dtype=float)
    D = np.diag(np.sqrt(k / 2), 1) - np.diag(np.sqrt(k / 2), -1)

    def deriv(f):
        return (D @ work.project(f)) @ psi

    def T(f):
        return deriv(f) + x * f

    def Td(f):
        return -deriv(f) + x * f

    low = rai = num = 0.0
    for i in range(1, N):
        h = psi[i - 1]
        lo_exact = np.sqrt(2 * (i - 1)) * psi[i - 2] if i > 1 else 0.0
        low = max(low, float(np.max(np.abs(T(h) - lo_exact))))
        up = Td(h)
        rai = max(rai, float(np.max(np.abs(up - np.sqrt(2 * i) * psi[i]))))
        num = max(num, float(np.max(np.abs(T(up) - 2 * i * h))))
    return LadderReport(max(low, rai, num), low, rai, num)


class DecayReport(NamedTuple):
    c_alpha: float
    c_beta: float
    argmax_alpha: tuple
    argmax_beta: tuple


def verify_P_decay(mats) -> DecayReport:
    """Measured constants sup (1+|i-j|)|P_i^j| and sup sqrt(ij) |Delta P_i^j|.

    ``mats`` is a stack ``(M, N, N)`` of matrices sampled over a theta grid.
    Attaining indices are 1-based ``(grid index, i, j)``.
    """
    P = np.abs(np.asarray(mats))
    if P.ndim == 2:
        P = P[None]
    N = P.shape[-1]
    idx = np.arange(1, N + 1, dtype=float)
    wa = 1.0 + np.abs(idx[:, None] - idx[None, :])
    A = P * wa
    ia = np.unravel_index(int(np.argmax(A)), A.shape)
    c_alpha = float(A[ia])
    if N < 2:
        return DecayReport(c_alpha, 0.0, (int(ia[0]), int(ia[1]) + 1, int(ia[2]) + 1), ())
    M = np.asarray(mats)
    M = M[None] if M.ndim == 2 else M
    dP = np.abs(M[:, 1:, 1:] - M[:, :-1, :-1]) * np.sqrt(np.outer(idx[:-1], idx[:-1]))
    ib = np.unravel_index(int(np.argmax(dP)), dP.shape)
    return DecayReport(c_alpha, float(dP[ib]), (int(ia[0]), int(ia[1]) + 1, int(ia[2]) + 1), (int(ib[0]), int(ib[1]) + 1, int(ib[2]) + 1))


def perturbation_series(basis: HermiteBasis, pot: PotentialSpec, K: int, eps: float = 1.0, check: bool = True) -> FourierMatrixSeries:
    """eps P(theta) as a Fourier series with cutoff K, from samples on a (2K+2)^n grid."""
    L = 2 * K + 2
    mats = assemble_P(basis, pot, theta_grid(pot.n, L), check=check)
    return analyze(eps * mats.reshape((L,) * pot.n + (basis.N, basis.N)), K, pot.sigma)
