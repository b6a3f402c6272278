"""Decay norms on (truncated) infinite matrices and the algebra they control.

Matrices are plain complex ndarrays of shape ``(..., N, N)``; entry ``[i-1, j-1]``
holds ``A_i^j``. Every norm is the exact supremum over the finite window, and
accepts stacked input, in which case it returns one value per stacked matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import AccuracyError, DomainError

__all__ = [
    "NormParams",
    "delta",
    "norm_alpha",
    "norm_alpha_beta",
    "norm_alpha_plus",
    "norm_alpha_plus_beta",
    "is_hermitian",
    "product",
    "commutator",
    "matrix_exp",
    "power_norm",
    "weighted_op_norm",
    "RatioReport",
    "op_norm_bound_check",
    "algebra_ratios",
    "leibniz_defect",
]


@dataclass(frozen=True)
class NormParams:
    alpha: float = 1.0
    beta: float = 0.5

    def __post_init__(self):
        if not (0 < self.beta <= self.alpha):
            raise DomainError(f"need 0 < beta <= alpha, got alpha={self.alpha}, beta={self.beta}")


@lru_cache(maxsize=64)
def _offdiag_weight(N, power):
    i = np.arange(N)
    w = (1.0 + np.abs(i[:, None] - i[None, :])) ** power
    w.setflags(write=False)
    return w


@lru_cache(maxsize=64)
def _index_weight(N, beta):
    # (ij)^beta with 1-based indices, on the (N-1)x(N-1) window of Delta A
    i = np.arange(1, N, dtype=float)
    w = np.outer(i, i) ** beta
    w.setflags(write=False)
    return w


def _sup(x):
    if x.shape[-1] == 0:
        return np.zeros(x.shape[:-2]) if x.ndim > 2 else 0.0
    out = np.max(x, axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


def delta(A):
    """Discrete difference along diagonals: (Delta A)_i^j = A_{i+1}^{j+1} - A_i^j."""
    A = np.asarray(A)
    if A.shape[-1] < 2:
        raise DomainError("delta needs N >= 2")
    return A[..., 1:, 1:] - A[..., :-1, :-1]


def norm_alpha(A, p: NormParams):
    A = np.asarray(A)
    return _sup(_offdiag_weight(A.shape[-1], p.alpha) * np.abs(A))


def norm_alpha_plus(A, p: NormParams):
    A = np.asarray(A)
    return _sup(_offdiag_weight(A.shape[-1], p.alpha + 1.0) * np.abs(A))


def _delta_part(A, p, plus):
    N = A.shape[-1]
    if N < 2:
        return np.zeros(A.shape[:-2]) if A.ndim > 2 else 0.0
    w = _index_weight(N, p.beta)
    if plus:
        w = w * _offdiag_weight(N - 1, 1.0)
    return _sup(w * np.abs(delta(A)))


def norm_alpha_beta(A, p: NormParams):
    """sup (1+|i-j|)^a |A_i^j| + sup (ij)^b |Delta A_i^j|."""
    A = np.asarray(A)
    return norm_alpha(A, p) + _delta_part(A, p, plus=False)


def norm_alpha_plus_beta(A, p: NormParams):
    """sup (1+|i-j|)^(a+1) |A_i^j| + sup (1+|i-j|) (ij)^b |Delta A_i^j|."""
    A = np.asarray(A)
    return norm_alpha_plus(A, p) + _delta_part(A, p, plus=True)


def is_hermitian(A, tol=1e-12) -> bool:
    A = np.asarray(A)
    return bool(np.max(np.abs(A - np.conj(np.swapaxes(A, -1, -2))), initial=0.0) <= tol)


def _check_square_pair(A, B):
    if A.shape[-2:] != B.shape[-2:] or A.shape[-1] != A.shape[-2]:
        raise DomainError(f"dimension mismatch: {A.shape} vs {B.shape}")


def product(A, B):
    A, B = np.asarray(A), np.asarray(B)
    _check_square_pair(A, B)
    return A @ B


def commutator(A, B):
    A, B = np.asarray(A), np.asarray(B)
    _check_square_pair(A, B)
    return A @ B - B @ A


def matrix_exp(B, tol: float = 1e-13, max_order: int = 40):
    """exp(B) by scaling and squaring of a truncated Taylor series.

    Works on stacks ``(..., N, N)``. The series is cut once the tail bound
    ``x^(m+1)/(m+1)! / (1 - x/(m+2))`` (x the scaled 1-norm) drops below
    ``tol``; scaling keeps x <= 1/2.
    """
    B = np.asarray(B)
    if not np.all(np.isfinite(B)):
        raise DomainError("matrix_exp: non-finite entries")
    N = B.shape[-1]
    x = float(np.max(np.sum(np.abs(B), axis=-2), initial=0.0))
    squarings = 0 if x <= 0.5 else int(np.ceil(np.log2(x / 0.5)))
    X = B / (2.0**squarings)
    x = x / (2.0**squarings)
    eye = np.broadcast_to(np.eye(N, dtype=np.result_type(B.dtype, float)), B.shape)
    result = eye.copy()
    term = eye.copy()
    bound = 1.0
    for m in range(1, max_order + 1):
        term = term @ X / m
        result = result + term
        bound = bound * x / (m + 1)
        if bound / max(1.0 - x / (m + 2), 0.5) <= tol:
            break
    else:
        raise AccuracyError(f"matrix_exp: no convergence by order {max_order}")
    for _ in range(squarings):
        result = result @ result
    return result


def power_norm(M, tol: float = 1e-12, max_iter: int = 5000, seed: int = 0) -> float:
    """Spectral norm of M by power iteration on M^H M."""
    M = np.asarray(M)
    n = M.shape[1]
    if not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    G = np.conj(M.T) @ M
    est = 0.0
    for _ in range(max_iter):
        w = G @ v
        new = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(new - est) <= tol * max(new, 1e-300):
            return float(np.sqrt(nw))
        est = new
    raise AccuracyError("power iteration did not converge")


def weighted_op_norm(A, s_in: float, s_out: float) -> float:
    """||A|| as a map l^2_{s_in} -> l^2_{s_out}, weights i^{s/2}."""
    A = np.asarray(A)
    i = np.arange(1, A.shape[-1] + 1, dtype=float)
    M = (i ** (s_out / 2))[:, None] * A * (i ** (-s_in / 2))[None, :]
    return float(np.linalg.norm(M, 2))


class RatioReport(NamedTuple):
    op_norm: float
    decay_norm: float
    ratio: float
    case: str
    s_in: float
    s_out: float


def op_norm_bound_check(A, p: NormParams, s: float = 0.0, kind: str = "iii") -> RatioReport:
    """Empirical constant of the operator-norm bounds of the decay algebra.

    ``kind="iii"``: ||A||_{B(l^2_s)} / |A|_{alpha+}, for s in (-2a-1, 2a+1).

    ``kind="iv"`` splits on alpha:

    * alpha in (0, 1/2]: ||A||_{B(l^2_1, l^2_-1)} / |A|_alpha (s ignored)
    * alpha in (1/2, 1]: ||A||_{B(l^2_0, l^2_s)} / |A|_alpha, needs s < 2a - 2
    * alpha > 1: ||A||_{B(l^2_0)} / |A|_alpha (s ignored)
    """
    a = p.alpha
    if kind == "iii":
        if not (-2 * a - 1 < s < 2 * a + 1):
            raise DomainError(f"s={s} outside (-2a-1, 2a+1) for alpha={a}")
        s_in = s_out = s
        dn = norm_alpha_plus(A, p)
        case = "iii"
    elif kind == "iv":
        dn = norm_alpha(A, p)
        if a <= 0.5:
            s_in, s_out, case = 1.0, -1.0, "iv-a"
        elif a <= 1.0:
            if not s < 2 * a - 2:
                raise DomainError(f"case alpha in (1/2,1] needs s < 2a-2 = {2 * a - 2}, got {s}")
            s_in, s_out, case = 0.0, s, "iv-b"
        else:
            s_in, s_out, case = 0.0, 0.0, "iv-c"
    else:
        raise DomainError(f"unknown bound kind {kind!r}")
    on = weighted_op_norm(A, s_in, s_out)
    return RatioReport(on, float(dn), on / dn if dn > 0 else 0.0, case, s_in, s_out)


def algebra_ratios(A, B, p: NormParams) -> dict:
    """Empirical constants of the product bounds for one pair.

    ``plus``: |AB|_{a+,b} / (|A|_{a+,b} |B|_{a+,b});
    ``left``/``right``: |AB|_{a,b}, |BA|_{a,b} over |A|_{a,b} |B|_{a+,b}.
    """
    AB, BA = A @ B, B @ A
    na, nap = norm_alpha_beta(A, p), norm_alpha_plus_beta(A, p)
    nbp = norm_alpha_plus_beta(B, p)

    def ratio(num, den):
        return float(num / den) if den > 0 else 0.0

    return {
        "plus": ratio(norm_alpha_plus_beta(AB, p), nap * nbp),
        "left": ratio(norm_alpha_beta(AB, p), na * nbp),
        "right": ratio(norm_alpha_beta(BA, p), na * nbp),
    }


def leibniz_defect(A, B):
    """Check Delta(AB) = A_{i+1}^1 B_1^{j+1} + sum_l Delta A_i^l B_{l+1}^{j+1} + sum_l A_i^l Delta B_l^j.

    On an N-window the sums run over l <= N-1 and the identity picks up the
    boundary term A_i^N B_N^j. Returns ``(interior, boundary)``: the max
    mismatch once that term is accounted for, and the size of the term itself.
    """
    A, B = np.asarray(A), np.asarray(B)
    _check_square_pair(A, B)
    lhs = delta(A @ B)
    dA, dB = delta(A), delta(B)
    rhs = np.outer(A[1:, 0], B[0, 1:]) + dA @ B[1:, 1:] + A[:-1, :-1] @ dB
    boundary = np.outer(A[:-1, -1], B[-1, :-1])
    return float(np.max(np.abs(lhs - (rhs - boundary)))), float(np.max(np.abs(boundary)))
