"""Excluded frequency sets and their measure.

A region is described by finitely many resonance zones

    Z = {omega in [0, 2 pi)^n : |k.omega + c| < r}

with k in Z^n, offset c = lambda_i - lambda_j and half-width r. The excluded
measure is estimated by Monte Carlo. For n = 1 with frequency-independent
offsets each zone is an interval, and the exact union length is also computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .spectrum import SpectrumModel, nu_array

__all__ = [
    "FrequencyRegion",
    "difference_window",
    "build_h2_region",
    "build_Dprime",
    "interval_union_measure",
    "MeasureReport",
    "interval_measure",
    "fit_power_law",
    "iota_exponents",
    "BudgetReport",
    "measure_budget",
]

TWO_PI = 2.0 * np.pi


@dataclass
class FrequencyRegion:
    """Frequencies in [0, 2 pi)^n avoiding a finite list of zones.

    ``zone_k`` (Z, n), ``zone_c`` (Z,), ``zone_r`` (Z,) describe the slab
    zones and ``zone_ij`` (Z, 2) the index pair each came from. Zones with a
    frequency-dependent offset are kept in ``moving``, a callable
    ``omega (M, n) -> boolean (M,)`` that marks excluded samples.
    """

    n: int
    kind: str
    zone_k: np.ndarray
    zone_c: np.ndarray
    zone_r: np.ndarray
    zone_ij: np.ndarray
    samples: int
    seed: int
    measure_excluded: float
    halfwidth: float
    exact: float | None
    bound: float
    params: dict = field(default_factory=dict)
    retained: np.ndarray = field(default=None, repr=False)
    moving: Callable | None = field(default=None, repr=False)

    @property
    def total(self) -> float:
        return TWO_PI**self.n

    def excluded_mask(self, omega) -> np.ndarray:
        w = np.atleast_2d(np.asarray(omega, dtype=float))
        out = _slab_mask(w, self.zone_k, self.zone_c, self.zone_r)
        if self.moving is not None:
            out |= self.moving(w)
        out |= np.any((w < 0) | (w >= TWO_PI), axis=1)
        return out

    def contains(self, omega) -> bool:
        return not bool(self.excluded_mask(omega)[0])

    def sample(self, index: int = 0) -> np.ndarray:
        """A retained frequency, taken in the seeded sampling order."""
        if self.retained is None or len(self.retained) == 0:
            raise DomainError("region retains no sampled frequencies")
        return self.retained[index % len(self.retained)].copy()

    def record(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "seed": self.seed,
            "samples": self.samples,
            "measure": self.measure_excluded,
            "halfwidth": self.halfwidth,
            "exact": self.exact,
            "bound": self.bound,
            "zones": int(len(self.zone_c)),
            **self.params,
        }


def _slab_mask(w, ks, cs, rs, chunk=512):
    out = np.zeros(len(w), dtype=bool)
    if len(cs) == 0:
        return out
    for s in range(0, len(cs), chunk):
        val = np.abs(w @ ks[s : s + chunk].T + cs[s : s + chunk]) < rs[s : s + chunk]
        out |= np.any(val, axis=1)
    return out


def _half_modes(n, K):
    """Nonzero k with |k| <= K, one of each pair +-k (first nonzero entry positive)."""
    r = np.arange(-K, K + 1)
    ks = np.stack(np.meshgrid(*([r] * n), indexing="ij"), axis=-1).reshape(-1, n)
    keep = []
    for k in ks:
        nz = np.flatnonzero(k)
        if len(nz) and k[nz[0]] > 0:
            keep.append(k)
    return np.array(keep, dtype=float).reshape(-1, n)


def difference_window(n: int, K: int, gamma: float) -> int:
    """Largest |d| for which |k.omega + 2d| < gamma (1 + |d|) is possible on [0, 2 pi)^n.

    Since |k.omega| <= 2 pi n K, a violation needs |d| (2 - gamma) < 2 pi n K + gamma.
    """
    if not gamma < 2:
        raise DomainError("window is unbounded for gamma >= 2")
    return int(np.floor((TWO_PI * n * K + gamma) / (2.0 - gamma)))


def _monte_carlo(n, samples, seed, mask_fn, chunk=20000):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.0, TWO_PI, size=(samples, n))
    excl = np.zeros(samples, dtype=bool)
    for s in range(0, samples, chunk):
        excl[s : s + chunk] = mask_fn(w[s : s + chunk])
    p = excl.mean()
    total = TWO_PI**n
    return p * total, total * np.sqrt(p * (1 - p) / samples), w[~excl]


def interval_union_measure(lo, hi, a: float = 0.0, b: float = TWO_PI) -> float:
    """Length of the union of open intervals (lo, hi) intersected with [a, b)."""
    lo = np.clip(np.asarray(lo, dtype=float), a, b)
    hi = np.clip(np.asarray(hi, dtype=float), a, b)
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return 0.0
    order = np.argsort(lo)
    lo, hi = lo[order], hi[order]
    total, cur_lo, cur_hi = 0.0, lo[0], hi[0]
    for l, h in zip(lo[1:], hi[1:]):
        if l > cur_hi:
            total += cur_hi - cur_lo
            cur_lo, cur_hi = l, h
        else:
            cur_hi = max(cur_hi, h)
    return float(total + cur_hi - cur_lo)


def _exact_1d(ks, cs, rs):
    k = ks[:, 0]
    center = -cs / k
    rad = rs / np.abs(k)
    return interval_union_measure(center - rad, center + rad)


def _qho_zones(n, K, gamma):
    ks = _half_modes(n, K)
    D = difference_window(n, K, gamma)
    d = np.arange(-D, D + 1, dtype=float)
    zk = np.repeat(ks, len(d), axis=0)
    zd = np.tile(d, len(ks))
    return zk, 2.0 * zd, gamma * (1.0 + np.abs(zd)), np.stack([zd, np.zeros_like(zd)], axis=1)


def _model_zones(model, n, K, gamma, N_idx):
    v = nu_array(model, N_idx)
    i, j = np.triu_indices(N_idx)
    ks = _half_modes(n, K)
    # both orientations of (i, j) combined with one of each +-k cover every condition
    ii = np.concatenate([i, j[i != j]])
    jj = np.concatenate([j, i[i != j]])
    c = v[ii] - v[jj]
    r = gamma * (1.0 + np.abs(ii - jj))
    zk = np.repeat(ks, len(c), axis=0)
    return zk, np.tile(c, len(ks)), np.tile(r, len(ks)), np.tile(np.stack([ii + 1, jj + 1], axis=1), (len(ks), 1))


def build_h2_region(
    model: SpectrumModel,
    gamma: float,
    K: int,
    n: int = 1,
    N_idx: int | None = None,
    samples: int = 100_000,
    seed: int = 0,
    z: float = 3.0,
) -> FrequencyRegion:
    """Frequencies with |k.omega + nu_i - nu_j| >= gamma (1 + |i-j|) for 0 < |k| <= K.

    For the oscillator only nu_i - nu_j = 2d matters, and the finite window of
    :func:`difference_window` is exact. Other sequences are scanned over
    i, j <= N_idx. ``halfwidth`` is the z-sigma Monte Carlo half-width.
    The ``bound`` entry is gamma K^(n+1), so ``measure / bound`` is the fitted
    H2 constant.
    """
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    if K < 1:
        raise DomainError("K must be >= 1")
    if model.kind == "QHO":
        zk, zc, zr, zij = _qho_zones(n, K, gamma)
    else:
        if N_idx is None:
            raise DomainError("a custom spectrum needs an index window N_idx")
        zk, zc, zr, zij = _model_zones(model, n, K, gamma, N_idx)
    meas, sd, kept = _monte_carlo(n, samples, seed, lambda w: _slab_mask(w, zk, zc, zr))
    exact = _exact_1d(zk, zc, zr) if n == 1 else None
    bound = gamma * K ** (n + 1)
    return FrequencyRegion(
        n, "H2", zk, zc, zr, zij, samples, seed, meas, z * sd, exact, bound,
        params={"gamma": gamma, "K": K, "c2_fit": meas / bound}, retained=kept,
    )


def iota_exponents(beta: float, n: int, tau1: float = 1.0, tau2: float | None = None):
    """(iota_1, iota_2) = (beta/(beta+1) max(tau1, 1), max(tau2, n+1))."""
    tau2 = n + 1 if tau2 is None else tau2
    return beta / (beta + 1.0) * max(tau1, 1.0), max(tau2, n + 1.0)


def build_Dprime(
    lambda_of_omega,
    model: SpectrumModel,
    gamma: float,
    K: int,
    c: float,
    beta: float,
    kappa: float | None = None,
    n: int = 1,
    samples: int = 100_000,
    seed: int = 0,
    z: float = 3.0,
    tau1: float = 1.0,
    tau2: float | None = None,
    parent: FrequencyRegion | None = None,
) -> FrequencyRegion:
    """Frequencies where every perturbed divisor obeys the kappa floor.

    ``lambda_of_omega`` is either a fixed array lambda_1..lambda_M or a callable
    mapping a sample stack (S, n) to (S, M). The region removes

    1. the complement of the H2 set at 2 gamma (built from ``model``), and
    2. the zones |k.omega + lambda_i - lambda_j| < kappa (1 + |i-j|) for
       min(i, j) <= (c/gamma)^(1/(2 beta)) and |i-j| <= d_max, where
       d_max = (2 pi n K + 2c + kappa)/(2 - kappa) bounds the differences that
       can resonate when |lambda - nu| <= c,

    and keeps the rest of ``parent`` (default the whole box). With
    kappa = gamma^(1 + 1/beta) the recorded bound is kappa^iota_1 K^iota_2.
    """
    if kappa is None:
        kappa = gamma ** (1.0 + 1.0 / beta)
    elif not np.isclose(kappa, gamma ** (1.0 + 1.0 / beta), rtol=1e-9, atol=0):
        raise DomainError("kappa must equal gamma^(1 + 1/beta)")
    if not 0 < kappa < 2:
        raise DomainError("kappa out of range")
    j_max = max(1, int(np.floor((c / gamma) ** (1.0 / (2.0 * beta)))))
    d_max = int(np.floor((TWO_PI * n * K + 2 * c + kappa) / (2.0 - kappa)))
    i_max = j_max + d_max
    moving_lam = callable(lambda_of_omega)
    if moving_lam:
        lam_fn = lambda_of_omega
    else:
        lam_const = np.asarray(lambda_of_omega, dtype=float)
        lam_fn = None
    probe = lam_fn(np.zeros((1, n)))[0] if moving_lam else lam_const
    if probe.size < i_max:
        raise DomainError(f"lambda must cover indices up to {i_max}, got {probe.size}")
    ref = nu_array(model, probe.size)

    def ball(lam):
        diff = lam - ref
        idx = np.arange(1, lam.shape[-1])
        return np.max(np.abs(diff), axis=-1) + np.max(idx ** (2 * beta) * np.abs(np.diff(diff, axis=-1)), axis=-1)

    check = ball(lam_fn(np.random.default_rng(seed).uniform(0, TWO_PI, (64, n)))) if moving_lam else ball(lam_const)
    if np.max(check) > c:
        raise DomainError(f"lambda lies outside the c-ball: |lambda - nu| = {np.max(check):.3e} > c = {c}")

    h2 = build_h2_region(model, 2 * gamma, K, n, N_idx=probe.size if model.kind != "QHO" else None, samples=16, seed=seed)
    pairs = [(i, j) for j in range(1, j_max + 1) for i in range(1, i_max + 1) if abs(i - j) <= d_max]
    pairs += [(j, i) for (i, j) in pairs if i != j]
    pairs = np.array(sorted(set(pairs)))
    ks = _half_modes(n, K)
    ks_all = np.concatenate([ks, -ks])
    pi, pj = pairs[:, 0] - 1, pairs[:, 1] - 1
    radius = kappa * (1.0 + np.abs(pi - pj))
    zk = np.repeat(ks_all, len(pairs), axis=0)
    zr = np.tile(radius, len(ks_all))
    zij = np.tile(pairs, (len(ks_all), 1))

    if moving_lam:
        def window(w):
            lam = lam_fn(w)
            dl = lam[:, pi] - lam[:, pj]  # (S, P)
            kw = w @ ks_all.T  # (S, Kh)
            bad = np.abs(kw[:, :, None] + dl[:, None, :]) < radius[None, None, :]
            return np.any(bad, axis=(1, 2))

        zc = np.full(len(zr), np.nan)
    else:
        zc = np.tile(lam_const[pi] - lam_const[pj], len(ks_all))
        window = None

    def mask(w):
        out = _slab_mask(w, h2.zone_k, h2.zone_c, h2.zone_r)
        if parent is not None:
            out |= parent.excluded_mask(w)
        if moving_lam:
            out |= window(w)
        else:
            out |= _slab_mask(w, zk, zc, zr)
        return out

    meas, sd, kept = _monte_carlo(n, samples, seed, mask)
    exact = None
    if n == 1 and not moving_lam and parent is None:
        allk = np.concatenate([h2.zone_k, zk])
        allc = np.concatenate([h2.zone_c, zc])
        allr = np.concatenate([h2.zone_r, zr])
        exact = _exact_1d(allk, allc, allr)
    i1, i2 = iota_exponents(beta, n, tau1, tau2)
    bound = kappa**i1 * K**i2
    region = FrequencyRegion(
        n, "Dprime",
        np.concatenate([h2.zone_k, zk]) if not moving_lam else h2.zone_k,
        np.concatenate([h2.zone_c, zc]) if not moving_lam else h2.zone_c,
        np.concatenate([h2.zone_r, zr]) if not moving_lam else h2.zone_r,
        np.concatenate([h2.zone_ij, zij]) if not moving_lam else h2.zone_ij,
        samples, seed, meas, z * sd, exact, bound,
        params={"gamma": gamma, "kappa": kappa, "K": K, "c": c, "beta": beta,
                "iota1": i1, "iota2": i2, "j_max": j_max, "d_max": d_max},
        retained=kept,
        moving=window,
    )
    if parent is not None:

        def outside_parent(w, window=window):
            out = parent.excluded_mask(w)
            return out | window(w) if window is not None else out

        region.moving = outside_parent
    return region


class MeasureReport(NamedTuple):
    measure: float
    bound: float
    passed: bool
    min_slope: float


def interval_measure(f, varsigma: float, kappa: float, audit_points: int = 10001, fd_step: float = 1e-6) -> MeasureReport:
    """Measure of {x in [0, 1] : |f(x)| <= kappa} against 2 kappa / varsigma.

    The slope condition |f'| >= varsigma is audited by central differences on
    a grid; a failure raises :class:`DomainError`. A function with |f'| > 0
    and continuous derivative is strictly monotone, so the set is one interval
    whose endpoints are found by root bracketing.
    """
    if not (varsigma > 0 and kappa >= 0):
        raise DomainError("need varsigma > 0 and kappa >= 0")
    x = np.linspace(0.0, 1.0, audit_points)
    h = fd_step
    xl, xr = np.clip(x - h, 0, 1), np.clip(x + h, 0, 1)
    fx = np.vectorize(f, otypes=[float])
    slope = (fx(xr) - fx(xl)) / (xr - xl)
    min_slope = float(np.min(np.abs(slope)))
    if np.any(np.sign(slope) != np.sign(slope[0])) or min_slope < varsigma * (1 - 1e-6):
        raise DomainError(f"slope audit failed: min |f'| = {min_slope:.4g} < varsigma = {varsigma}")
    g = (lambda t: f(t)) if slope[0] > 0 else (lambda t: -f(t))
    g0, g1 = g(0.0), g(1.0)

    def crossing(level):
        if level <= g0:
            return 0.0
        if level >= g1:
            return 1.0
        return brentq(lambda t: g(t) - level, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    meas = crossing(kappa) - crossing(-kappa)
    bound = 2.0 * kappa / varsigma
    return MeasureReport(float(meas), bound, bool(meas <= bound * (1 + 1e-12)), min_slope)


def fit_power_law(x, y):
    """Least-squares (exponent, prefactor) of y = C x^e in log-log coordinates."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("power-law fit needs positive data")
    e, logc = np.polyfit(np.log(x), np.log(y), 1)
    return float(e), float(np.exp(logc))


class BudgetReport(NamedTuple):
    iota1: float
    exponent: float
    total: float
    bound: float
    passed: bool
    eps_threshold: float


def measure_budget(eps0: float, beta: float = 0.5, tau1: float = 1.0, n: int = 1, m_max: int = 2000) -> BudgetReport:
    """Sum over the schedule of eps_m^(iota_1/17) against 2 eps0^(iota_1/17).

    eps_m = eps0^((4/3)^m). Terms are summed in log form until they vanish.
    ``eps_threshold`` is the largest eps0 for which the inequality holds.
    """
    if not 0 < eps0 < 1:
        raise DomainError("eps0 must lie in (0, 1)")
    i1, _ = iota_exponents(beta, n, tau1)
    e = i1 / 17.0

    def ratio(log_eps0):
        m = np.arange(m_max)
        logs = log_eps0 * (4.0 / 3.0) ** m * e
        return float(np.sum(np.exp(logs[logs > -745.0]))), 2.0 * np.exp(log_eps0 * e)

    total, bound = ratio(np.log(eps0))
    f = lambda L: np.subtract(*ratio(L))
    hi = -1e-9
    lo = -1.0
    while f(lo) > 0:
        lo *= 2
    thr = float(np.exp(brentq(f, lo, hi))) if f(hi) > 0 else 1.0
    return BudgetReport(i1, e, total, bound, bool(total <= bound), thr)
