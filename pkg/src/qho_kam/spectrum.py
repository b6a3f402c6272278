"""Unperturbed eigenvalue sequences and the asymptotic gap hypothesis.

The audited hypothesis asks, for all indices i, j,

    |nu_i - nu_j| >= c0 |i - j|
    |nu_{i+1} - nu_i + nu_j - nu_{j+1}| <= c1 |i - j| / (ij)^delta

and is checked here on a finite window 1 <= i, j <= N.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError

__all__ = ["SpectrumModel", "H1Report", "qho", "custom", "nu", "nu_array", "verify_h1"]


@dataclass(frozen=True)
class SpectrumModel:
    kind: str
    rule: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    c0: float = 1.0
    c1: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("QHO", "Custom"):
            raise DomainError(f"unknown spectrum kind {self.kind!r}")
        for name in ("c0", "c1", "delta"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


def _qho_rule(i):
    return 2.0 * np.asarray(i, dtype=float) - 1.0


def qho(c0: float = 1.0, c1: float = 1.0, delta: float = 1.0) -> SpectrumModel:
    """Harmonic oscillator levels nu_i = 2i - 1 with the constants that hold for them."""
    return SpectrumModel("QHO", _qho_rule, c0, c1, delta)


def custom(rule, c0: float, c1: float, delta: float) -> SpectrumModel:
    """A user sequence. Its constants are audited by :func:`verify_h1`, never inferred."""
    return SpectrumModel("Custom", rule, c0, c1, delta)


def nu(model: SpectrumModel, i: int) -> float:
    if int(i) != i or i < 1:
        raise DomainError(f"eigenvalue index must be a positive integer, got {i!r}")
    return float(np.asarray(model.rule(np.array([int(i)])))[0])


def nu_array(model: SpectrumModel, N: int) -> np.ndarray:
    """nu_1 .. nu_N as a float array."""
    if N < 1:
        raise DomainError("N must be >= 1")
    return np.asarray(model.rule(np.arange(1, N + 1)), dtype=float)


class H1Report(NamedTuple):
    min_gap_ratio: float
    max_diff_ratio: float
    gap_pass: bool
    diff_pass: bool
    pass_: bool

    @property
    def passed(self) -> bool:
        return self.pass_


def verify_h1(model: SpectrumModel, N: int, rtol: float = 1e-12) -> H1Report:
    """Audit both H1 inequalities on 1 <= i, j <= N.

    ``min_gap_ratio`` is min |nu_i - nu_j| / |i - j| and ``max_diff_ratio`` is
    max |nu_{i+1} - nu_i + nu_j - nu_{j+1}| (ij)^delta / |i - j|, both over i != j.
    """
    if N < 2:
        raise DomainError("verify_h1 needs N >= 2")
    idx = np.arange(1, N + 2)
    v = np.asarray(model.rule(idx), dtype=float)
    if np.any(np.diff(v) <= 0):
        raise DomainError("eigenvalue sequence is not strictly increasing on the window")
    lev = v[:N]
    step = np.diff(v)  # nu_{i+1} - nu_i, i = 1..N
    i = idx[:N, None].astype(float)
    j = idx[None, :N].astype(float)
    off = ~np.eye(N, dtype=bool)
    dist = np.abs(i - j)
    gap = np.abs(lev[:, None] - lev[None, :])
    min_gap = float(np.min(gap[off] / dist[off]))
    second = np.abs(step[:, None] - step[None, :])
    max_diff = float(np.max(second[off] * (i * j)[off] ** model.delta / dist[off]))
    gap_ok = min_gap >= model.c0 * (1 - rtol)
    diff_ok = max_diff <= model.c1 * (1 + rtol)
    return H1Report(min_gap, max_diff, gap_ok, diff_ok, gap_ok and diff_ok)
