"""Numerical KAM reducibility for the harmonic oscillator under quasi-periodic perturbations.

Modules
-------
spectrum      unperturbed eigenvalue sequences and their gap checks
hermite       Hermite basis, quadrature and perturbation matrices
decay_matrix  off-diagonal decay norms and matrix exponentials
fourier       matrix-valued Fourier series on the torus
homological   mode-wise solution of the homological equation
resonance     excluded frequency zones and measure estimates
kam           the iterative conjugation scheme
propagate     direct and reduced time evolution
cli           command-line front end
"""

from .errors import AccuracyError, DomainError, NormBlowup, ResonantFrequency

__version__ = "0.1.0"

__all__ = ["AccuracyError", "DomainError", "NormBlowup", "ResonantFrequency", "__version__"]
