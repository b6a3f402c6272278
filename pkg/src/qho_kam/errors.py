"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class AccuracyError(RuntimeError):
    """A numerical procedure failed its own convergence check."""


class ResonantFrequency(ArithmeticError):
    """A small divisor fell below the admissible floor.

    Attributes
    ----------
    k : tuple of int
        Offending Fourier mode.
    i, j : int
        Offending (1-based) matrix indices.
    divisor : float
        The value of ``|k.omega + lambda_i - lambda_j|``.
    floor : float
        The floor ``kappa * (1 + |i - j|)`` it violated.
    """

    def __init__(self, k, i, j, divisor, floor):
        self.k = tuple(int(v) for v in k)
        self.i = int(i)
        self.j = int(j)
        self.divisor = float(divisor)
        self.floor = float(floor)
        super().__init__(
            f"resonant divisor at k={self.k}, i={self.i}, j={self.j}: "
            f"|k.w + l_i - l_j| = {self.divisor:.3e} < {self.floor:.3e}"
        )


class NormBlowup(RuntimeError):
    """The perturbation left the KAM schedule at the working truncation.

    The offending state is attached so a driver can keep going and report
    where the finite run departed from the schedule.
    """

    def __init__(self, step, norm, bound, state=None):
        self.step = int(step)
        self.norm = float(norm)
        self.bound = float(bound)
        self.state = state
        super().__init__(
            f"step {self.step}: |P| = {self.norm:.3e} exceeds schedule bound {self.bound:.3e}"
        )
