"""Exception types shared across the package.

Every error raised by lglpair derives from :class:`LglError`, so callers
can catch the whole family with one clause.  Validation failures carry a
message pointing at the first violated constraint.
"""


class LglError(Exception):
    """Base class for all lglpair errors."""


class ValidationError(LglError, ValueError):
    """A domain object violates one of its structural invariants."""


class NegativeWeight(ValidationError):
    pass


class ResetAboveBase(ValidationError):
    pass


class NonzeroDiagonal(ValidationError):
    pass


class EmptyNetwork(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class IdenticalIndices(ValidationError):
    pass


class InvalidPartition(ValidationError):
    pass


class InvalidTolerance(ValidationError):
    pass


class DomainError(LglError, ValueError):
    """Argument outside the mathematical domain of a special function."""


class NonFiniteSample(LglError, ValueError):
    """A sampled function value is NaN or infinite."""


class NonFiniteIterate(LglError, ArithmeticError):
    """A fixed-point iterate left the finite floats (divergence)."""


class NonFiniteValue(LglError, ArithmeticError):
    """An intermediate solver quantity is NaN or infinite."""


class NonPositiveNormalization(LglError, ArithmeticError):
    """The normalization integral came out <= 0, so the iterate is unusable."""


class NonFiniteIntegral(LglError, ArithmeticError):
    """The rate integral of a single-neuron problem did not evaluate finitely."""


class NegativeVariance(LglError, ArithmeticError):
    """A stationary variance evaluated negative: the solve is unconverged
    or the grid is under-resolved."""


class RelaxationUnsupported(LglError, ValueError):
    """The analytical path only covers neurons without relaxation."""


class DriveNotEmpty(LglError, ValueError):
    """The exact closed-form pair solution requires an isolated pair."""


class NotConverged(LglError, RuntimeError):
    """An outer self-consistency loop exhausted its iteration budget.

    The partial solution is attached as ``.partial`` for inspection.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InvalidMode(LglError, ValueError):
    """Simulation mode incompatible with the network or its parameters."""


class ZeroTotalIntensity(LglError, ArithmeticError):
    """All intensities hit zero, the network is dead and cannot spike again."""
