"""Exception hierarchy.

Everything raised on purpose by this package derives from FreqKamError, so
callers (and the CLI) can distinguish verified mathematical failures from
plain bugs. Exceptions carry enough state to be reported without re-running.
"""


class FreqKamError(Exception):
    """Base class for all deliberate failures."""


class ExprError(FreqKamError):
    """Base class for expression DSL problems."""


class ExprSyntaxError(ExprError):
    """Source text does not parse (position and snippet in the message)."""


class DomainError(ExprError):
    """Evaluation left the real domain (ln of non-positive, 0^negative, ...)."""


class NonDifferentiable(ExprError):
    """A derivative was requested where it does not exist (|.| or sign at 0)."""


class AliasingError(FreqKamError):
    """Fourier coefficients changed under grid doubling; expansion untrusted."""


class InvalidTau(FreqKamError):
    """Diophantine exponent tau below the admissible threshold max(n-1, 1)."""


class SmallDivisorBreach(FreqKamError):
    """A divisor fell under its lower bound during the homological solve."""

    def __init__(self, msg, k=None, magnitude=None, bound=None):
        super().__init__(msg)
        self.k = k
        self.magnitude = magnitude
        self.bound = bound


class NeumannDivergence(FreqKamError):
    """Neumann correction terms grew instead of shrinking."""


class LieDivergence(FreqKamError):
    """Lie series terms grew for several consecutive orders."""


class NormBlowup(FreqKamError):
    """Iteration norms increased past the configured blowup factor."""


class NoSolutionInBox(FreqKamError):
    """Frequency translation has no root inside the parameter box.

    Attributes carry the best point seen, its residual, and (when the
    iteration converged to something outside the box) the exterior root.
    """

    def __init__(self, msg, best_point=None, best_residual=None, exterior_root=None):
        super().__init__(msg)
        self.best_point = best_point
        self.best_residual = best_residual
        self.exterior_root = exterior_root


class DegenerateImage(FreqKamError):
    """The frequency map is constant on the sampled neighbourhood."""


class InsufficientGrid(FreqKamError):
    """Profile data too sparse for a trustworthy integral verdict."""


class SubstitutionRangeError(FreqKamError):
    """A parameter substitution left the target domain."""


class ScheduleUnsatisfied(FreqKamError):
    """A smallness condition failed in a mode that demands it as a hard error."""


class DiophantineFailure(FreqKamError):
    """The target frequency failed its small-divisor certificate."""

    def __init__(self, msg, certificate=None):
        super().__init__(msg)
        self.certificate = certificate


class DomainTooSmall(FreqKamError):
    """The derived base action radius collapsed to a non-positive value."""


class IntegratorTolerance(FreqKamError):
    """The fixed-step symplectic integrator could not meet its tolerance."""


class MismatchError(FreqKamError):
    """A verified value disagrees with its closed-form expectation.

    Carries both sides so reports need not re-run the computation.
    """

    def __init__(self, msg, expected=None, actual=None):
        super().__init__(msg)
        self.expected = expected
        self.actual = actual


class ConfigError(FreqKamError):
    """Configuration file invalid; message names the offending key."""
