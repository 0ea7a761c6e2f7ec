"""freqkam: frequency-preserving KAM iteration with parameter translation.

Numerical toolbox for parameterized Hamiltonians H = <omega(xi), y> +
eps * P(y, x, xi): hypothesis certificates (Diophantine frequency,
relative-singularity semi-norm, controllability profile and its
log-weighted integral), the quasi-linear normal-form step that keeps the
torus frequency pinned at omega(xi0) by translating the parameter, and a
corpus of closed-form systems with known outcomes used as regression
oracles.
"""

__version__ = "0.1.0"

from .errors import (
    FreqKamError, ExprSyntaxError, DomainError, NonDifferentiable,
    AliasingError, InvalidTau, SmallDivisorBreach, NeumannDivergence,
    LieDivergence, NormBlowup, NoSolutionInBox, DegenerateImage,
    InsufficientGrid, SubstitutionRangeError, ScheduleUnsatisfied,
    IntegratorTolerance, MismatchError, ConfigError,
)

__all__ = [
    "FreqKamError", "ExprSyntaxError", "DomainError", "NonDifferentiable",
    "AliasingError", "InvalidTau", "SmallDivisorBreach", "NeumannDivergence",
    "LieDivergence", "NormBlowup", "NoSolutionInBox", "DegenerateImage",
    "InsufficientGrid", "SubstitutionRangeError", "ScheduleUnsatisfied",
    "IntegratorTolerance", "MismatchError", "ConfigError", "__version__",
]
