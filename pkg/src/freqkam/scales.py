"""Pathological scale functions evaluated without precision loss.

The rough-drift corpus systems multiply the perturbation by a scale factor
S(eps) whose direct floating-point evaluation would be garbage: the
lacunary cosine sum needs arguments 99^n * pi * eps reduced mod 2*pi for n
up to ~50 (99^50 is far beyond 2^53), and the rational-indicator function
is not computable on floats at all. Both get exact-arithmetic treatments
here: argument reduction in integer arithmetic over the exact binary
rational of the input, and an integer-pair API that restricts the
indicator to its computable branch.
"""

from __future__ import annotations

import math
from fractions import Fraction

__all__ = ["weierstrass", "dirichlet_rational"]


def weierstrass(x, tol=1e-15):
    """Lacunary cosine sum sum_n 2^-n cos(99^n pi x), truncated at 2^-n < tol.

    Parameters
    ----------
    x : float or Fraction
        Evaluation point, taken at its exact binary-rational value.
    tol : float
        Terms whose 2^-n weight falls below this are dropped; the discarded
        tail is bounded by twice the first dropped weight.

    Returns
    -------
    float
        The truncated sum. Arguments are reduced mod 2 in exact integer
        arithmetic (cos(pi * t) with t = 99^n x mod 2), so every cosine
        sees an argument in [0, 2*pi) at full float precision even when
        99^n x is astronomically large.
    """
    if not (0 < tol < 1):
        raise ValueError("tol must lie in (0, 1)")
    frac = Fraction(x)
    p, q = frac.numerator, frac.denominator
    total = 0.0
    weight = 1.0
    n = 0
    while weight >= tol:
        t = (pow(99, n, 2 * q) * p) % (2 * q)
        total += weight * math.cos(math.pi * t / q)
        weight *= 0.5
        n += 1
    return total


def dirichlet_rational(numerator, denominator):
    """Rational-indicator scale at an exact rational: always 0.

    The indicator is 1 on irrationals and 0 on rationals; only the
    rational branch is computable, since every float is a binary rational.
    Callers must therefore supply the point as an exact integer pair, and
    the irrational branch is deliberately not offered.
    """
    if not isinstance(numerator, int) or not isinstance(denominator, int):
        raise TypeError("exact integer pair required")
    if denominator <= 0:
        raise ValueError("denominator must be a positive integer")
    return 0.0
