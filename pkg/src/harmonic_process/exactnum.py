"""Exact rational kernels for the gamma ratios of the harmonic process.

Every gamma argument that appears in the rates, weights and steady-state
formulas is a positive integer (the spin label 2s is a positive integer),
so all quantities are products of consecutive integers and live in
:class:`fractions.Fraction`.  Floats only enter through logarithms,
quadrature and Monte Carlo; :func:`to_float` is the single crossing point.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

from .errors import DomainError

Rat = Fraction

__all__ = [
    "Rat",
    "check_two_s",
    "to_rat",
    "to_float",
    "gamma_ratio",
    "phi_rate",
    "h_weight",
    "kappa",
    "insertion_weight",
    "total_insertion_rate",
    "binom",
]


def check_two_s(two_s):
    """Validate a spin label given as the integer 2s."""
    if isinstance(two_s, bool) or not isinstance(two_s, int) or two_s < 1:
        raise DomainError(f"two_s must be a positive integer, got {two_s!r}")
    return two_s


def to_rat(x) -> Fraction:
    """Parse ints, Fractions and fraction strings ("2/5") exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        # floats are accepted but converted exactly, never rounded
        return Fraction(x)
    raise TypeError(f"cannot interpret {x!r} as an exact rational")


def to_float(x) -> float:
    return float(x)


def _rising(a: int, n: int) -> int:
    """a (a+1) ... (a+n-1) as an integer."""
    out = 1
    for k in range(a, a + n):
        out *= k
    return out


def gamma_ratio(a: int, b: int) -> Fraction:
    """Gamma(a) / Gamma(b) for positive integers, as a telescoping product."""
    if a < 1 or b < 1:
        raise DomainError(f"gamma_ratio needs positive integer arguments, got ({a}, {b})")
    if a >= b:
        return Fraction(_rising(b, a - b))
    return Fraction(1, _rising(a, b - a))


def binom(n: int, k: int) -> int:
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


@lru_cache(maxsize=None)
def phi_rate(two_s: int, m: int, k: int) -> Fraction:
    """Jump rate of k particles leaving a site holding m.

    phi_s(m, k) = (1/k) Gamma(m+1) Gamma(m-k+2s) / (Gamma(m-k+1) Gamma(m+2s))
    """
    if k < 1 or k > m:
        raise DomainError(f"no jump of size k={k} from occupation m={m}")
    return gamma_ratio(m + 1, m - k + 1) * gamma_ratio(m - k + two_s, m + two_s) / k


@lru_cache(maxsize=None)
def h_weight(two_s: int, m: int) -> Fraction:
    """h_s(m) = sum_{k=1}^m 1/(2s + k - 1); zero for an empty site."""
    if m < 0:
        raise DomainError("occupation must be nonnegative")
    total = Fraction(0)
    for k in range(1, m + 1):
        total += Fraction(1, two_s + k - 1)
    return total


def kappa(two_s: int, m: int) -> Fraction:
    """kappa(m) = Gamma(2s+m) / (Gamma(2s) Gamma(1+m)) = C(2s+m-1, m)."""
    if m < 0:
        raise DomainError("occupation must be nonnegative")
    return Fraction(math.comb(two_s + m - 1, m))


def insertion_weight(beta, k: int) -> Fraction:
    """Reservoir insertion weight beta^k / k for a batch of k particles."""
    beta = to_rat(beta)
    if not 0 < beta < 1:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    if k < 1:
        raise DomainError("insertion size must be positive")
    return beta**k / k


def total_insertion_rate(beta: float) -> float:
    """sum_{k>=1} beta^k / k = -log(1 - beta)."""
    beta = float(beta)
    if beta >= 1.0:
        raise DomainError(f"insertion series diverges for beta={beta} >= 1")
    if beta < 0.0:
        raise DomainError(f"beta must be nonnegative, got {beta}")
    return -math.log1p(-beta)
