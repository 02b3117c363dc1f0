"""Mixed-measure representation of the steady state.

mu is a mixture of product negative-binomial measures whose parameters
theta_1, ..., theta_N are ordered between the two boundary densities, with
Dirichlet(2s, ..., 2s) distributed spacings.  This module provides the
exact beta-function reduction of the nu integral, a nested Gauss-Legendre
evaluation of the mu integral, and exact samplers.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .errors import AccuracyError, DomainError
from .exactnum import check_two_s, gamma_ratio, kappa
from .steady_closed import BoundaryParams, check_config

__all__ = [
    "QuadratureConfig",
    "QuadratureResult",
    "beta_fn",
    "reduction_steps",
    "nu_integral_reduce",
    "negbin_pmf",
    "mu_quadrature",
    "sample_theta",
    "sample_config",
    "sample_configs",
]


def beta_fn(a: int, b: int) -> Fraction:
    """B(a, b) = Gamma(a) Gamma(b) / Gamma(a+b) for positive integers."""
    return gamma_ratio(a, a + b) * gamma_ratio(b, 1)


@dataclass(frozen=True)
class ReductionState:
    """Integrand left after some innermost integrals have been done.

    coeff * u_j^power * prod_{i<=j} u_i^{m_i} (u_i - u_{i-1})^{2s-1}
    with j = remaining; the outer prefactor is not included.
    """

    remaining: int
    coeff: Fraction
    power: int


def reduction_steps(two_s: int, m):
    """Yield the state after each beta-function step, innermost variable first.

    Starting integrand (without prefactor and kappa factors):
        u_N^{2s-1} prod_i u_i^{m_i} (u_i - u_{i-1})^{2s-1}
    Each step uses int_0^x y^a (y - x)^b dy = (-1)^b x^{a+b+1} B(a+1, b+1).
    """
    N = len(m)
    b = two_s - 1
    state = ReductionState(remaining=N, coeff=Fraction(1), power=two_s - 1)
    for j in range(N, 0, -1):
        a = state.power + m[j - 1]
        coeff = state.coeff * (-1) ** b * beta_fn(a + 1, b + 1)
        state = ReductionState(remaining=j - 1, coeff=coeff, power=a + b + 1)
        yield state


def nu_integral_reduce(two_s: int, params: BoundaryParams, m) -> Fraction:
    """Evaluate the nested nu integral exactly by iterated beta reductions.

    The integral runs over 0 <= |u_N| <= ... <= |u_1| <= |u_0|, u_0 = rho_L - rho_R,
    with prefactor (-1)^{(2s+1)N} Gamma(2s(N+1)) / Gamma(2s)^{N+1} / u_0^{2s(N+1)-1}.
    """
    check_two_s(two_s)
    m = check_config(m)
    N = len(m)
    u0 = params.delta
    kap = Fraction(1)
    for mi in m:
        kap *= kappa(two_s, mi)
    pref = (-1) ** ((two_s + 1) * N) * gamma_ratio(two_s * (N + 1), 1) / gamma_ratio(two_s, 1) ** (N + 1)
    *_, final = reduction_steps(two_s, m)
    # final integrand: coeff * u_0^power with power = 2s(N+1) - 1 + |m|
    if u0 == 0:
        return Fraction(1) if sum(m) == 0 else Fraction(0)
    return pref * kap * final.coeff * u0 ** (final.power - (two_s * (N + 1) - 1))


def negbin_pmf(two_s: int, theta, m):
    """kappa(m) (theta/(1+theta))^m (1/(1+theta))^{2s}; vectorised in theta and m."""
    theta = np.asarray(theta, dtype=float)
    m = np.asarray(m)
    if np.any(theta < 0):
        raise DomainError("theta must be nonnegative")
    logk = gammaln(two_s + m) - gammaln(two_s) - gammaln(1 + m)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = m * np.log(theta / (1 + theta))
    logp = np.where(m == 0, 0.0, logp)
    out = np.exp(logk + logp - two_s * np.log1p(theta))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class QuadratureConfig:
    points: int = 8
    levels: int = 4
    target_tol: float = 1e-12

    def __post_init__(self):
        if self.points < 2:
            raise DomainError("need at least 2 points per level")
        if self.target_tol <= 0:
            raise DomainError("target_tol must be positive")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    achieved: float
    points: int

    def __float__(self):
        return self.value


def _simplex_rule(N: int, n: int):
    """Nodes tau (shape P x N) and weights on 0 <= tau_1 <= ... <= tau_N <= 1.

    Iterated Gauss-Legendre: tau_i = tau_{i-1} + (1 - tau_{i-1}) x_i.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    taus = np.zeros((1, 0))
    weights = np.ones(1)
    for _ in range(N):
        prev = taus[:, -1] if taus.shape[1] else np.zeros(len(taus))
        span = 1.0 - prev
        new = prev[:, None] + span[:, None] * x[None, :]
        weights = (weights[:, None] * span[:, None] * w[None, :]).ravel()
        taus = np.concatenate([np.repeat(taus, n, axis=0), new.reshape(-1, 1)], axis=1)
    return taus, weights


def _mu_rule(two_s, params, m, n):
    N = len(m)
    taus, weights = _simplex_rule(N, n)
    rl, rr = float(params.rho_L), float(params.rho_R)
    theta = rl + (rr - rl) * taus
    ext = np.concatenate([np.zeros((len(taus), 1)), taus, np.ones((len(taus), 1))], axis=1)
    gaps = np.diff(ext, axis=1)
    dens = np.prod(gaps ** (two_s - 1), axis=1)
    lognorm = gammaln(two_s * (N + 1)) - (N + 1) * gammaln(two_s)
    nb = np.prod(negbin_pmf(two_s, theta, np.asarray(m)[None, :]), axis=1)
    return float(np.exp(lognorm) * np.sum(weights * dens * nb))


def mu_quadrature(two_s: int, params: BoundaryParams, m, q: QuadratureConfig = QuadratureConfig()) -> QuadratureResult:
    """mu(m) from the nested integral over the ordered theta simplex.

    The theta_i run from rho_L (i = 0) to rho_R (i = N+1); the integral is
    written in the unit coordinates tau = (theta - rho_L) / (rho_R - rho_L),
    which absorbs the |rho_R - rho_L|^{2s(N+1)-1} prefactor and is
    orientation independent.  Refinement doubles the points per level.
    """
    check_two_s(two_s)
    m = check_config(m)
    if len(m) > 4:
        raise DomainError("nested quadrature supports N <= 4")
    n = q.points
    prev = _mu_rule(two_s, params, m, n)
    diff = np.inf
    for _ in range(q.levels):
        n *= 2
        cur = _mu_rule(two_s, params, m, n)
        diff = abs(cur - prev)
        prev = cur
        if diff < q.target_tol:
            return QuadratureResult(value=cur, achieved=diff, points=n)
    raise AccuracyError(
        f"quadrature reached {diff:.3g} > target {q.target_tol:g} after {q.levels} refinements",
        best_estimate=prev,
        achieved=diff,
    )


def sample_theta(two_s: int, params: BoundaryParams, N: int, rng, size=None) -> np.ndarray:
    """theta_1..theta_N between rho_L and rho_R with Dirichlet(2s,...,2s) spacings.

    theta_i is monotone from the rho_L end to the rho_R end, so
    E[theta_i] = rho_L + (rho_R - rho_L) i / (N+1).
    """
    check_two_s(two_s)
    shape = (N + 1,) if size is None else (size, N + 1)
    g = rng.gamma(float(two_s), 1.0, size=shape)
    w = g / g.sum(axis=-1, keepdims=True)
    cum = np.cumsum(w, axis=-1)[..., :N]
    rl, rr = float(params.rho_L), float(params.rho_R)
    return rl + (rr - rl) * cum


def sample_configs(two_s: int, params: BoundaryParams, N: int, size: int, rng) -> np.ndarray:
    """i.i.d. draws from mu, shape (size, N)."""
    theta = sample_theta(two_s, params, N, rng, size=size)
    # numpy counts failures before 2s successes with success prob 1/(1+theta)
    return rng.negative_binomial(two_s, 1.0 / (1.0 + theta))


def sample_config(two_s: int, params: BoundaryParams, N: int, rng) -> tuple:
    return tuple(int(x) for x in sample_configs(two_s, params, N, 1, rng)[0])
