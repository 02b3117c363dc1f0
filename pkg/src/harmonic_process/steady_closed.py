"""Closed-form steady state of the open harmonic process.

The stationary vector is written as two global rotations applied to a
simpler vector nu,

    mu = exp(-S_-) exp(rho_R S_+) nu,

where nu is a telescopic product of gamma ratios.  Both printed forms of
nu are implemented.  mu is obtained by contracting nu with the single-site
rotation kernel along every axis; the kernel is a finite sum (see
:func:`rotation_kernel`), so the only infinite sum left is over the
occupations of nu, and that one is truncated with a certified bound.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateEquilibriumError, DomainError, TruncationError
from .exactnum import binom, check_two_s, gamma_ratio, kappa, to_rat

__all__ = [
    "BoundaryParams",
    "SteadyVector",
    "OccupationMoment",
    "check_config",
    "enumerate_configs",
    "nu_component",
    "nu_component_shifted",
    "nu_table",
    "nu_float_array",
    "rotation_lower",
    "rotation_lower_inverse",
    "rotation_raise",
    "rotation_kernel",
    "rotation_kernel_majorant",
    "z_norm",
    "equilibrium_component",
    "mu_component",
    "mu_table",
    "expected_occupation",
    "linear_profile",
]


@dataclass(frozen=True)
class BoundaryParams:
    """Reservoir parameters 0 < beta < 1 at the left and right ends."""

    beta_L: Fraction
    beta_R: Fraction

    def __post_init__(self):
        bl, br = to_rat(self.beta_L), to_rat(self.beta_R)
        for name, b in (("beta_L", bl), ("beta_R", br)):
            if not 0 < b < 1:
                raise DomainError(f"{name} must lie in (0, 1), got {b}")
        object.__setattr__(self, "beta_L", bl)
        object.__setattr__(self, "beta_R", br)

    @property
    def rho_L(self) -> Fraction:
        return self.beta_L / (1 - self.beta_L)

    @property
    def rho_R(self) -> Fraction:
        return self.beta_R / (1 - self.beta_R)

    @property
    def delta(self) -> Fraction:
        return self.rho_L - self.rho_R

    @property
    def is_equilibrium(self) -> bool:
        return self.beta_L == self.beta_R

    def swapped(self) -> "BoundaryParams":
        return BoundaryParams(self.beta_R, self.beta_L)


def check_config(m) -> tuple:
    m = tuple(int(x) for x in m)
    if len(m) < 1:
        raise DomainError("a configuration needs at least one site")
    if any(x < 0 for x in m):
        raise DomainError(f"occupations must be nonnegative, got {m}")
    return m


def enumerate_configs(N: int, cap: int):
    """All configurations with every m_i <= cap, in lexicographic order."""
    return list(itertools.product(range(cap + 1), repeat=N))


# -- nu -----------------------------------------------------------------------


def nu_component(two_s: int, params: BoundaryParams, m) -> Fraction:
    """nu(m) in the original telescopic form.

    delta^|m| Gamma(2s(N+1)) / Gamma(|m| + 2s(N+1))
        * prod_i kappa(m_i) Gamma(2s(N+1-i) + S_i) / Gamma(2s(N+1-i) + S_{i+1})

    with S_i = m_i + ... + m_N.
    """
    check_two_s(two_s)
    m = check_config(m)
    N = len(m)
    total = sum(m)
    if total == 0:
        return Fraction(1)
    val = params.delta**total * gamma_ratio(two_s * (N + 1), total + two_s * (N + 1))
    suffix = total
    for i, mi in enumerate(m, start=1):
        base = two_s * (N + 1 - i)
        val *= kappa(two_s, mi) * gamma_ratio(base + suffix, base + suffix - mi)
        suffix -= mi
    return val


def nu_component_shifted(two_s: int, params: BoundaryParams, m) -> Fraction:
    """nu(m) in the index-shifted form.

    delta^|m| Gamma(2s(N+1)) / Gamma(2s)
        * prod_i kappa(m_i) Gamma(2s(N+1-i) + S_i) / Gamma(2s(N+2-i) + S_i)
    """
    check_two_s(two_s)
    m = check_config(m)
    N = len(m)
    total = sum(m)
    val = params.delta**total * gamma_ratio(two_s * (N + 1), two_s)
    suffix = total
    for i, mi in enumerate(m, start=1):
        val *= kappa(two_s, mi) * gamma_ratio(two_s * (N + 1 - i) + suffix, two_s * (N + 2 - i) + suffix)
        suffix -= mi
    return val


def z_norm(two_s: int, params: BoundaryParams, N: int) -> Fraction:
    """Inverse normalisation Z_N^{-1} = Gamma(2s(N+1)) / Gamma(2s) / delta^{2s(N+1)-1}."""
    check_two_s(two_s)
    if params.delta == 0:
        raise DegenerateEquilibriumError(
            "delta = 0: use the equilibrium product form instead of the matrix product normalisation"
        )
    return gamma_ratio(two_s * (N + 1), two_s) / params.delta ** (two_s * (N + 1) - 1)


def nu_float_array(two_s: int, params: BoundaryParams, N: int, K: int) -> np.ndarray:
    """nu on the box {0..K}^N as a float array (log-gamma evaluation)."""
    delta = float(params.delta)
    grids = np.indices((K + 1,) * N)
    total = grids.sum(axis=0)
    logv = gammaln(two_s * (N + 1)) - gammaln(two_s) + np.zeros(total.shape)
    suffix = total.astype(float)
    for i in range(1, N + 1):
        mi = grids[i - 1]
        logv += gammaln(two_s + mi) - gammaln(two_s) - gammaln(1 + mi)
        logv += gammaln(two_s * (N + 1 - i) + suffix) - gammaln(two_s * (N + 2 - i) + suffix)
        suffix = suffix - mi
    if delta == 0.0:
        out = np.zeros(total.shape)
        out[(0,) * N] = 1.0
        return out
    logv += total * math.log(abs(delta))
    sign = np.where((total % 2 == 1) & (delta < 0), -1.0, 1.0)
    return sign * np.exp(logv)


# -- rotations ----------------------------------------------------------------


def rotation_lower(n_out: int, n_in: int) -> Fraction:
    """<n'| exp(-S_-) |n> = (-1)^{n-n'} C(n, n')."""
    if n_out > n_in:
        return Fraction(0)
    return Fraction((-1) ** (n_in - n_out) * binom(n_in, n_out))


def rotation_lower_inverse(n_out: int, n_in: int) -> Fraction:
    """<n'| exp(+S_-) |n> = C(n, n')."""
    return Fraction(binom(n_in, n_out))


def rotation_raise(two_s: int, rho, n_out: int, n_in: int) -> Fraction:
    """<n'| exp(rho S_+) |n> = rho^{n'-n} / (n'-n)! Gamma(n'+2s) / Gamma(n+2s)."""
    if n_out < n_in:
        return Fraction(0)
    rho = to_rat(rho)
    d = n_out - n_in
    return rho**d / math.factorial(d) * gamma_ratio(n_out + two_s, n_in + two_s)


@lru_cache(maxsize=None)
def _kernel_sum(two_s: int, p: int, q: int, m: int, n: int, signed: bool) -> Fraction:
    # beta = p/q; (1-beta)^{2s+n} sum_a C(n,a) (+-1)^{n-a} C(2s+n+m-a-1, m-a) beta^{m-a}
    acc = 0
    for a in range(0, min(n, m) + 1):
        sgn = -1 if (signed and (n - a) % 2) else 1
        acc += sgn * binom(n, a) * binom(two_s + n + m - a - 1, m - a) * p ** (m - a) * q**a
    r = two_s + n
    return Fraction(acc * (q - p) ** r, q ** (m + r))


def rotation_kernel(two_s: int, rho, m: int, n: int) -> Fraction:
    """<m| exp(-S_-) exp(rho S_+) |n> in closed form.

    On the polynomial realisation S_- = d/dx, S_+ = x^2 d/dx + 2s x the
    product of rotations maps x^n to (x-1)^n (1 + rho - rho x)^{-2s-n}, so the
    matrix element is the coefficient of x^m, a finite sum.  Agrees with the
    product of :func:`rotation_lower` and :func:`rotation_raise` summed over
    the intermediate occupation whenever that series converges (|rho| < 1).
    """
    rho = to_rat(rho)
    if rho == -1:
        raise DomainError("rotation kernel undefined at rho = -1")
    beta = rho / (1 + rho)
    return _kernel_sum(two_s, beta.numerator, beta.denominator, m, n, True)


def rotation_kernel_majorant(two_s: int, beta, m: int, n: int) -> Fraction:
    """Upper bound t_m(n) >= |rotation_kernel| (all signs made positive)."""
    beta = to_rat(beta)
    if not 0 <= beta < 1:
        raise DomainError("majorant needs 0 <= beta < 1")
    return _kernel_sum(two_s, beta.numerator, beta.denominator, m, n, False)


# -- mu -----------------------------------------------------------------------


def equilibrium_component(two_s: int, beta, m) -> Fraction:
    """prod_i kappa(m_i) beta^{m_i} (1-beta)^{2s}: the product measure at beta_L = beta_R."""
    beta = to_rat(beta)
    val = Fraction(1)
    for mi in check_config(m):
        val *= kappa(two_s, mi) * beta**mi * (1 - beta) ** two_s
    return val


def _site_tail_terms(two_s, params, cap, K):
    """Per-site majorant totals F_m and remainders R_m(K) = F_m - P_m(K), exact."""
    beta = params.beta_R
    adelta = abs(params.delta)
    c = adelta * (1 - beta)
    q = (beta + c) / (1 - c)
    pref = (1 - beta) ** two_s / (1 - c) ** two_s
    F, R = [], []
    for m in range(cap + 1):
        Fm = pref * kappa(two_s, m) * q**m
        Pm = sum(
            (rotation_kernel_majorant(two_s, beta, m, n) * kappa(two_s, n) * adelta**n for n in range(K + 1)),
            Fraction(0),
        )
        F.append(Fm)
        R.append(Fm - Pm)
    return F, R


def _box_tail_bound(F, R, rows):
    """Upper bound on the dropped mass for every requested configuration.

    sum over the complement of the box of prod_i a_i(n_i)
        = prod F - prod (F - R) <= sum_i R_i prod_{j != i} F_j
    """
    Ff = np.array([float(x) for x in F])
    Rf = np.array([float(x) for x in R])
    M = np.asarray(rows, dtype=np.int64).reshape(len(rows), -1)
    fs, rs = Ff[M], Rf[M]
    full = fs.prod(axis=1, keepdims=True)
    # F_m > 0 whenever beta_R > 0
    return (rs * full / fs).sum(axis=1)


def _choose_K(two_s, params, cap, rows, tail_tol, K_max=400):
    if params.delta == 0:
        return 0, np.zeros(len(rows))
    c = abs(params.delta) * (1 - params.beta_R)
    if c >= 1:
        raise TruncationError(
            f"rotation series over nu does not converge absolutely: |delta|(1-beta_R) = {float(c):.4g} >= 1"
        )
    K = max(8, cap)
    while True:
        F, R = _site_tail_terms(two_s, params, cap, K)
        bound = _box_tail_bound(F, R, rows)
        if bound.max() <= tail_tol:
            return K, bound
        if K >= K_max:
            raise TruncationError(
                f"tail bound {bound.max():.3g} still above tail_tol={tail_tol:g} at truncation K={K}"
            )
        K = min(K_max, int(K * 1.5) + 4)


def _kernel_matrix(two_s, params, rows_max, K):
    T = np.empty((rows_max + 1, K + 1))
    for m in range(rows_max + 1):
        for n in range(K + 1):
            T[m, n] = float(rotation_kernel(two_s, params.rho_R, m, n))
    return T


def _contract(T, nu):
    arr = nu
    for axis in range(nu.ndim):
        arr = np.moveaxis(np.tensordot(T, arr, axes=([1], [axis])), 0, axis)
    return arr


def mu_component(two_s: int, params: BoundaryParams, m, tail_tol: float = 1e-12) -> float:
    """mu(m) with absolute error at most ``tail_tol`` (plus float rounding)."""
    check_two_s(two_s)
    m = check_config(m)
    if tail_tol <= 0:
        raise DomainError("tail_tol must be positive")
    if params.is_equilibrium:
        return float(equilibrium_component(two_s, params.beta_L, m))
    N = len(m)
    K, _ = _choose_K(two_s, params, max(m), [m], tail_tol)
    nu = nu_float_array(two_s, params, N, K)
    T = _kernel_matrix(two_s, params, max(m), K)
    arr = nu
    for axis, mi in enumerate(m):
        # contract the leading axis each time; it is always the next site
        arr = np.tensordot(T[mi], arr, axes=([0], [0]))
    return float(arr)


# -- steady vectors -----------------------------------------------------------


@dataclass
class SteadyVector:
    """Truncated steady-state vector: a map Config -> value on {0..cap}^N."""

    N: int
    cap: int
    entries: dict
    kind: str  # "nu" or "mu"
    normalized: bool = False
    convention: str = ""
    tail_bound: float = 0.0
    meta: dict = field(default_factory=dict)

    def __getitem__(self, m):
        return self.entries[tuple(m)]

    def configs(self):
        return list(self.entries)

    def as_array(self) -> np.ndarray:
        arr = np.zeros((self.cap + 1,) * self.N)
        for m, v in self.entries.items():
            arr[m] = float(v)
        return arr

    def total(self):
        return sum(self.entries.values())

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.entries.values())

    def to_rows(self):
        rows = []
        for m in sorted(self.entries):
            v = self.entries[m]
            rows.append(list(m) + [str(v) if isinstance(v, Fraction) else repr(float(v))])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"m_{i}" for i in range(1, self.N + 1)] + ["value"])
        w.writerows(self.to_rows())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": "harmonic-process/steady-vector/1",
                "kind": self.kind,
                "N": self.N,
                "cap": self.cap,
                "normalized": self.normalized,
                "convention": self.convention,
                "tail_bound": self.tail_bound,
                "meta": self.meta,
                "entries": [{"config": list(r[: self.N]), "value": r[self.N]} for r in self.to_rows()],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SteadyVector":
        d = json.loads(text)
        entries = {}
        for e in d["entries"]:
            v = e["value"]
            entries[tuple(e["config"])] = Fraction(v) if "/" in v or v.lstrip("-").isdigit() else float(v)
        return cls(
            N=d["N"],
            cap=d["cap"],
            entries=entries,
            kind=d["kind"],
            normalized=d["normalized"],
            convention=d["convention"],
            tail_bound=d["tail_bound"],
            meta=d.get("meta", {}),
        )


def nu_table(two_s: int, params: BoundaryParams, N: int, cap: int) -> SteadyVector:
    entries = {m: nu_component(two_s, params, m) for m in enumerate_configs(N, cap)}
    return SteadyVector(N=N, cap=cap, entries=entries, kind="nu", convention="nu(0,...,0) = 1")


def mu_table(two_s: int, params: BoundaryParams, N: int, cap: int, tail_tol: float = 1e-12) -> SteadyVector:
    """mu on {0..cap}^N, each entry within ``tail_tol`` of the exact value."""
    check_two_s(two_s)
    configs = enumerate_configs(N, cap)
    if params.is_equilibrium:
        site = np.array([float(equilibrium_component(two_s, params.beta_L, (m,))) for m in range(cap + 1)])
        arr = site
        for _ in range(N - 1):
            arr = np.multiply.outer(arr, site)
        K, bound = 0, 0.0
    else:
        # the worst case over the box is attained on its corners' neighbourhood;
        # bound every row to stay honest
        K, bounds = _choose_K(two_s, params, cap, configs, tail_tol)
        bound = float(bounds.max())
        nu = nu_float_array(two_s, params, N, K)
        T = _kernel_matrix(two_s, params, cap, K)
        arr = _contract(T, nu)
    entries = {m: float(arr[m]) for m in configs}
    return SteadyVector(
        N=N,
        cap=cap,
        entries=entries,
        kind="mu",
        normalized=True,
        convention="probability measure",
        tail_bound=bound,
        meta={"nu_truncation": K},
    )


@dataclass
class OccupationMoment:
    mean: float
    mass: float
    deficit: float
    warning: bool


def expected_occupation(
    two_s: int, params: BoundaryParams, N: int, site: int, cap: int, accuracy: float = 1e-6, mu: SteadyVector = None
) -> OccupationMoment:
    """Site mean of the truncated steady state, normalised by the truncated mass."""
    if not 1 <= site <= N:
        raise DomainError(f"site must be in 1..{N}")
    if cap < 1:
        raise DomainError("cap must be at least 1")
    if mu is None:
        mu = mu_table(two_s, params, N, cap)
    arr = mu.as_array()
    mass = float(arr.sum())
    occ = np.arange(cap + 1).reshape([-1 if ax == site - 1 else 1 for ax in range(N)])
    mean = float((arr * occ).sum() / mass)
    deficit = 1.0 - mass
    return OccupationMoment(mean=mean, mass=mass, deficit=deficit, warning=deficit > accuracy)


def linear_profile(two_s: int, params: BoundaryParams, N: int, site: int) -> Fraction:
    """2s (rho_L + (rho_R - rho_L) i / (N+1))."""
    return two_s * (params.rho_L + (params.rho_R - params.rho_L) * Fraction(site, N + 1))
