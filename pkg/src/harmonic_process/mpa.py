"""Matrix product representation on an oscillator auxiliary space.

Y(m), Ybar(m) and every term of the bulk and boundary relations raise the
auxiliary index by a fixed amount, so they are stored as
:class:`ShiftOp` (a shift plus one coefficient per input index) and the
operator identities reduce to exact scalar identities per index.

The operators X(m) of the original process are rotations of Y(m) in the
physical index; they are dense lower-triangular matrices on a finite
auxiliary window and are handled in floating point.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import digamma, poch

from .errors import ConfigurationError, ConvergenceError, DegenerateEquilibriumError, DomainError
from .exactnum import binom, check_two_s, gamma_ratio, h_weight, kappa, phi_rate, to_rat, total_insertion_rate
from .steady_closed import BoundaryParams, check_config, rotation_kernel, z_norm

__all__ = [
    "ShiftOp",
    "DenseAuxOp",
    "creation_op",
    "number_op",
    "y_coeff",
    "ybar_coeff",
    "y_op",
    "ybar_op",
    "contract_steady",
    "bulk_relation_residual",
    "left_boundary_residual",
    "right_boundary_residual",
    "harmonic_identity_check",
    "ab_identity_check",
    "hypg_identity_check",
    "x_op",
    "xbar_op",
    "full_mpa_residuals",
    "mpa_relation_residuals",
    "contract_steady_x",
    "coefficient_table_csv",
]


@dataclass(frozen=True)
class ShiftOp:
    """<<a|O|b>> = coeffs[b] * delta(a, b + shift) for 0 <= b <= b_max."""

    shift: int
    coeffs: tuple

    @property
    def b_max(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, b: int):
        return self.coeffs[b]

    def apply(self, b: int):
        """Image of the basis vector |b>> as (index, coefficient)."""
        if not 0 <= b <= self.b_max:
            raise ConfigurationError(f"index {b} outside window [0, {self.b_max}]")
        return b + self.shift, self.coeffs[b]

    def compose(self, inner: "ShiftOp") -> "ShiftOp":
        """self @ inner; the window shrinks to what self can still reach."""
        top = min(inner.b_max, self.b_max - inner.shift)
        if top < 0:
            raise ConfigurationError(
                f"window overflow: outer window {self.b_max} cannot absorb inner shift {inner.shift}"
            )
        return ShiftOp(
            self.shift + inner.shift,
            tuple(self.coeffs[b + inner.shift] * inner.coeffs[b] for b in range(top + 1)),
        )

    __matmul__ = compose

    def _combine(self, other, sign):
        if self.shift != other.shift:
            raise ConfigurationError(f"cannot add shifts {self.shift} and {other.shift}")
        top = min(self.b_max, other.b_max)
        return ShiftOp(self.shift, tuple(self.coeffs[b] + sign * other.coeffs[b] for b in range(top + 1)))

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def scale(self, c) -> "ShiftOp":
        return ShiftOp(self.shift, tuple(c * x for x in self.coeffs))

    __rmul__ = scale

    def truncate(self, b_max: int) -> "ShiftOp":
        if b_max > self.b_max:
            raise ConfigurationError("cannot enlarge a window by truncation")
        return ShiftOp(self.shift, self.coeffs[: b_max + 1])

    @classmethod
    def zero(cls, shift: int, b_max: int) -> "ShiftOp":
        return cls(shift, (Fraction(0),) * (b_max + 1))

    def max_abs(self) -> Fraction:
        return max(abs(x) for x in self.coeffs)


def creation_op(k: int, b_max: int) -> ShiftOp:
    """abar^k."""
    return ShiftOp(k, (Fraction(1),) * (b_max + 1))


def number_op(b_max: int) -> ShiftOp:
    return ShiftOp(0, tuple(Fraction(b) for b in range(b_max + 1)))


def y_coeff(two_s: int, m: int, b: int) -> Fraction:
    """kappa(m) Gamma(m+b+1) / Gamma(2s+m+b+1)."""
    return kappa(two_s, m) * gamma_ratio(m + b + 1, two_s + m + b + 1)


@lru_cache(maxsize=None)
def ybar_coeff(two_s: int, m: int, b: int) -> Fraction:
    """Closed form of Ybar(m) at input index b (shift 2s+m)."""
    if m == 0:
        return Fraction(0)
    val = h_weight(two_s, m) * y_coeff(two_s, m, b)
    for p in range(m):
        val -= y_coeff(two_s, p, b) / (m - p)
    return val


def y_op(two_s: int, m: int, b_max: int) -> ShiftOp:
    check_two_s(two_s)
    if b_max < 0:
        raise ConfigurationError("b_max must be nonnegative")
    return ShiftOp(two_s + m, tuple(y_coeff(two_s, m, b) for b in range(b_max + 1)))


def ybar_op(two_s: int, m: int, b_max: int) -> ShiftOp:
    """Ybar(m) = h_s(m) Y(m) - sum_{p<m} abar^{m-p}/(m-p) Y(p), built by composition."""
    check_two_s(two_s)
    if m == 0:
        return ShiftOp.zero(two_s, b_max)
    out = h_weight(two_s, m) * y_op(two_s, m, b_max)
    for p in range(m):
        term = creation_op(m - p, b_max + two_s + p) @ y_op(two_s, p, b_max)
        out = out - term.scale(Fraction(1, m - p))
    return out


def contract_steady(two_s: int, params: BoundaryParams, m_vec) -> Fraction:
    """Z_N^{-1} <<V| Y(m_1) ... Y(m_N) |W>>, exact."""
    check_two_s(two_s)
    m_vec = check_config(m_vec)
    if params.delta == 0:
        raise DegenerateEquilibriumError("delta = 0: use the equilibrium product form")
    idx, coeff = two_s - 1, Fraction(1)
    for m in reversed(m_vec):
        coeff *= y_coeff(two_s, m, idx)
        idx += two_s + m
    return z_norm(two_s, params, len(m_vec)) * params.delta**idx * coeff


# -- exact relations ------------------------------------------------------------


def bulk_relation_residual(two_s: int, m: int, m_prime: int, b_max: int) -> Fraction:
    """max_b |<m,m'| H (Y x Y) - (Y x Ybar - Ybar x Y)| over probes 0 <= b <= b_max."""
    check_two_s(two_s)
    if b_max < 0:
        raise ConfigurationError("b_max must be nonnegative")
    outer = b_max + two_s + m + m_prime

    def Y(k, w=outer):
        return y_op(two_s, k, w)

    lhs = (h_weight(two_s, m) + h_weight(two_s, m_prime)) * (Y(m) @ Y(m_prime, b_max))
    for k in range(1, m_prime + 1):
        lhs = lhs - phi_rate(two_s, m + k, k) * (Y(m + k) @ Y(m_prime - k, b_max))
    for k in range(1, m + 1):
        lhs = lhs - phi_rate(two_s, m_prime + k, k) * (Y(m - k) @ Y(m_prime + k, b_max))
    rhs = (Y(m) @ ybar_op(two_s, m_prime, b_max)) - (ybar_op(two_s, m, outer) @ Y(m_prime, b_max))
    res = lhs - rhs
    if res.b_max < b_max:
        raise ConfigurationError("window overflow while composing bulk terms")
    return res.max_abs()


def left_boundary_residual(two_s: int, params: BoundaryParams, m: int, b: int = 0) -> Fraction:
    """<<V| (B_L Y)(m) |b>> - <<V| Ybar(m) |b>> with the rotated left boundary."""
    check_two_s(two_s)
    delta = params.delta
    lhs = h_weight(two_s, m) * delta ** (b + two_s + m) * y_coeff(two_s, m, b)
    for k in range(1, m + 1):
        lhs -= delta**k / k * delta ** (b + two_s + m - k) * y_coeff(two_s, m - k, b)
    yb = ybar_op(two_s, m, b)
    idx, c = yb.apply(b)
    return lhs - delta**idx * c


def right_boundary_residual(two_s: int, m: int) -> Fraction:
    """h_s(m) Y(m)|2s-1>> + Ybar(m)|2s-1>> (both land on the same index)."""
    check_two_s(two_s)
    w = two_s - 1
    return h_weight(two_s, m) * y_coeff(two_s, m, w) + ybar_op(two_s, m, w)(w)


def harmonic_identity_check(two_s: int, m: int, phi=phi_rate) -> Fraction:
    """2 h_s(m) - sum_k phi_s(m,k) G(4s+m) G(2s+m-k) / (G(4s+m-k) G(2s+m))."""
    check_two_s(two_s)
    if m < 1:
        raise DomainError("harmonic identity is stated for m >= 1")
    rhs = Fraction(0)
    for k in range(1, m + 1):
        rhs += (
            phi(two_s, m, k)
            * gamma_ratio(2 * two_s + m, 2 * two_s + m - k)
            * gamma_ratio(two_s + m - k, two_s + m)
        )
    return 2 * h_weight(two_s, m) - rhs


def ab_identity_check(two_s: int, m: int, m_prime: int, n_aux: int, phi=phi_rate) -> Fraction:
    """A + B - 2 h_s(m) with the number operator evaluated at n_aux."""
    check_two_s(two_s)
    if m < 1:
        raise DomainError("A + B identity is stated for m >= 1")
    n, s2, mp = n_aux, two_s, m_prime
    km = kappa(s2, m)
    A = Fraction(0)
    for k in range(1, m + 1):
        A += kappa(s2, m - k) / (k * km) * gamma_ratio(n + s2 + m - k + mp + 1, n + 2 * s2 + m - k + mp + 1)
    A *= gamma_ratio(n + 2 * s2 + m + mp + 1, n + s2 + m + mp + 1)
    B = Fraction(0)
    for k in range(1, m + 1):
        B += (
            kappa(s2, m - k) * kappa(s2, mp + k) / (km * kappa(s2, mp))
            * gamma_ratio(n + mp + k + 1, n + s2 + mp + k + 1)
            * phi(s2, mp + k, k)
        )
    B *= gamma_ratio(n + s2 + mp + 1, n + mp + 1)
    return A + B - 2 * h_weight(s2, m)


def _pole_distance(x: float) -> float:
    if x > 0.5:
        return math.inf
    return abs(x - round(x))


def hypg_identity_check(n: int, a: float, b: float, tol: float = 1e-10) -> bool:
    """Terminating 4F3(1,1,-n,a; 2,b,1+a-b-n; 1) against its digamma closed form."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    c = 1 + a - b - n
    for x in (n + b, 1 + a - b, b - 1, a - b - n):
        if _pole_distance(x) < tol:
            raise DomainError(f"digamma argument {x} within {tol} of a pole")
    for base in (b, c):
        for j in range(n):
            if abs(base + j) < tol:
                raise DomainError(f"Pochhammer denominator vanishes at {base} + {j}")
    if abs(a - 1) < tol:
        raise DomainError("a = 1 makes the closed form singular")
    lhs = 0.0
    for j in range(n + 1):
        lhs += poch(1, j) ** 2 * poch(-n, j) * poch(a, j) / (poch(2, j) * poch(b, j) * poch(c, j) * math.factorial(j))
    rhs = (b - 1) * (a - b - n) / ((n + 1) * (a - 1)) * (
        digamma(n + b) + digamma(1 + a - b) - digamma(b - 1) - digamma(a - b - n)
    )
    return bool(abs(lhs - rhs) <= tol * max(1.0, abs(lhs)))


# -- X operators of the original process ---------------------------------------


@dataclass
class DenseAuxOp:
    """Float matrix of an auxiliary-space operator on the window [0, b_max]^2."""

    matrix: np.ndarray
    series_order: int
    rho_R: float
    tail_bound: float
    method: str = "series"

    @property
    def b_max(self):
        return self.matrix.shape[1] - 1

    def __matmul__(self, other):
        if isinstance(other, DenseAuxOp):
            return self.matrix @ other.matrix
        return self.matrix @ other


def _g_factor(two_s, n):
    return float(gamma_ratio(n + 1, n + two_s + 1))


@lru_cache(maxsize=None)
def _series_coeff(two_s: int, m: int, j: int, terms: int, p: int, q: int):
    """Coefficient of abar^j in sum_k (-1)^{k-m} C(k,m) kappa(k) (abar + p/q)^k.

    The sum keeps k = lo .. lo + terms with lo = max(m, j), the first power
    that contributes.  Returns (exact value, geometric bound on the dropped
    tail relative to the retained majorant sum).  Magnitudes
    t_k = C(k,m) kappa(k) C(k,j) |rho|^{k-j} have ratios decreasing in k, so
    the tail is at most t_{hi+1} / (1 - r_{hi+1}).
    """
    lo = max(m, j)
    hi = lo + terms
    A = binom(lo, m) * binom(two_s + lo - 1, lo) * binom(lo, j)
    acc = 0
    mag = 0
    ppow = 1
    ap = abs(p)
    for k in range(lo, hi + 1):
        acc = acc * q + (-A if (k - m) % 2 else A) * ppow
        mag = mag * q + A * ap ** (k - lo)
        ppow *= p
        A = A * (k + 1) * (two_s + k) * (k + 1) // ((k + 1 - m) * (k + 1) * (k + 1 - j))
    # acc = sum a_k p^{k-lo} q^{hi-k}
    value = Fraction(acc * p ** (lo - j), q ** (hi - j))
    k = hi + 1
    r = abs(Fraction(p, q))
    ratio = Fraction((k + 1) * (two_s + k), (k + 1 - m) * (k + 1 - j)) * r
    tk = A * r ** (k - j)
    if ratio >= 1:
        return value, math.inf
    majorant = Fraction(mag * ap ** (lo - j), q ** (hi - j))
    if majorant == 0:
        return value, 0.0
    return value, float(tk / (1 - ratio) / majorant)


def _rotation_coeff(two_s, m, j, rho):
    return rotation_kernel(two_s, rho, m, j) * kappa(two_s, j)


def _x_band(two_s, m, rho, j_max, method, terms):
    """f_j for j = 0..j_max and the largest series tail bound."""
    f = np.zeros(j_max + 1)
    tail = 0.0
    for j in range(j_max + 1):
        if method == "series":
            v, t = _series_coeff(two_s, m, j, terms, rho.numerator, rho.denominator)
            tail = max(tail, t)
        else:
            v = _rotation_coeff(two_s, m, j, rho)
        f[j] = float(v)
    return f, tail


def _band_matrix(two_s, f, rows, cols):
    mat = np.zeros((rows, cols))
    for b in range(cols):
        for a in range(b + two_s, rows):
            j = a - b - two_s
            if j < len(f):
                mat[a, b] = f[j] * _g_factor(two_s, b + j)
    return mat


def _series_guard(rho):
    if abs(rho) >= 1:
        raise ConvergenceError(f"power series for X needs |rho_R| < 1, got {float(rho):.4g}")


def x_op(two_s: int, m: int, params, b_max: int, series_order: int = None, method: str = "series") -> DenseAuxOp:
    """X(m) = abar^{2s} Gamma(N+1)/Gamma(N+2s+1) sum_{k>=m} (-1)^{k-m} C(k,m) kappa(k) (abar + rho_R)^k.

    Each band coefficient keeps ``series_order`` powers beyond the first
    one that contributes to it; the largest dropped-tail bound is recorded.

    ``method="rotation"`` builds the same operator exactly as
    sum_n <m|exp(-S_-) exp(rho_R S_+)|n> Y(n), which needs no series.
    ``params`` may be a BoundaryParams or a bare rho_R.
    """
    check_two_s(two_s)
    rho = params.rho_R if isinstance(params, BoundaryParams) else to_rat(params)
    if series_order is None:
        series_order = 2 * b_max + 80
    if method == "series":
        _series_guard(rho)
        if series_order < 0:
            raise ConfigurationError("series_order must be nonnegative")
    elif method != "rotation":
        raise ConfigurationError(f"unknown method {method!r}")
    f, tail = _x_band(two_s, m, rho, b_max, method, series_order)
    mat = _band_matrix(two_s, f, b_max + 1, b_max + 1)
    return DenseAuxOp(matrix=mat, series_order=series_order, rho_R=float(rho), tail_bound=tail, method=method)


def xbar_op(two_s: int, m: int, params, b_max: int, rows: int = None) -> DenseAuxOp:
    """Xbar(m) = sum_n <m|exp(-S_-) exp(rho_R S_+)|n> Ybar(n), exact on the window."""
    rho = params.rho_R if isinstance(params, BoundaryParams) else to_rat(params)
    rows = b_max + 1 if rows is None else rows
    mat = np.zeros((rows, b_max + 1))
    for b in range(b_max + 1):
        for a in range(b + two_s, rows):
            n = a - b - two_s
            mat[a, b] = float(rotation_kernel(two_s, rho, m, n) * ybar_coeff(two_s, n, b))
    return DenseAuxOp(matrix=mat, series_order=0, rho_R=float(rho), tail_bound=0.0, method="rotation")


class _XFamily:
    """Lazily built X(M) on a rows x cols window, cached per M."""

    def __init__(self, two_s, rho, rows, cols, terms, method):
        self.two_s, self.rho, self.rows, self.cols = two_s, rho, rows, cols
        self.terms, self.method = terms, method
        self.tail = 0.0
        self._cache = {}

    def __call__(self, M):
        if M not in self._cache:
            f, tail = _x_band(self.two_s, M, self.rho, self.rows - 1, self.method, self.terms)
            self.tail = max(self.tail, tail)
            self._cache[M] = _band_matrix(self.two_s, f, self.rows, self.cols)
        return self._cache[M]


def _physical_tail_sum(X, p, two_s, eps, M_cap=400):
    """sum_{j>=1} phi_s(j+p, j) X(j+p), stopped once terms are negligible."""
    total = np.zeros_like(X(p))
    small = 0
    peak = 0.0
    for j in range(1, M_cap):
        term = float(phi_rate(two_s, j + p, j)) * X(j + p)
        size = float(np.max(np.abs(term)))
        total += term
        peak = max(peak, size)
        small = small + 1 if size <= eps * max(peak, 1e-300) or size == 0.0 else 0
        if small >= 4:
            return total
    raise ConvergenceError("physical-index sum did not settle; beta too close to 1")


def mpa_relation_residuals(
    two_s: int, params: BoundaryParams, m: int, m_prime: int, b_max: int, series_order: int = 160, tol: float = 1e-10
) -> dict:
    """Residuals of the bulk and both boundary relations for X and Xbar.

    X(M) uses the power series with ``series_order`` terms per coefficient; Xbar is the
    rotation of Ybar.  The bulk relation is checked entrywise on the
    window; the left relation after contracting with <<V| (summed over an
    extended window until its geometric tail is below ``tol``), the right
    relation on |W>> for output indices up to ``b_max``.
    """
    check_two_s(two_s)
    rho = params.rho_R
    _series_guard(rho)
    delta = params.delta
    c = abs(delta) * (1 - params.beta_R)
    if c >= 1:
        raise ConvergenceError("<<V| contraction diverges: |delta| (1 - beta_R) >= 1")
    eps = tol * 1e-3
    extra = 0 if c == 0 else int(math.ceil(math.log(eps) / math.log(float(c)))) + 10
    rows = b_max + 1 + two_s + extra
    cols = b_max + 1

    # bulk, on the square window
    Xs = _XFamily(two_s, rho, cols, cols, series_order, "series")
    h = lambda k: float(h_weight(two_s, k))  # noqa: E731
    xbar = lambda k: xbar_op(two_s, k, params, b_max).matrix  # noqa: E731
    lhs = (h(m) + h(m_prime)) * Xs(m) @ Xs(m_prime)
    for k in range(1, m_prime + 1):
        lhs -= float(phi_rate(two_s, m + k, k)) * Xs(m + k) @ Xs(m_prime - k)
    for k in range(1, m + 1):
        lhs -= float(phi_rate(two_s, m_prime + k, k)) * Xs(m - k) @ Xs(m_prime + k)
    rhs = Xs(m) @ xbar(m_prime) - xbar(m) @ Xs(m_prime)
    bulk = float(np.max(np.abs(lhs - rhs)))

    # left, contracted with <<V| on an extended row window
    Xl = _XFamily(two_s, rho, rows, cols, series_order, "series")
    vrow = np.array([float(delta) ** a for a in range(rows)])
    LL = total_insertion_rate(params.beta_L)
    left = 0.0
    for p in sorted({m, m_prime}):
        op = (h(p) + LL) * Xl(p) - xbar_op(two_s, p, params, b_max, rows=rows).matrix
        op -= _physical_tail_sum(Xl, p, two_s, eps)
        for k in range(1, p + 1):
            op -= float(params.beta_L) ** k / k * Xl(p - k)
        left = max(left, float(np.max(np.abs(vrow @ op))))

    # right, applied to |W>> = |2s-1>>
    Xr = _XFamily(two_s, rho, cols, cols, series_order, "series")
    LR = total_insertion_rate(params.beta_R)
    w = two_s - 1
    right = 0.0
    if w <= b_max:
        for p in sorted({m, m_prime}):
            op = (h(p) + LR) * Xr(p) + xbar(p)
            op -= _physical_tail_sum(Xr, p, two_s, eps)
            for k in range(1, p + 1):
                op -= float(params.beta_R) ** k / k * Xr(p - k)
            right = max(right, float(np.max(np.abs(op[:, w]))))
    tail = max(Xs.tail, Xl.tail, Xr.tail)
    return {"bulk": bulk, "left": left, "right": right, "series_tail": tail, "v_window": rows - 1}


def full_mpa_residuals(
    two_s: int, params: BoundaryParams, m: int, m_prime: int, b_max: int, tol: float = 1e-10, series_order: int = 160
) -> float:
    """Largest residual of the three relations for the original process."""
    r = mpa_relation_residuals(two_s, params, m, m_prime, b_max, series_order=series_order, tol=tol)
    return max(r["bulk"], r["left"], r["right"])


def contract_steady_x(
    two_s: int, params: BoundaryParams, m_vec, b_max: int = 60, series_order: int = None
) -> float:
    """Z_N^{-1} <<V| X(m_1) ... X(m_N) |W>> on a finite auxiliary window.

    The vector X(m_1)...X(m_N)|W>> has no component below
    a0 = 2s(N+1) - 1, so the delta powers of <<V| and Z_N^{-1} combine into
    sum_a delta^{a - a0} with nonnegative exponents.  This is regular at
    delta = 0, where only a = a0 survives.
    """
    check_two_s(two_s)
    m_vec = check_config(m_vec)
    N = len(m_vec)
    a0 = two_s * (N + 1) - 1
    if b_max < a0:
        raise ConfigurationError(f"b_max={b_max} is below the first populated index {a0}")
    vec = np.zeros(b_max + 1)
    vec[two_s - 1] = 1.0
    for m in reversed(m_vec):
        vec = x_op(two_s, m, params, b_max, series_order).matrix @ vec
    d = float(params.delta)
    powers = np.array([d ** (a - a0) for a in range(a0, b_max + 1)])
    return float(gamma_ratio(two_s * (N + 1), two_s)) * float(powers @ vec[a0:])


def coefficient_table_csv(two_s_values, m_values, b_values) -> str:
    """Golden table of Y and Ybar coefficients keyed by (two_s, m, b)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["two_s", "m", "b", "shift", "y", "ybar"])
    for ts in two_s_values:
        for m in m_values:
            for b in b_values:
                w.writerow([ts, m, b, ts + m, str(y_coeff(ts, m, b)), str(ybar_coeff(ts, m, b))])
    return buf.getvalue()
