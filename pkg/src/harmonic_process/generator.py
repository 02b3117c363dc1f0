"""Stochastic generator H and its rotated form H_tilde on truncated windows.

Matrices follow the column convention of the Hamiltonian: entry
(row, col) = <row| H |col>, diagonal positive, off-diagonal rates negative,
so a stationary vector satisfies H mu = 0 and each column sums to zero
when no transition leaves the window.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DomainError
from .exactnum import check_two_s, h_weight, phi_rate, total_insertion_rate
from .steady_closed import BoundaryParams, SteadyVector, check_config, enumerate_configs, nu_component

__all__ = [
    "TruncatedBasis",
    "SparseGenerator",
    "bulk_density_action",
    "build_generator",
    "stationarity_residual_exact",
    "stationarity_residual_numeric",
    "configs_up_to_total",
]


@dataclass(frozen=True)
class TruncatedBasis:
    N: int
    cap: int
    configs: tuple = field(init=False, repr=False)
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 1 or self.cap < 0:
            raise ConfigurationError("basis needs N >= 1 and cap >= 0")
        configs = tuple(enumerate_configs(self.N, self.cap))
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "index", {m: i for i, m in enumerate(configs)})

    def __len__(self):
        return len(self.configs)

    def __contains__(self, m):
        return len(m) == self.N and all(0 <= x <= self.cap for x in m)


def bulk_density_action(two_s: int, m: int, m_prime: int):
    """Column of the two-site density at |m, m'>: [((target), coefficient), ...]."""
    out = [((m, m_prime), h_weight(two_s, m) + h_weight(two_s, m_prime))]
    for k in range(1, m + 1):
        out.append(((m - k, m_prime + k), -phi_rate(two_s, m, k)))
    for k in range(1, m_prime + 1):
        out.append(((m + k, m_prime - k), -phi_rate(two_s, m_prime, k)))
    return out


def _boundary_column(two_s, m, kind, beta, delta):
    """Targets of the single-site boundary operator acting on |m> (within any cap)."""
    if kind == "H":
        out = [(m, float(h_weight(two_s, m)) + total_insertion_rate(beta))]
        for k in range(1, m + 1):
            out.append((m - k, -float(phi_rate(two_s, m, k))))
        return out, ("insert", float(beta))
    if kind == "H_tilde_L":
        return [(m, h_weight(two_s, m))], ("insert", delta)
    return [(m, h_weight(two_s, m))], None


@dataclass
class SparseGenerator:
    basis: TruncatedBasis
    entries: dict
    kind: str
    boundary_truncation: dict = field(default_factory=dict)

    def to_scipy(self, dtype=float) -> sp.csc_matrix:
        n = len(self.basis)
        if not self.entries:
            return sp.csc_matrix((n, n), dtype=dtype)
        rows, cols = zip(*self.entries)
        vals = [float(v) for v in self.entries.values()]
        return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()

    def column(self, j):
        return {r: v for (r, c), v in self.entries.items() if c == j}

    def column_balance(self):
        """Per column: diagonal minus the magnitude of off-diagonal entries.

        Zero for columns whose transitions all stay in the window; positive
        (the escaping rate) otherwise.
        """
        n = len(self.basis)
        diag = [0] * n
        off = [0] * n
        for (r, c), v in self.entries.items():
            if r == c:
                diag[c] += v
            else:
                off[c] += -v
        return [d - o for d, o in zip(diag, off)]

    def to_coo_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# kind={self.kind} N={self.basis.N} cap={self.basis.cap}\n")
        for (r, c), v in sorted(self.entries.items()):
            buf.write(f"{r} {c} {v}\n")
        return buf.getvalue()


def build_generator(two_s: int, params: BoundaryParams, basis: TruncatedBasis, kind: str = "H", insertion_cutoff=None):
    """Assemble H (float, logarithmic reservoir diagonal) or H_tilde (exact).

    For H_tilde the right boundary is diagonal and the left one inserts k
    particles with weight (rho_L - rho_R)^k / k.  For H the insertion series
    is cut at ``insertion_cutoff`` (default: cap), which is exact inside the
    window since no in-window insertion exceeds cap.
    """
    check_two_s(two_s)
    if kind not in ("H", "H_tilde"):
        raise ConfigurationError(f"unknown generator kind {kind!r}")
    cap, N = basis.cap, basis.N
    if insertion_cutoff is None:
        insertion_cutoff = cap
    if insertion_cutoff < cap:
        raise ConfigurationError(f"insertion_cutoff={insertion_cutoff} misses in-window insertions (cap={cap})")
    exact = kind == "H_tilde"
    zero = Fraction(0) if exact else 0.0
    conv = (lambda x: x) if exact else float
    entries = {}

    def add(tgt, src, val):
        if tgt in basis:
            key = (basis.index[tgt], basis.index[src])
            entries[key] = entries.get(key, zero) + val

    for j, m in enumerate(basis.configs):
        for i in range(N - 1):
            for (a, b), v in bulk_density_action(two_s, m[i], m[i + 1]):
                tgt = m[:i] + (a, b) + m[i + 2 :]
                add(tgt, m, conv(v))
        for site, side in ((0, "L"), (N - 1, "R")):
            beta = params.beta_L if side == "L" else params.beta_R
            bkind = "H" if kind == "H" else f"H_tilde_{side}"
            col, insert = _boundary_column(two_s, m[site], bkind, beta, params.delta)
            for a, v in col:
                add(m[:site] + (a,) + m[site + 1 :], m, v)
            if insert is not None:
                w = insert[1]
                for k in range(1, min(insertion_cutoff, cap - m[site]) + 1):
                    val = -(w**k) / k
                    add(m[:site] + (m[site] + k,) + m[site + 1 :], m, val)
    trunc = {"insertion_cutoff": insertion_cutoff} if kind == "H" else {"insertion": "exact (finite window)"}
    return SparseGenerator(basis=basis, entries=entries, kind=kind, boundary_truncation=trunc)


def configs_up_to_total(N: int, total_cap: int):
    """Configurations with |m| <= total_cap, lexicographic."""
    out = []

    def rec(prefix, left):
        if len(prefix) == N:
            out.append(tuple(prefix))
            return
        for x in range(left + 1):
            rec(prefix + [x], left - x)

    rec([], total_cap)
    return sorted(out)


def stationarity_residual_exact(
    two_s: int, params: BoundaryParams, N: int, total_cap: int, nu=None, phi=phi_rate
) -> dict:
    """<m| H_tilde |nu> for every m with |m| <= total_cap, exactly.

    Rows of H_tilde receive only from sources with equal total (bulk), from
    lower occupations at site 1 (left insertion), and from themselves, so
    each row is a finite sum.  ``nu`` defaults to the closed form; pass a
    callable to probe a perturbed vector, or a different ``phi`` to probe
    perturbed rates.
    """
    check_two_s(two_s)
    if total_cap < 0:
        raise DomainError("total_cap must be nonnegative")
    if nu is None:
        def nu(m):
            return nu_component(two_s, params, m)
    delta = params.delta
    out = {}
    for m in configs_up_to_total(N, total_cap):
        acc = Fraction(0)
        diag = h_weight(two_s, m[0]) + h_weight(two_s, m[-1])
        for i in range(N - 1):
            diag += h_weight(two_s, m[i]) + h_weight(two_s, m[i + 1])
        acc += diag * nu(m)
        for i in range(N - 1):
            a, b = m[i], m[i + 1]
            # source (a+k, b-k) moved k to the right
            for k in range(1, b + 1):
                src = m[:i] + (a + k, b - k) + m[i + 2 :]
                acc -= phi(two_s, a + k, k) * nu(src)
            # source (a-k, b+k) moved k to the left
            for k in range(1, a + 1):
                src = m[:i] + (a - k, b + k) + m[i + 2 :]
                acc -= phi(two_s, b + k, k) * nu(src)
        for k in range(1, m[0] + 1):
            src = (m[0] - k,) + m[1:]
            acc -= delta**k / k * nu(src)
        out[m] = acc
    return out


def stationarity_residual_numeric(mu: SteadyVector, gen: SparseGenerator, interior_margin: int) -> float:
    """max over interior rows of |(H mu)(m)|, divided by the largest interior diagonal."""
    if gen.kind != "H":
        raise ConfigurationError("numeric residual applies to the original generator H")
    basis = gen.basis
    if mu.N != basis.N or mu.cap != basis.cap:
        raise ConfigurationError("mu and generator live on different windows")
    if interior_margin >= basis.cap or interior_margin < 0:
        raise ConfigurationError(f"margin {interior_margin} must be in [0, cap={basis.cap})")
    vec = np.array([float(mu.entries[m]) for m in basis.configs])
    H = gen.to_scipy()
    res = H @ vec
    lim = basis.cap - interior_margin
    interior = np.array([all(x <= lim for x in m) for m in basis.configs])
    diag = H.diagonal()
    scale = np.max(np.abs(diag[interior]))
    return float(np.max(np.abs(res[interior])) / scale)
