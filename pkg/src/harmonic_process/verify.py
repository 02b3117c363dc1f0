"""Exact verification suite over a parameter grid.

Every check is rational arithmetic and must return exactly zero; the report
holds one entry per (check, parameter tuple).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .exactnum import h_weight, phi_rate
from .generator import stationarity_residual_exact
from .mixture import nu_integral_reduce
from .mpa import (
    ab_identity_check,
    bulk_relation_residual,
    contract_steady,
    harmonic_identity_check,
    left_boundary_residual,
    right_boundary_residual,
)
from .steady_closed import BoundaryParams, enumerate_configs, nu_component

REPORT_SCHEMA = "harmonic-process/verify-report/1"
CHECKS = (
    "stochasticity",
    "harmonic_identity",
    "ab_identity",
    "mpa_bulk",
    "mpa_left",
    "mpa_right",
    "stationarity",
    "triple_representation",
)


@dataclass(frozen=True)
class VerifyGrid:
    two_s_max: int = 3
    N_max: int = 3
    occ_max: int = 4
    aux_max: int = 12
    params: tuple = (BoundaryParams("2/5", "1/5"), BoundaryParams("1/2", "1/3"))


def corrupted_phi(m0: int = 2, k0: int = 1, eps=Fraction(1, 1000)):
    """phi_s with one entry nudged; used to confirm the suite can fail."""
    def phi(two_s, m, k):
        r = phi_rate(two_s, m, k)
        return r + eps if (m, k) == (m0, k0) else r
    return phi


def _entry(check, params, residual):
    return {"check": check, "params": params, "residual": str(residual), "pass": residual == 0}


def run_suite(grid: VerifyGrid = VerifyGrid(), phi=phi_rate, checks=CHECKS) -> dict:
    out = []
    S = range(1, grid.two_s_max + 1)
    M = range(0, grid.occ_max + 1)
    if "stochasticity" in checks:
        for s, m in itertools.product(S, M):
            r = sum((phi(s, m, k) for k in range(1, m + 1)), Fraction(0)) - h_weight(s, m)
            out.append(_entry("stochasticity", {"two_s": s, "m": m}, r))
    if "harmonic_identity" in checks:
        for s, m in itertools.product(S, M):
            if m >= 1:
                out.append(_entry("harmonic_identity", {"two_s": s, "m": m}, harmonic_identity_check(s, m, phi)))
    if "ab_identity" in checks:
        for s, m, mp in itertools.product(S, M, M):
            if m >= 1:
                r = max(abs(ab_identity_check(s, m, mp, n, phi)) for n in range(grid.aux_max + 1))
                out.append(_entry("ab_identity", {"two_s": s, "m": m, "m_prime": mp, "aux_max": grid.aux_max}, r))
    for s, m, mp in itertools.product(S, M, M):
        if "mpa_bulk" in checks:
            r = bulk_relation_residual(s, m, mp, grid.aux_max)
            out.append(_entry("mpa_bulk", {"two_s": s, "m": m, "m_prime": mp, "aux_max": grid.aux_max}, r))
    for p in grid.params:
        tag = {"beta_L": str(p.beta_L), "beta_R": str(p.beta_R)}
        for s, m in itertools.product(S, M):
            if "mpa_left" in checks:
                r = max(abs(left_boundary_residual(s, p, m, b)) for b in range(grid.aux_max + 1))
                out.append(_entry("mpa_left", {"two_s": s, "m": m, **tag}, r))
        for N in range(1, grid.N_max + 1):
            for s in S:
                if "stationarity" in checks:
                    res = stationarity_residual_exact(s, p, N, grid.occ_max, phi=phi)
                    r = max(abs(v) for v in res.values())
                    out.append(_entry("stationarity", {"two_s": s, "N": N, "total_cap": grid.occ_max, **tag}, r))
                if "triple_representation" in checks:
                    worst = Fraction(0)
                    for m in enumerate_configs(N, grid.occ_max):
                        a = nu_component(s, p, m)
                        worst = max(worst, abs(a - nu_integral_reduce(s, p, m)), abs(a - contract_steady(s, p, m)))
                    out.append(_entry("triple_representation", {"two_s": s, "N": N, "occ_max": grid.occ_max, **tag}, worst))
    if "mpa_right" in checks:
        for s, m in itertools.product(S, M):
            out.append(_entry("mpa_right", {"two_s": s, "m": m}, right_boundary_residual(s, m)))
    failed = sorted({e["check"] for e in out if not e["pass"]})
    return {
        "schema": REPORT_SCHEMA,
        "grid": {
            "two_s_max": grid.two_s_max,
            "N_max": grid.N_max,
            "occ_max": grid.occ_max,
            "aux_max": grid.aux_max,
            "params": [[str(p.beta_L), str(p.beta_R)] for p in grid.params],
        },
        "entries": out,
        "failed_checks": failed,
        "pass": not failed,
    }
