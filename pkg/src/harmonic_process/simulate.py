"""Exact continuous-time simulation of the open harmonic chain.

Every site holding m particles emits k of them (1 <= k <= m) to each
neighbour, or to an adjacent reservoir at the chain ends, at rate
phi_s(m, k).  Each reservoir inserts k particles at rate beta^k / k, handled
as one aggregate event of rate -log(1 - beta) whose size is drawn from the
logarithmic distribution at firing time.

Statistics are time averages after a burn-in.  Standard errors come from
batch means over equal time windows; goodness-of-fit uses configuration
snapshots taken at a fixed spacing well above the relaxation time.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats as sps

from . import _kernels
from .errors import ConfigurationError, DomainError
from .exactnum import check_two_s, h_weight, phi_rate, total_insertion_rate
from .steady_closed import BoundaryParams, SteadyVector, check_config

__all__ = [
    "Event",
    "EventTable",
    "StatsAccumulator",
    "enumerate_rates",
    "gillespie_run",
    "empirical_vs_exact_report",
    "report_json",
    "log_size_gof",
    "site_outflow_consistent",
    "REPORT_SCHEMA",
]

REPORT_SCHEMA = "harmonic-process/sim-report/1"
KINDS = ("bulk-right", "bulk-left", "extract-L", "extract-R", "insert-L", "insert-R")


@dataclass(frozen=True)
class Event:
    kind: str
    site: int
    size: int  # 0 for aggregate insertions (size drawn at firing time)
    rate: object


@dataclass
class EventTable:
    events: list

    def total_rate(self) -> float:
        return float(sum(float(e.rate) for e in self.events))

    def site_outflow(self, site: int) -> Fraction:
        """Exact sum of bulk and extraction rates leaving ``site``."""
        return sum((e.rate for e in self.events if e.site == site and not e.kind.startswith("insert")), Fraction(0))

    def of_kind(self, kind: str):
        return [e for e in self.events if e.kind == kind]


def enumerate_rates(two_s: int, params: BoundaryParams, config) -> EventTable:
    """All events available from ``config``; bulk and extraction rates are exact."""
    check_two_s(two_s)
    m = check_config(config)
    N = len(m)
    ev = []
    for i, mi in enumerate(m):
        for k in range(1, mi + 1):
            r = phi_rate(two_s, mi, k)
            ev.append(Event("bulk-right" if i < N - 1 else "extract-R", i, k, r))
            ev.append(Event("bulk-left" if i > 0 else "extract-L", i, k, r))
    ev.append(Event("insert-L", 0, 0, total_insertion_rate(params.beta_L)))
    ev.append(Event("insert-R", N - 1, 0, total_insertion_rate(params.beta_R)))
    return EventTable(ev)


@dataclass
class StatsAccumulator:
    """Time-weighted statistics of one or more trajectories.

    Batches of merged replicas are stacked, so standard errors treat every
    batch as an independent estimate.
    """

    two_s: int
    N: int
    radix: int
    batch_len: float
    elapsed: float
    burn_elapsed: float
    events: int
    occ_time: np.ndarray
    burn_occ: np.ndarray
    batch_occ: np.ndarray
    cfg_time: np.ndarray
    batch_cfg: np.ndarray
    snap_hist: np.ndarray
    ins_hist: np.ndarray
    replicas: int = 1
    meta: dict = field(default_factory=dict)

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        if (self.two_s, self.N, self.radix) != (other.two_s, other.N, other.radix):
            raise ConfigurationError("cannot merge accumulators of different shape")
        if not math.isclose(self.batch_len, other.batch_len, rel_tol=1e-12):
            raise ConfigurationError("cannot merge accumulators with different batch lengths")
        return StatsAccumulator(
            two_s=self.two_s,
            N=self.N,
            radix=self.radix,
            batch_len=self.batch_len,
            elapsed=self.elapsed + other.elapsed,
            burn_elapsed=self.burn_elapsed + other.burn_elapsed,
            events=self.events + other.events,
            occ_time=self.occ_time + other.occ_time,
            burn_occ=self.burn_occ + other.burn_occ,
            batch_occ=np.vstack([self.batch_occ, other.batch_occ]),
            cfg_time=self.cfg_time + other.cfg_time,
            batch_cfg=np.vstack([self.batch_cfg, other.batch_cfg]),
            snap_hist=self.snap_hist + other.snap_hist,
            ins_hist=self.ins_hist + other.ins_hist,
            replicas=self.replicas + other.replicas,
            meta=dict(self.meta),
        )

    __add__ = merge

    @property
    def n_batches(self) -> int:
        return self.batch_occ.shape[0]

    def site_means(self) -> np.ndarray:
        return self.occ_time / self.elapsed

    def burn_in_means(self) -> np.ndarray:
        if self.burn_elapsed == 0:
            return np.full(self.N, np.nan)
        return self.burn_occ / self.burn_elapsed

    def site_stderr(self) -> np.ndarray:
        means = self.batch_occ / self.batch_len
        return means.std(axis=0, ddof=1) / math.sqrt(self.n_batches)

    def config_fraction(self, idx: int) -> float:
        return float(self.cfg_time[idx] / self.elapsed)

    def config_stderr(self, idx: int) -> float:
        f = self.batch_cfg[:, idx] / self.batch_len
        return float(f.std(ddof=1) / math.sqrt(self.n_batches))

    def index_of(self, config) -> int:
        idx, mul = 0, 1
        for x in config:
            if x >= self.radix:
                return self.overflow_index
            idx += x * mul
            mul *= self.radix
        return idx

    @property
    def overflow_index(self) -> int:
        return self.cfg_time.shape[0] - 1

    def config_of(self, idx: int) -> tuple:
        out = []
        for _ in range(self.N):
            idx, r = divmod(idx, self.radix)
            out.append(r)
        return tuple(out)

    def identical(self, other: "StatsAccumulator") -> bool:
        """Bit-for-bit equality of every accumulated array and counter."""
        arrays = ("occ_time", "burn_occ", "batch_occ", "cfg_time", "batch_cfg", "snap_hist", "ins_hist")
        return (
            self.events == other.events
            and self.elapsed == other.elapsed
            and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
        )

    def summary(self) -> dict:
        return {
            "two_s": self.two_s,
            "N": self.N,
            "events": int(self.events),
            "replicas": self.replicas,
            "measured_time": self.elapsed,
            "burn_in_time": self.burn_elapsed,
            "site_means": self.site_means().tolist(),
            "site_stderr": self.site_stderr().tolist(),
            "burn_in_site_means": self.burn_in_means().tolist(),
            "snapshots": int(self.snap_hist.sum()),
            **self.meta,
        }


def _run_single(two_s, params, N, t_max, burn_in, rng, n_batches, radix, snapshot_dt, chunk, initial, ins_bins):
    bL, bR = float(params.beta_L), float(params.beta_R)
    lamL, lamR = total_insertion_rate(bL), total_insertion_rate(bR)
    m = np.zeros(N, dtype=np.int64) if initial is None else np.array(initial, dtype=np.int64)
    h_tab = _kernels.h_table(two_s)
    st = np.zeros(4)
    st[_kernels.NEXT_SNAP] = burn_in + snapshot_dt
    _kernels._recompute_total(m, h_tab, two_s, lamL, lamR, st)
    n_cells = radix**N + 1
    occ_time = np.zeros(N)
    burn_occ = np.zeros(N)
    batch_occ = np.zeros((n_batches, N))
    cfg_time = np.zeros(n_cells)
    batch_cfg = np.zeros((n_batches, n_cells))
    snap_hist = np.zeros(n_cells, dtype=np.int64)
    ins_hist = np.zeros((2, ins_bins), dtype=np.int64)
    cdfL, cdfR = _kernels.log_cdf(bL), _kernels.log_cdf(bR)
    batch_len = (t_max - burn_in) / n_batches
    events = 0
    done = False
    while not done:
        u = rng.random(3 * chunk)
        fired, done = _kernels.run_chunk(
            m, st, u, h_tab, two_s, bL, bR, lamL, lamR, cdfL, cdfR,
            burn_in, t_max, batch_len, n_batches, radix,
            occ_time, burn_occ, batch_occ, cfg_time, batch_cfg,
            snapshot_dt, snap_hist, ins_hist,
        )
        events += int(fired)
    return StatsAccumulator(
        two_s=two_s,
        N=N,
        radix=radix,
        batch_len=batch_len,
        elapsed=t_max - burn_in,
        burn_elapsed=burn_in,
        events=events,
        occ_time=occ_time,
        burn_occ=burn_occ,
        batch_occ=batch_occ,
        cfg_time=cfg_time,
        batch_cfg=batch_cfg,
        snap_hist=snap_hist,
        ins_hist=ins_hist,
    )


def gillespie_run(
    two_s: int,
    params: BoundaryParams,
    N: int,
    t_max: float,
    seed: int,
    burn_in: float = None,
    replicas: int = 1,
    n_batches: int = 64,
    radix: int = 8,
    snapshot_dt: float = 10.0,
    chunk: int = 1 << 16,
    initial=None,
    workers: int = None,
    ins_bins: int = 32,
) -> StatsAccumulator:
    """Simulate ``replicas`` independent trajectories on [0, t_max] and merge them.

    burn_in defaults to 10% of t_max.  Replica r uses the r-th child of
    ``SeedSequence(seed)``, so results depend only on the seed, never on
    scheduling.  Configurations with every occupation below ``radix`` get
    their own histogram cell; the rest share one overflow cell.
    """
    check_two_s(two_s)
    if N < 1:
        raise ConfigurationError("need at least one site")
    if burn_in is None:
        burn_in = 0.1 * t_max
    if not t_max > burn_in >= 0:
        raise DomainError(f"need t_max > burn_in >= 0, got t_max={t_max}, burn_in={burn_in}")
    if replicas < 1 or n_batches < 2 or radix < 1 or snapshot_dt <= 0:
        raise ConfigurationError("invalid replicas / n_batches / radix / snapshot_dt")
    if initial is not None:
        initial = check_config(initial)
        if len(initial) != N:
            raise ConfigurationError("initial configuration has the wrong length")
    children = np.random.SeedSequence(seed).spawn(replicas)

    def job(ss):
        return _run_single(
            two_s, params, N, t_max, burn_in, np.random.default_rng(ss),
            n_batches, radix, snapshot_dt, chunk, initial, ins_bins,
        )

    if replicas == 1 or workers == 1:
        parts = [job(ss) for ss in children]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, children))
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    out.meta = {
        "seed": seed,
        "t_max": t_max,
        "burn_in": burn_in,
        "snapshot_dt": snapshot_dt,
        "beta_L": str(params.beta_L),
        "beta_R": str(params.beta_R),
        "numba": not _kernels.NUMBA_DISABLED,
    }
    return out


# -- comparison -----------------------------------------------------------------


def _pearson(observed, expected):
    """Pearson statistic and p-value; the last cell is the pooled remainder."""
    keep = expected > 0
    chi2 = float(np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep]))
    dof = int(keep.sum()) - 1
    p = float(sps.chi2.sf(chi2, dof)) if dof > 0 else float("nan")
    return chi2, dof, p


def _contingency(a, b):
    """Two-sample homogeneity test on aligned count vectors."""
    table = np.vstack([a, b]).astype(float)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 0.0, 0, float("nan")
    res = sps.chi2_contingency(table, correction=False)
    return float(res.statistic), int(res.dof), float(res.pvalue)


def _compare_exact(stats, reference, significance, min_expected, z_max):
    mu = reference.entries
    # site means from the truncated table, plus its certified deficit
    total = float(sum(mu.values()))
    exact_means = np.array(
        [sum(float(p) * m[i] for m, p in mu.items()) / total for i in range(stats.N)]
    )
    emp = stats.site_means()
    se = stats.site_stderr()
    z_sites = (emp - exact_means) / se
    n_snap = int(stats.snap_hist.sum())
    cells, obs, exp, z_cfg = [], [], [], []
    for m, p in mu.items():
        idx = stats.index_of(m)
        if idx == stats.overflow_index:
            continue
        p = float(p) / total
        if n_snap * p >= min_expected:
            cells.append(m)
            obs.append(stats.snap_hist[idx])
            exp.append(n_snap * p)
            s = stats.config_stderr(idx)
            z_cfg.append((stats.config_fraction(idx) - p) / s if s > 0 else float("inf"))
    rest_o = n_snap - sum(obs)
    rest_e = n_snap - sum(exp)
    obs_a = np.array(obs + [rest_o], dtype=float)
    exp_a = np.array(exp + [max(rest_e, 0.0)], dtype=float)
    if rest_e < min_expected:
        # fold a thin remainder into the largest cell to keep the test valid
        j = int(np.argmax(exp_a[:-1])) if len(exp) else 0
        obs_a[j] += obs_a[-1]
        exp_a[j] += exp_a[-1]
        obs_a, exp_a = obs_a[:-1], exp_a[:-1]
    chi2, dof, pval = _pearson(obs_a, exp_a)
    return {
        "reference": "exact",
        "exact_site_means": exact_means.tolist(),
        "site_means": emp.tolist(),
        "site_stderr": se.tolist(),
        "site_z": z_sites.tolist(),
        "configs": [
            {"config": list(c), "z": float(z), "expected_count": float(e), "observed_count": int(o)}
            for c, z, e, o in zip(cells, z_cfg, exp, obs)
        ],
        "chi2": chi2,
        "dof": dof,
        "p_value": pval,
        "sites_pass": bool(np.all(np.abs(z_sites) < z_max)),
        "gof_pass": bool(dof > 0 and pval >= significance),
        "cells": len(cells),
    }


def _compare_samples(stats, samples, significance, min_expected, z_max):
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.shape[1] != stats.N:
        raise ConfigurationError("sampler reference must have shape (size, N)")
    emp = stats.site_means()
    se = stats.site_stderr()
    ref_mean = samples.mean(axis=0)
    ref_se = samples.std(axis=0, ddof=1) / math.sqrt(len(samples))
    z_sites = (emp - ref_mean) / np.sqrt(se**2 + ref_se**2)
    counts = np.zeros_like(stats.snap_hist)
    for row in samples:
        counts[stats.index_of(tuple(int(x) for x in row))] += 1
    n_a, n_b = stats.snap_hist.sum(), counts.sum()
    pooled = (stats.snap_hist + counts) / (n_a + n_b)
    big = pooled * min(n_a, n_b) >= min_expected
    a = np.append(stats.snap_hist[big], stats.snap_hist[~big].sum())
    b = np.append(counts[big], counts[~big].sum())
    chi2, dof, pval = _contingency(a, b)
    return {
        "reference": "sampler",
        "reference_site_means": ref_mean.tolist(),
        "site_means": emp.tolist(),
        "site_stderr": se.tolist(),
        "site_z": z_sites.tolist(),
        "chi2": chi2,
        "dof": dof,
        "p_value": pval,
        "sites_pass": bool(np.all(np.abs(z_sites) < z_max)),
        "gof_pass": bool(dof > 0 and pval >= significance),
        "cells": int(big.sum()),
    }


def empirical_vs_exact_report(
    stats: StatsAccumulator, reference, significance: float = 1e-3, min_expected: float = 25.0, z_max: float = 3.0
) -> dict:
    """Compare a simulation against an exact mu table or i.i.d. sampler draws.

    ``reference`` is a :class:`SteadyVector` (normalized mu) or an integer
    array of sampled configurations.  The run passes when every per-site
    mean is within ``z_max`` standard errors and the snapshot chi-square
    test is not rejected at ``significance``.
    """
    if isinstance(reference, SteadyVector):
        if reference.kind != "mu":
            raise ConfigurationError("exact reference must be a mu table")
        if reference.N != stats.N:
            raise ConfigurationError("reference and simulation have different N")
        body = _compare_exact(stats, reference, significance, min_expected, z_max)
    else:
        body = _compare_samples(stats, reference, significance, min_expected, z_max)
    warnings = []
    if body["dof"] < 1 or body["cells"] < 2:
        warnings.append("underpowered: fewer than two cells reach the minimum expected count")
    if stats.n_batches < 16:
        warnings.append("underpowered: fewer than 16 batches for the standard errors")
    report = {
        "schema": REPORT_SCHEMA,
        "significance": significance,
        "min_expected": min_expected,
        "z_max": z_max,
        "summary": stats.summary(),
        **body,
        "warnings": warnings,
    }
    report["pass"] = bool(body["sites_pass"] and body["gof_pass"] and not warnings)
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=float)


def log_size_gof(stats: StatsAccumulator, params: BoundaryParams, side: str = "L", min_expected: float = 25.0):
    """Chi-square of recorded insertion sizes against beta^k / (k (-log(1-beta))).

    Returns (statistic, dof, p-value).
    """
    row = 0 if side == "L" else 1
    beta = float(params.beta_L if side == "L" else params.beta_R)
    lam = total_insertion_rate(beta)
    hist = stats.ins_hist[row].astype(float)
    n = hist.sum()
    kmax = hist.shape[0] - 1
    k = np.arange(1, kmax)
    probs = beta**k / (k * lam)
    exp = np.zeros(kmax + 1)
    exp[1:kmax] = n * probs
    exp[kmax] = n - exp[1:kmax].sum()
    obs = hist.copy()
    # pool small cells into the tail
    big = exp >= min_expected
    big[0] = False
    o = np.append(obs[big], obs[~big].sum())
    e = np.append(exp[big], exp[~big].sum())
    if e[-1] == 0:
        o, e = o[:-1], e[:-1]
    return _pearson(o, e)


def site_outflow_consistent(two_s: int, params: BoundaryParams, config) -> bool:
    """Every site's exact outflow equals 2 h_s(m_i) (two mechanisms per site)."""
    table = enumerate_rates(two_s, params, config)
    return all(table.site_outflow(i) == 2 * h_weight(two_s, mi) for i, mi in enumerate(config))
