import json
import math
import os
import subprocess
import sys
from fractions import Fraction as F

import numpy as np
import pytest

from harmonic_process import _kernels
from harmonic_process.errors import ConfigurationError, DomainError
from harmonic_process.exactnum import h_weight, phi_rate, total_insertion_rate
from harmonic_process.mixture import sample_configs
from harmonic_process.simulate import (
    REPORT_SCHEMA,
    empirical_vs_exact_report,
    enumerate_rates,
    gillespie_run,
    log_size_gof,
    report_json,
    site_outflow_consistent,
)
from harmonic_process.steady_closed import BoundaryParams, enumerate_configs, mu_table


def test_rates_empty(driven):
    t = enumerate_rates(1, driven, (0, 0, 0))
    assert [e.kind for e in t.events] == ["insert-L", "insert-R"]
    assert t.total_rate() == pytest.approx(-math.log(0.6) - math.log(0.8))


def test_rates_single_particle(driven):
    t = enumerate_rates(1, driven, (1, 0))
    assert [e.rate for e in t.of_kind("bulk-right")] == [1]
    assert [e.rate for e in t.of_kind("extract-L")] == [1]
    assert t.of_kind("bulk-left") == [] and t.of_kind("extract-R") == []


def test_rates_match_phi_and_h(driven):
    for two_s in (1, 2, 3):
        for m in enumerate_configs(3, 3):
            t = enumerate_rates(two_s, driven, m)
            for e in t.events:
                if not e.kind.startswith("insert"):
                    assert e.rate == phi_rate(two_s, m[e.site], e.size)
            assert site_outflow_consistent(two_s, driven, m)
            ins = t.of_kind("insert-L")[0].rate
            assert ins == pytest.approx(total_insertion_rate(driven.beta_L))


def test_kernel_helpers():
    h = _kernels.h_table(2, 16)
    for m in range(40):
        assert _kernels.h_value(h, 2, m) == pytest.approx(float(h_weight(2, m)), rel=1e-14)
    # inverse-CDF draw of the jump size matches the cumulative rates
    m, two_s = 5, 2
    cum = np.cumsum([float(phi_rate(two_s, m, k)) for k in range(1, m + 1)])
    for k, c in enumerate(cum, start=1):
        assert _kernels.draw_jump_size(two_s, m, c - 1e-9) == k
    cdf = _kernels.log_cdf(0.3)
    assert cdf[-1] == pytest.approx(1.0, abs=1e-15)
    lam = total_insertion_rate(0.3)
    assert _kernels.draw_log_size(cdf, 0.3, lam, 0.0) == 1
    assert _kernels.draw_log_size(cdf, 0.3, lam, 0.3 / lam - 1e-12) == 1
    assert _kernels.draw_log_size(cdf, 0.3, lam, 0.3 / lam + 1e-12) == 2
    # beyond the cached table the sampler keeps going instead of truncating
    assert _kernels.draw_log_size(cdf[:3], 0.3, lam, cdf[5]) == 7


def test_run_guards(driven):
    with pytest.raises(DomainError):
        gillespie_run(1, driven, 2, 10.0, 0, burn_in=10.0)
    with pytest.raises(ConfigurationError):
        gillespie_run(1, driven, 0, 10.0, 0)
    with pytest.raises(ConfigurationError):
        gillespie_run(1, driven, 2, 10.0, 0, initial=(1, 2, 3))


def test_determinism(driven):
    a = gillespie_run(1, driven, 3, 2000.0, seed=42, replicas=3)
    b = gillespie_run(1, driven, 3, 2000.0, seed=42, replicas=3)
    c = gillespie_run(1, driven, 3, 2000.0, seed=43, replicas=3)
    assert a.identical(b)
    assert not a.identical(c)


def test_merge_is_associative(driven):
    parts = [gillespie_run(1, driven, 2, 500.0, seed=s) for s in range(3)]
    left = (parts[0] + parts[1]) + parts[2]
    right = parts[0] + (parts[1] + parts[2])
    assert np.allclose(left.occ_time, right.occ_time, rtol=1e-15, atol=0)
    assert np.array_equal(left.batch_occ, right.batch_occ)
    assert left.events == right.events == sum(p.events for p in parts)
    assert left.replicas == 3


def test_time_weighting(driven):
    s = gillespie_run(1, driven, 2, 1000.0, seed=1)
    assert s.cfg_time.sum() == pytest.approx(s.elapsed, rel=1e-12)
    assert s.batch_occ.sum(axis=0) == pytest.approx(s.occ_time, rel=1e-12)
    assert s.summary()["burn_in_time"] == pytest.approx(100.0)


def test_equilibrium_means():
    p = BoundaryParams("3/10", "3/10")
    s = gillespie_run(1, p, 2, 6e5, seed=7)
    assert s.events >= 1_000_000
    z = (s.site_means() - 3 / 7) / s.site_stderr()
    assert np.all(np.abs(z) < 3)


def test_equilibrium_marginal_is_negative_binomial():
    b = 0.3
    p = BoundaryParams(b, b)
    s = gillespie_run(2, p, 2, 2e5, seed=3, radix=12)
    n = s.snap_hist.sum()
    marg = np.zeros(12)
    for idx, c in enumerate(s.snap_hist[:-1]):
        marg[s.config_of(idx)[0]] += c
    exp = n * np.array([(k + 1) * b**k * (1 - b) ** 2 for k in range(12)])
    keep = exp >= 25
    obs = np.append(marg[keep], n - marg[keep].sum())
    e = np.append(exp[keep], n - exp[keep].sum())
    from scipy import stats as sps

    assert sps.chisquare(obs, e).pvalue >= 1e-3


def test_driven_means_and_report(driven):
    s = gillespie_run(1, driven, 3, 2e5, seed=11, replicas=2)
    mu = mu_table(1, driven, 3, 20)
    rep = empirical_vs_exact_report(s, mu)
    assert rep["schema"] == REPORT_SCHEMA
    assert rep["pass"], rep["site_z"]
    assert rep["cells"] >= 10
    assert all(abs(c["z"]) < 5 for c in rep["configs"])
    json.loads(report_json(rep))


def test_report_against_sampler(driven):
    s = gillespie_run(1, driven, 2, 2e5, seed=5)
    draws = sample_configs(1, driven, 2, 100000, np.random.default_rng(1))
    rep = empirical_vs_exact_report(s, draws)
    assert rep["reference"] == "sampler"
    assert rep["pass"], (rep["p_value"], rep["site_z"])


def test_report_flags_wrong_reference(driven):
    s = gillespie_run(1, driven, 3, 5e4, seed=2)
    rep = empirical_vs_exact_report(s, mu_table(1, driven.swapped(), 3, 20))
    assert not rep["pass"]
    assert not rep["sites_pass"]


def test_report_underpowered(driven):
    s = gillespie_run(1, driven, 2, 50.0, seed=2)
    rep = empirical_vs_exact_report(s, mu_table(1, driven, 2, 10))
    assert rep["warnings"] and not rep["pass"]


def test_insertion_sizes_are_logarithmic(driven):
    s = gillespie_run(1, driven, 2, 2e5, seed=9)
    for side in ("L", "R"):
        chi2, dof, p = log_size_gof(s, driven, side)
        assert dof >= 2 and p >= 1e-3


def test_fallback_runs_same_trajectory(driven):
    code = (
        "from harmonic_process.simulate import gillespie_run;"
        "from harmonic_process.steady_closed import BoundaryParams;"
        "s = gillespie_run(1, BoundaryParams('2/5','1/5'), 2, 200.0, seed=4);"
        "print(s.events, repr(s.occ_time.tolist()))"
    )
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, HARMONIC_DISABLE_NUMBA=flag)
        out[flag] = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    assert out["0"] == out["1"]
