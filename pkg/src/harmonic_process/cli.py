"""Command-line entry point: ``harmonic-process <command> [flags]``.

Exit codes: 0 all checks pass, 1 a verification or comparison failed,
2 usage or configuration error.  Every flag may also be given through an
environment variable ``HARMONIC_<FLAG>`` (``--beta-left`` reads
``HARMONIC_BETA_LEFT``); an explicit flag always wins.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    AccuracyError,
    ConfigurationError,
    ConvergenceError,
    DegenerateEquilibriumError,
    DomainError,
    TruncationError,
)
from .exactnum import to_rat

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
COMMANDS = ("verify", "steady", "simulate", "profile", "cross-check")

# flag -> (type, fallback default)
FLAGS = {
    "two-s": (int, None),
    "sites": (int, None),
    "beta-left": (str, "2/5"),
    "beta-right": (str, "1/5"),
    "cap": (int, None),
    "b-max": (int, 16),
    "series-order": (int, 160),
    "tol": (float, 1e-10),
    "seed": (int, 0),
    "t-max": (float, 1e5),
    "replicas": (int, 1),
    "out": (str, None),
    "format": (str, "json"),
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    two_s: int
    N: int
    beta_L: Fraction
    beta_R: Fraction
    cap: int
    b_max: int
    series_order: int
    tol: float
    seed: int
    t_max: float
    replicas: int
    out: str
    format: str
    corrupt_rate: bool = False

    @property
    def params(self):
        from .steady_closed import BoundaryParams

        return BoundaryParams(self.beta_L, self.beta_R)


def _env_name(flag):
    return "HARMONIC_" + flag.upper().replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    for flag, (typ, _) in FLAGS.items():
        kw = {"type": typ, "default": None, "help": f"(env {_env_name(flag)})"}
        if flag == "format":
            kw["choices"] = ("json", "csv")
        common.add_argument(f"--{flag}", **kw)
    common.add_argument("--corrupt-rate", action="store_true", help=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="harmonic-process", description="Steady state of the open harmonic process.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "verify": "exact identity and stationarity suite",
        "steady": "nu (exact) and mu tables up to --cap",
        "simulate": "Gillespie run compared with the exact steady state",
        "profile": "site means against the linear profile",
        "cross-check": "closed form vs integral vs matrix product, exact and numeric",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


# per-command fallbacks for flags whose meaning depends on the command
_COMMAND_DEFAULTS = {
    "verify": {"two-s": 3, "sites": 3, "cap": 4, "b-max": 12},
    "steady": {"two-s": 1, "sites": 2, "cap": 8},
    "simulate": {"two-s": 1, "sites": 2, "cap": 20},
    "profile": {"two-s": 1, "sites": 3, "cap": 20},
    "cross-check": {"two-s": 1, "sites": 2, "cap": 3},
}


def resolve_config(ns, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    vals = {}
    for flag, (typ, fallback) in FLAGS.items():
        attr = flag.replace("-", "_")
        v = getattr(ns, attr)
        if v is None and _env_name(flag) in environ:
            raw = environ[_env_name(flag)]
            try:
                v = typ(raw)
            except ValueError:
                raise UsageError(f"{_env_name(flag)}={raw!r} is not a valid {typ.__name__}") from None
        if v is None:
            v = _COMMAND_DEFAULTS[ns.command].get(flag, fallback)
        vals[attr] = v
    try:
        bl, br = to_rat(vals["beta_left"]), to_rat(vals["beta_right"])
    except (ValueError, ZeroDivisionError):
        raise UsageError("betas must be fractions such as 2/5") from None
    cfg = RunConfig(
        command=ns.command,
        two_s=vals["two_s"],
        N=vals["sites"],
        beta_L=bl,
        beta_R=br,
        cap=vals["cap"],
        b_max=vals["b_max"],
        series_order=vals["series_order"],
        tol=vals["tol"],
        seed=vals["seed"],
        t_max=vals["t_max"],
        replicas=vals["replicas"],
        out=vals["out"],
        format=vals["format"],
        corrupt_rate=ns.corrupt_rate,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    from .exactnum import check_two_s

    try:
        check_two_s(cfg.two_s)
        cfg.params
    except (DomainError, ConfigurationError) as exc:
        raise UsageError(str(exc)) from None
    if cfg.N < 1:
        raise UsageError("--sites must be at least 1")
    if cfg.cap < 0 or cfg.b_max < 0 or cfg.series_order < 0:
        raise UsageError("--cap, --b-max and --series-order must be nonnegative")
    if cfg.tol <= 0 or cfg.t_max <= 0 or cfg.replicas < 1:
        raise UsageError("--tol, --t-max and --replicas must be positive")
    if cfg.format not in ("json", "csv"):
        raise UsageError("--format must be json or csv")


def _emit(cfg: RunConfig, text: str):
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _csv(header, rows, comments=()):
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _dump(obj):
    return json.dumps(obj, indent=2, default=str) + "\n"


def _config_dict(cfg):
    d = asdict(cfg)
    d["beta_L"], d["beta_R"] = str(cfg.beta_L), str(cfg.beta_R)
    # the payload must not depend on where it is written
    d.pop("corrupt_rate")
    d.pop("out")
    return d


# -- commands -------------------------------------------------------------------


def cmd_verify(cfg: RunConfig) -> int:
    from .exactnum import phi_rate
    from .steady_closed import BoundaryParams
    from .verify import VerifyGrid, corrupted_phi, run_suite

    params = (cfg.params,)
    if cfg.params.delta != 0:
        params += (BoundaryParams(cfg.beta_R, cfg.beta_L),)
    grid = VerifyGrid(two_s_max=cfg.two_s, N_max=cfg.N, occ_max=cfg.cap, aux_max=cfg.b_max, params=params)
    report = run_suite(grid, phi=corrupted_phi() if cfg.corrupt_rate else phi_rate)
    if cfg.format == "csv":
        rows = [[e["check"], json.dumps(e["params"], sort_keys=True), e["residual"], e["pass"]] for e in report["entries"]]
        _emit(cfg, _csv(["check", "params", "residual", "pass"], rows, [f"schema={report['schema']}"]))
    else:
        _emit(cfg, _dump(report))
    for name in report["failed_checks"]:
        print(f"FAILED: {name}", file=sys.stderr)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_steady(cfg: RunConfig) -> int:
    from .steady_closed import enumerate_configs, expected_occupation, linear_profile, mu_table, nu_component, z_norm

    p = cfg.params
    configs = enumerate_configs(cfg.N, cfg.cap)
    nu = {m: nu_component(cfg.two_s, p, m) for m in configs}
    mu = mu_table(cfg.two_s, p, cfg.N, cfg.cap, tail_tol=cfg.tol)
    zn = z_norm(cfg.two_s, p, cfg.N) if p.delta != 0 else None
    prof = []
    for i in range(1, cfg.N + 1):
        mom = expected_occupation(cfg.two_s, p, cfg.N, i, cfg.cap, mu=mu)
        prof.append({"site": i, "mean": mom.mean, "linear": str(linear_profile(cfg.two_s, p, cfg.N, i))})
    mass = float(sum(mu.entries.values()))
    if cfg.format == "csv":
        rows, cum = [], 0.0
        for m in configs:
            cum += mu.entries[m]
            rows.append(list(m) + [str(nu[m]), repr(mu.entries[m]), repr(1.0 - cum)])
        comments = [
            "schema=harmonic-process/steady/1",
            f"two_s={cfg.two_s} N={cfg.N} beta_L={p.beta_L} beta_R={p.beta_R} cap={cfg.cap}",
            f"Z_N_inverse={zn}",
            f"mu_mass={mass!r} mu_entry_tol={mu.tail_bound!r}",
        ] + [f"site {d['site']}: mean={d['mean']!r} linear={d['linear']}" for d in prof]
        header = [f"m_{i}" for i in range(1, cfg.N + 1)] + ["nu", "mu", "deficit"]
        _emit(cfg, _csv(header, rows, comments))
    else:
        _emit(cfg, _dump({
            "schema": "harmonic-process/steady/1",
            "config": _config_dict(cfg),
            "Z_N_inverse": None if zn is None else str(zn),
            "nu_convention": "nu(0,...,0) = 1",
            "mu_mass": mass,
            "mu_deficit": 1.0 - mass,
            "mu_entry_tol": mu.tail_bound,
            "profile": prof,
            "rows": [{"config": list(m), "nu": str(nu[m]), "mu": mu.entries[m]} for m in configs],
        }))
    return EXIT_OK


def cmd_profile(cfg: RunConfig) -> int:
    from .steady_closed import expected_occupation, linear_profile, mu_table

    p = cfg.params
    mu = mu_table(cfg.two_s, p, cfg.N, cfg.cap)
    rows = []
    ok = True
    for i in range(1, cfg.N + 1):
        mom = expected_occupation(cfg.two_s, p, cfg.N, i, cfg.cap, mu=mu)
        lin = float(linear_profile(cfg.two_s, p, cfg.N, i))
        # truncation can only bias the mean by roughly cap * deficit
        allowed = max(cfg.tol, 10 * (cfg.cap + 1) * max(mom.deficit, 0.0) + 1e-9)
        good = abs(mom.mean - lin) <= allowed
        ok &= good
        rows.append({"site": i, "mean": mom.mean, "linear": lin, "deficit": mom.deficit, "pass": good})
    if cfg.format == "csv":
        _emit(cfg, _csv(["site", "mean", "linear", "deficit", "pass"], [list(r.values()) for r in rows]))
    else:
        _emit(cfg, _dump({"schema": "harmonic-process/profile/1", "config": _config_dict(cfg), "sites": rows, "pass": ok}))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(cfg: RunConfig) -> int:
    from .mixture import sample_configs
    from .simulate import empirical_vs_exact_report, gillespie_run
    from .steady_closed import mu_table

    p = cfg.params
    stats = gillespie_run(cfg.two_s, p, cfg.N, cfg.t_max, cfg.seed, replicas=cfg.replicas)
    out = {"schema": "harmonic-process/simulate/1", "config": _config_dict(cfg), "summary": stats.summary()}
    ok = True
    if cfg.N <= 3:
        mu = mu_table(cfg.two_s, p, cfg.N, cfg.cap)
        exact = empirical_vs_exact_report(stats, mu)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(cfg.replicas + 1)[-1])
        draws = sample_configs(cfg.two_s, p, cfg.N, max(10000, int(stats.snap_hist.sum())), rng)
        sampler = empirical_vs_exact_report(stats, draws)
        out["exact_comparison"] = exact
        out["sampler_comparison"] = sampler
        ok = exact["pass"] and sampler["pass"]
    out["pass"] = ok
    if cfg.format == "csv":
        s = stats.summary()
        rows = []
        for i in range(cfg.N):
            ref = out.get("exact_comparison", {})
            rows.append([i + 1, s["site_means"][i], s["site_stderr"][i],
                         ref.get("exact_site_means", [None] * cfg.N)[i], ref.get("site_z", [None] * cfg.N)[i]])
        _emit(cfg, _csv(["site", "mean", "stderr", "exact", "z"], rows,
                        ["schema=harmonic-process/simulate/1", f"events={s['events']} pass={ok}"]))
    else:
        _emit(cfg, _dump(out))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_cross_check(cfg: RunConfig) -> int:
    from .mixture import QuadratureConfig, mu_quadrature, nu_integral_reduce
    from .mpa import contract_steady, contract_steady_x, full_mpa_residuals
    from .steady_closed import enumerate_configs, mu_component, nu_component

    p = cfg.params
    rows = []
    ok = True
    for m in enumerate_configs(cfg.N, cfg.cap):
        a = nu_component(cfg.two_s, p, m)
        exact_ok = a == nu_integral_reduce(cfg.two_s, p, m) == contract_steady(cfg.two_s, p, m)
        mu = mu_component(cfg.two_s, p, m)
        row = {"config": list(m), "nu": str(a), "nu_equal": exact_ok, "mu": mu}
        if cfg.N <= 4:
            q = mu_quadrature(cfg.two_s, p, m, QuadratureConfig(target_tol=max(cfg.tol, 1e-13)))
            row["mu_quadrature"] = q.value
        row["mu_mpa"] = contract_steady_x(cfg.two_s, p, m, b_max=max(cfg.b_max, 40))
        dev = max(abs(row.get("mu_quadrature", mu) - mu), abs(row["mu_mpa"] - mu))
        row["max_float_dev"] = dev
        row["pass"] = exact_ok and dev <= max(cfg.tol, 1e-9) * max(1.0, abs(mu))
        ok &= row["pass"]
        rows.append(row)
    mpa = []
    for m in range(min(cfg.cap, 2) + 1):
        for mp in range(min(cfg.cap, 2) + 1):
            r = full_mpa_residuals(cfg.two_s, p, m, mp, cfg.b_max, series_order=cfg.series_order)
            mpa.append({"m": m, "m_prime": mp, "residual": r, "pass": r < 1e-8})
            ok &= r < 1e-8
    if cfg.format == "csv":
        header = ["config", "nu", "nu_equal", "mu", "mu_quadrature", "mu_mpa", "max_float_dev", "pass"]
        body = [[" ".join(map(str, r["config"]))] + [r.get(k) for k in header[1:]] for r in rows]
        _emit(cfg, _csv(header, body, ["schema=harmonic-process/cross-check/1"]))
    else:
        _emit(cfg, _dump({
            "schema": "harmonic-process/cross-check/1",
            "config": _config_dict(cfg),
            "rows": rows,
            "mpa_residuals": mpa,
            "pass": ok,
        }))
    return EXIT_OK if ok else EXIT_FAIL


HANDLERS = {
    "verify": cmd_verify,
    "steady": cmd_steady,
    "simulate": cmd_simulate,
    "profile": cmd_profile,
    "cross-check": cmd_cross_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = resolve_config(ns)
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ConfigurationError, DegenerateEquilibriumError, TruncationError,
            ConvergenceError, AccuracyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
