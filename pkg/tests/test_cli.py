import csv
import io
import json
import os
import subprocess
import sys

import pytest

from harmonic_process.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, build_parser, main, resolve_config


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_default_grid(capsys):
    code, out, _ = run(["verify"], capsys)
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["schema"].startswith("harmonic-process/verify")
    assert rep["grid"]["two_s_max"] == 3 and rep["grid"]["N_max"] == 3 and rep["grid"]["occ_max"] == 4


def test_verify_corrupted_rate(capsys):
    code, _, err = run(["verify", "--corrupt-rate", "--two-s", "2", "--sites", "2", "--cap", "3"], capsys)
    assert code == EXIT_FAIL
    assert "FAILED: stochasticity" in err


def test_verify_csv(capsys):
    code, out, _ = run(["verify", "--two-s", "1", "--sites", "1", "--cap", "2", "--format", "csv"], capsys)
    assert code == EXIT_OK
    rows = list(csv.reader(line for line in out.splitlines() if not line.startswith("#")))
    assert rows[0] == ["check", "params", "residual", "pass"]


def test_steady_csv_example(capsys, tmp_path):
    path = tmp_path / "steady.csv"
    args = ["steady", "--two-s", "1", "--sites", "2", "--beta-left", "1/2", "--beta-right", "1/3", "--cap", "3",
            "--format", "csv", "--out", str(path)]
    code, _, _ = run(args, capsys)
    assert code == EXIT_OK
    text = path.read_text()
    rows = list(csv.DictReader(line for line in text.splitlines() if not line.startswith("#")))
    by = {(r["m_1"], r["m_2"]): r for r in rows}
    assert by[("1", "0")]["nu"] == "1/3"
    assert by[("0", "0")]["nu"] == "1"
    mu_sum = sum(float(r["mu"]) for r in rows)
    assert mu_sum <= 1.0
    assert float(rows[-1]["deficit"]) == pytest.approx(1.0 - mu_sum, abs=1e-12)
    assert "# Z_N_inverse=8" in text


def test_steady_json(capsys):
    code, out, _ = run(["steady", "--sites", "1", "--cap", "4"], capsys)
    d = json.loads(out)
    assert code == EXIT_OK and d["schema"] == "harmonic-process/steady/1"
    assert d["rows"][0]["nu"] == "1" and len(d["profile"]) == 1


def test_profile(capsys):
    code, out, _ = run(["profile", "--sites", "3", "--cap", "20"], capsys)
    d = json.loads(out)
    assert code == EXIT_OK and d["pass"]
    assert d["sites"][0]["mean"] == pytest.approx(9 / 16, abs=1e-6)


def test_cross_check(capsys):
    code, out, _ = run(["cross-check", "--sites", "1", "--cap", "2", "--b-max", "12"], capsys)
    d = json.loads(out)
    assert code == EXIT_OK and d["pass"]
    assert all(r["nu_equal"] for r in d["rows"])


def test_simulate_equilibrium_and_reproducible(capsys, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        path = tmp_path / name
        code, _, _ = run(["simulate", "--beta-left", "3/10", "--beta-right", "3/10", "--sites", "2",
                          "--t-max", "1e5", "--seed", "5", "--out", str(path)], capsys)
        assert code == EXIT_OK
        outs.append(path.read_text())
    assert outs[0] == outs[1]
    d = json.loads(outs[0])
    assert d["pass"] and d["exact_comparison"]["pass"] and d["sampler_comparison"]["pass"]


def test_simulate_replicas_agree_with_single_run(capsys):
    code, out, _ = run(["simulate", "--sites", "2", "--t-max", "1e5", "--seed", "1", "--replicas", "4"], capsys)
    many = json.loads(out)["summary"]
    code1, out1, _ = run(["simulate", "--sites", "2", "--t-max", "4e5", "--seed", "2"], capsys)
    one = json.loads(out1)["summary"]
    assert code == code1 == EXIT_OK
    for a, sa, b, sb in zip(many["site_means"], many["site_stderr"], one["site_means"], one["site_stderr"]):
        assert abs(a - b) < 3 * (sa**2 + sb**2) ** 0.5


@pytest.mark.parametrize(
    "args",
    [
        ["steady", "--beta-left", "3/2"],
        ["steady", "--beta-left", "abc"],
        ["steady", "--two-s", "0"],
        ["steady", "--sites", "0"],
        ["bogus"],
        ["steady", "--format", "xml"],
        ["simulate", "--t-max", "-1"],
    ],
)
def test_usage_errors(args, capsys):
    code, _, _ = run(args, capsys)
    assert code == EXIT_USAGE


def test_env_defaults_and_flag_precedence():
    p = build_parser()
    env = {"HARMONIC_SITES": "4", "HARMONIC_BETA_LEFT": "1/3", "HARMONIC_SEED": "9"}
    cfg = resolve_config(p.parse_args(["steady"]), environ=env)
    assert cfg.N == 4 and str(cfg.beta_L) == "1/3" and cfg.seed == 9
    cfg = resolve_config(p.parse_args(["steady", "--sites", "2"]), environ=env)
    assert cfg.N == 2


def test_console_script_exit_code(tmp_path):
    env = dict(os.environ, HARMONIC_BETA_RIGHT="7/5")
    r = subprocess.run([sys.executable, "-m", "harmonic_process.cli", "steady"], env=env, capture_output=True, text=True)
    assert r.returncode == EXIT_USAGE
    assert "beta_R" in r.stderr
