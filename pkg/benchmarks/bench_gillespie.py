"""Events per second of the Gillespie loop, numba vs interpreted.

Each backend runs in a fresh interpreter because the choice is made at
import time through HARMONIC_DISABLE_NUMBA.

    python3 benchmarks/bench_gillespie.py [--t-max 2e4] [--sites 3]
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
from harmonic_process.simulate import gillespie_run
from harmonic_process.steady_closed import BoundaryParams
t_max, N = float(sys.argv[1]), int(sys.argv[2])
p = BoundaryParams("2/5", "1/5")
gillespie_run(1, p, N, 10.0, seed=0)  # warm-up / compile
t = time.perf_counter()
s = gillespie_run(1, p, N, t_max, seed=1)
dt = time.perf_counter() - t
print(json.dumps({"events": s.events, "seconds": dt, "means": s.site_means().tolist()}))
"""


def run(disable, t_max, sites):
    env = dict(os.environ)
    env["HARMONIC_DISABLE_NUMBA"] = "1" if disable else "0"
    out = subprocess.run(
        [sys.executable, "-c", CHILD, str(t_max), str(sites)], env=env, check=True, capture_output=True, text=True
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--t-max", type=float, default=2e4)
    ap.add_argument("--sites", type=int, default=3)
    a = ap.parse_args()
    fast = run(False, a.t_max, a.sites)
    slow = run(True, a.t_max, a.sites)
    for name, r in (("numba", fast), ("python", slow)):
        print(f"{name:>7}: {r['events']:>9d} events in {r['seconds']:8.3f} s  ({r['events'] / r['seconds']:,.0f} ev/s)")
    # same seed, same uniforms: both backends must walk the same trajectory
    same = fast["events"] == slow["events"] and fast["means"] == slow["means"]
    print(f"speedup: {slow['seconds'] / fast['seconds']:.1f}x   identical trajectories: {same}")


if __name__ == "__main__":
    main()
