"""Compiled (numba) vs pure-numpy kernel timings.

The backend is fixed at import time, so each setting runs in its own
interpreter.  Usage::

    python benchmarks/bench_backends.py [--m 20000] [--n 100] [--repeats 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from scenario_dp import (BackendConfig, CustomerSpec, DeliveryCostModel, GiantTour, backend_name,
                         batched_expected_cost, batched_expected_split, minplus_apply)
from scenario_dp.saa import DistributionSpec, euclidean_instance, generate_scenarios

m, n, repeats = map(int, sys.argv[1:4])

def best(fn):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)

inst = euclidean_instance(n, n // 2, seed=0)
tour = GiantTour.identity(n)
sc = generate_scenarios(DistributionSpec.uniform(1, 10), n, m)
spec = CustomerSpec(100, 50, 1.0, 3.0, 6)
costs = DeliveryCostModel([20.0, 35.0], [0.5, 0.25])
d = generate_scenarios(DistributionSpec.uniform(0, 40), 6, m // 10)
rng = np.random.default_rng(0)
A = rng.uniform(0, 10, (400, 400))
J = rng.uniform(0, 10, 400)
cfg = BackendConfig()
out = {
    "backend": backend_name(),
    "split_hard": best(lambda: batched_expected_split(inst, tour, sc, cfg, keep_solutions=False, method="quadratic")),
    "split_linear": best(lambda: batched_expected_split(inst, tour, sc, cfg, keep_solutions=False, method="linear")),
    "split_penalized": best(lambda: batched_expected_split(inst.with_beta(5.0), tour, sc, cfg, keep_solutions=False)),
    "inventory": best(lambda: batched_expected_cost(spec, costs, d, cfg)),
    "minplus_400": best(lambda: minplus_apply(A, J)),
}
json.dump(out, sys.stdout)
"""


def run(flag, args):
    env = dict(os.environ, SCENARIO_DP_NUMBA=flag)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(args.m), str(args.n), str(args.repeats)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=20_000, help="split scenarios (inventory uses m/10)")
    ap.add_argument("--n", type=int, default=100, help="customers in the split instance")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    fast, slow = run("1", args), run("0", args)
    if fast.pop("backend") != "numba":
        sys.exit("numba is unavailable; nothing to compare")
    slow.pop("backend")
    print(f"{'kernel':<18}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    for key in fast:
        print(f"{key:<18}{fast[key]:>12.4f}{slow[key]:>12.4f}{slow[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
