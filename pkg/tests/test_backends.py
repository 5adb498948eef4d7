"""The pure-numpy fallback must reproduce the compiled kernels exactly."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from scenario_dp import _accel

SCRIPT = r"""
import json, sys
import numpy as np
from scenario_dp import (BackendConfig, CustomerSpec, DeliveryCostModel, GiantTour, backend_name,
                         batched_expected_cost, batched_expected_split, minplus_apply_options)
from scenario_dp.diagnostics import run_oracle_checks
from scenario_dp.saa import DistributionSpec, euclidean_instance, generate_scenarios

rng = np.random.default_rng(0)
inst = euclidean_instance(25, 40, seed=2)
sc = generate_scenarios(DistributionSpec.uniform(1, 12, seed=1), 25, 300)
tour = GiantTour.identity(25)
out = {"backend": backend_name()}
for name, i, method in (("hard", inst, "quadratic"), ("linear", inst, "linear"), ("pen", inst.with_beta(3.0), "auto")):
    r = batched_expected_split(i, tour, sc, BackendConfig.multi(2, batch_size=64), method=method)
    out[name] = r.costs.tolist()
    out[name + "_pred"] = r.payloads[7].pred.tolist()
spec = CustomerSpec(6, 2, 1.0, 3.0, 5)
costs = DeliveryCostModel([[4.0, 6.0]] * 5, [[1.0, 0.5]] * 5)
d = generate_scenarios(DistributionSpec.uniform(0, 5, seed=3), 5, 200)
r = batched_expected_cost(spec, costs, d, BackendConfig(batch_size=33))
out["dsirp"] = r.costs.tolist()
out["dsirp_flags"] = [r.payloads[k].deliver_flags.tolist() for k in range(0, 200, 17)]
A = rng.integers(0, 9, (3, 4, 5)).astype(float)
out["mp"] = minplus_apply_options(A, rng.integers(0, 9, 4).astype(float)).values.tolist()
out["oracle"] = len(run_oracle_checks(20, seed=1).mismatches)
json.dump(out, sys.stdout)
"""


def run(flag):
    env = dict(os.environ, SCENARIO_DP_NUMBA=flag)
    proc = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
def test_numpy_fallback_matches_numba():
    fast, slow = run("1"), run("0")
    assert fast.pop("backend") == "numba"
    assert slow.pop("backend") == "numpy"
    assert fast == slow
    assert fast["oracle"] == 0


def test_flag_parsing(monkeypatch):
    for val in ("0", "false", "off", "no"):
        assert not _accel._enabled(val)
    for val in (None, "1", "yes"):
        assert _accel._enabled(val) == _accel.HAVE_NUMBA
