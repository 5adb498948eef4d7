import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenario_dp import GiantTour, RoutingInstance, batched_expected_split
from scenario_dp.saa import (
    REPORT_FIELDS,
    DistributionSpec,
    ExperimentReport,
    SearchBudget,
    euclidean_instance,
    generate_scenarios,
    improve_first_stage,
    log_log_slope,
    out_of_sample_eval,
    run_bias_experiment,
    run_convergence_experiment,
    run_quality_experiment,
    run_time_budget_experiment,
    scaling_benchmark,
)
from scenario_dp.engine import BackendConfig


def test_empty_generation():
    assert generate_scenarios(DistributionSpec.uniform(1, 10), 3, 0).shape == (3, 0)


def test_same_seed_same_batch():
    d = DistributionSpec.normal(5, 2, 0, 10, seed=4)
    a = generate_scenarios(d, 4, 100)
    np.testing.assert_array_equal(a, generate_scenarios(d, 4, 100))
    assert not np.array_equal(a, generate_scenarios(d.with_seed(5), 4, 100))


def test_uniform_mean():
    x = generate_scenarios(DistributionSpec.uniform(1, 10, seed=0), 1, 100_000)
    assert abs(x.mean() - 5.5) < 0.05
    assert x.min() == 1 and x.max() == 10


def test_normal_truncation():
    x = generate_scenarios(DistributionSpec.normal(3, 4, 0, 6, seed=2), 5, 20_000)
    assert x.min() == 0 and x.max() == 6
    assert x.dtype == np.uint32


@given(st.integers(0, 9000), st.integers(0, 3000), st.integers(0, 2**31))
def test_prefix_stability(m, extra, seed):
    d = DistributionSpec.uniform(0, 50, seed=seed)
    small = generate_scenarios(d, 3, m)
    big = generate_scenarios(d, 3, m + extra)
    np.testing.assert_array_equal(small, big[:, :m])


def test_shape_pair():
    assert generate_scenarios(DistributionSpec.uniform(0, 1), (2, 3), 5).shape == (6, 5)


@pytest.mark.parametrize("text", ["uniform:1", "poisson:3", "normal:1:0:0:5", "uniform:5:1", "uniform:a:b"])
def test_bad_distribution(text):
    with pytest.raises(ValueError):
        DistributionSpec.parse(text)


def test_distribution_describe_round_trip():
    for text in ("uniform:1:10", "normal:5:2.5:0:12"):
        assert DistributionSpec.parse(text).describe() == text


def equal_cost_instance(n):
    c = np.full((n + 2, n + 2), 3.0)
    np.fill_diagonal(c, 0.0)
    c[0, n + 1] = c[n + 1, 0] = 0.0
    return RoutingInstance(c, 100)


def test_symmetric_instance():
    inst = equal_cost_instance(3)
    train = np.ones((3, 10), dtype=np.uint32)
    res = improve_first_stage(inst, train, 50)
    assert res.value == 3 * 4.0


def test_budget_monotone():
    inst = euclidean_instance(7, 15, seed=1)
    train = generate_scenarios(DistributionSpec.uniform(1, 6, seed=1), 7, 50)
    zero = improve_first_stage(inst, train, 0)
    full = improve_first_stage(inst, train, 10_000)
    assert full.value <= zero.value
    bests = [v for _, _, v in full.progress]
    assert all(b <= a for a, b in zip(bests, bests[1:]))
    assert zero.evaluations == 4


def test_search_near_exhaustive():
    n = 6
    inst = euclidean_instance(n, 20, seed=3)
    train = generate_scenarios(DistributionSpec.uniform(1, 10, seed=3), n, 100)
    best = min(
        batched_expected_split(inst, GiantTour(p), train, keep_solutions=False).mean
        for p in itertools.permutations(range(1, n + 1))
    )
    res = improve_first_stage(inst, train, 2000)
    assert res.value <= best * 1.01


def test_search_deterministic():
    inst = euclidean_instance(8, 20, seed=2)
    train = generate_scenarios(DistributionSpec.uniform(1, 10, seed=2), 8, 30)
    a = improve_first_stage(inst, train, 200, seed=9)
    b = improve_first_stage(inst, train, 200, BackendConfig.multi(4, batch_size=7), seed=9)
    assert a.tour == b.tour and a.value == b.value and a.evaluations == b.evaluations


def test_time_budget_search():
    inst = euclidean_instance(10, 25, seed=0)
    train = generate_scenarios(DistributionSpec.uniform(1, 10), 10, 100)
    res = improve_first_stage(inst, train, SearchBudget(seconds=0.3))
    assert res.evaluations > 4
    assert res.best_at(0.0)[0] >= res.best_at(0.3)[0]


def test_out_of_sample_trivial():
    inst = euclidean_instance(6, 20, seed=5)
    train = generate_scenarios(DistributionSpec.uniform(1, 10, seed=5), 6, 200)
    res = improve_first_stage(inst, train, 100)
    mean, se = out_of_sample_eval(inst, res, train)
    assert mean == res.value and se > 0
    one = train[:, 7:8]
    assert out_of_sample_eval(inst, res, one)[0] == batched_expected_split(inst, res.tour, one).costs[0]


def test_split_half_consistency():
    inst = euclidean_instance(6, 20, seed=6)
    ev = generate_scenarios(DistributionSpec.uniform(1, 10, seed=6), 6, 100_000)
    tour = GiantTour.identity(6)
    a, sa = out_of_sample_eval(inst, tour, ev[:, :50_000])
    b, sb = out_of_sample_eval(inst, tour, ev[:, 50_000:])
    assert abs(a - b) <= 3 * math.hypot(sa, sb)


def test_bias_row_contract():
    inst = euclidean_instance(5, 20, seed=0)
    rep = run_bias_experiment(inst, DistributionSpec.uniform(1, 8), [10], 2, eval_size=500, budget=20)
    per_rep = [r for r in rep.rows if r[1] is not None]
    assert len(per_rep) == 2 * 4
    assert {r[2] for r in per_rep} == {"in_sample", "out_of_sample", "gap", "evaluations"}
    with pytest.raises(ValueError):
        run_bias_experiment(inst, DistributionSpec.uniform(1, 8), [10], 1)


def test_report_csv_schema_and_determinism():
    inst = euclidean_instance(5, 20, seed=0)
    dist = DistributionSpec.uniform(1, 8, seed=3)
    a = run_bias_experiment(inst, dist, [10, 50], 2, eval_size=500, budget=20).to_csv()
    b = run_bias_experiment(inst, dist, [10, 50], 2, eval_size=500, budget=20,
                            config=BackendConfig.multi(8, batch_size=37)).to_csv()
    assert a == b
    header = [ln for ln in a.splitlines() if not ln.startswith("#")][0]
    assert header == ",".join(REPORT_FIELDS)
    assert "# dist=uniform:1:8" in a


def test_convergence_identical_scenarios():
    inst = euclidean_instance(5, 20, seed=0)
    rep = run_convergence_experiment(inst, DistributionSpec.uniform(4, 4), [10, 100], 3, budget=10)
    assert rep.values("in_sample_std") == [0.0, 0.0]


def test_convergence_reports_slope():
    inst = euclidean_instance(5, 20, seed=0)
    rep = run_convergence_experiment(inst, DistributionSpec.uniform(1, 10), [10, 100, 1000], 6, budget=10)
    assert len(rep.values("log_std_slope")) == 1


def test_quality_report():
    inst = euclidean_instance(5, 20, seed=0)
    rep = run_quality_experiment(inst, DistributionSpec.uniform(1, 8), [1, 100], 2000, budget=30)
    assert len(rep.values("out_of_sample")) == 2
    assert all(se > 0 for se in rep.values("out_of_sample_se"))


def test_time_budget_experiment():
    inst = euclidean_instance(8, 25, seed=1)
    modes = [("single", BackendConfig()), ("multi:2", BackendConfig.multi(2))]
    rep = run_time_budget_experiment(inst, DistributionSpec.uniform(1, 10), [0.05, 0.2], modes, m=200,
                                     scaling_m=[100, 1000])
    for label, _ in modes:
        best = [r[3] for r in rep.rows if r[1] == label and r[2] == "best_cost"]
        assert best[1] <= best[0]
        assert sum(1 for r in rep.rows if r[1] == label and r[2] == "log_time_slope") == 1
    with pytest.raises(ValueError):
        run_time_budget_experiment(inst, DistributionSpec.uniform(1, 10), [1, 0.5], modes)


def test_scaling_benchmark_points():
    inst = euclidean_instance(10, 25, seed=1)
    pts = scaling_benchmark(inst, DistributionSpec.uniform(1, 10), [100, 1000], repeats=1)
    assert [m for m, _ in pts] == [100, 1000]
    assert all(t > 0 for _, t in pts)


def test_log_log_slope():
    assert log_log_slope([1, 10, 100], [2, 20, 200]) == pytest.approx(1.0)


def test_report_blank_cells():
    r = ExperimentReport("x", "i", 0)
    r.add(None, None, "v", 1)
    assert r.to_csv().splitlines()[-1] == "x,i,,,v,1.0,,0"
