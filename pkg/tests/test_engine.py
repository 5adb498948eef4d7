import logging

import numpy as np
import pytest

from scenario_dp import GiantTour, batched_expected_split
from scenario_dp.engine import (
    BackendConfig,
    ProblemDims,
    adjust_batch_size,
    memory_footprint,
    run_batched,
    sequential_mean,
    write_timing_csv,
)
from scenario_dp.saa import DistributionSpec, euclidean_instance, generate_scenarios


@pytest.mark.parametrize(
    "req,budget,per,expected", [(10000, 10**9, 10**5, 10000), (10000, 10**7, 10**5, 100), (5, 10, 100, 1)]
)
def test_adjust_batch_size(req, budget, per, expected):
    assert adjust_batch_size(req, budget, per) == expected


def test_adjust_batch_size_warns(caplog):
    with caplog.at_level(logging.WARNING):
        adjust_batch_size(5, 10, 100)
    assert "below one scenario" in caplog.text


def test_adjust_batch_size_rejects_zero():
    with pytest.raises(ValueError):
        adjust_batch_size(5, 10, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(mode="gpu")
    with pytest.raises(ValueError):
        BackendConfig(threads=0)
    with pytest.raises(ValueError):
        BackendConfig(batch_size=0)
    assert BackendConfig.multi(4).workers == 4
    assert BackendConfig(threads=4).workers == 1


def test_empty_batch():
    res = run_batched(lambda col: 0.0, np.zeros((3, 0)))
    assert len(res) == 0 and np.isnan(res.mean)


def test_order_preserved():
    sc = np.array([[5, 1, 9]])
    for cfg in (BackendConfig(), BackendConfig.multi(3, batch_size=1)):
        res = run_batched(lambda col: float(col[0]), sc, cfg)
        assert res.costs.tolist() == [5.0, 1.0, 9.0]


def test_payloads_and_per_scenario():
    res = run_batched(lambda col: (float(col[0]), f"p{col[0]}"), np.array([[1, 2]]))
    assert res.per_scenario(1) == (2.0, "p2")


def test_error_isolation():
    def ev(col):
        if col[0] == 3:
            raise RuntimeError("boom")
        return float(col[0])

    sc = np.arange(6).reshape(1, -1)
    res = run_batched(ev, sc, BackendConfig.multi(2, batch_size=4))
    assert res.errors.keys() == {3}
    assert "boom" in res.errors[3]
    assert res.costs[[0, 1, 2, 4, 5]].tolist() == [0, 1, 2, 4, 5]
    assert res.infeasible_count == 0


def test_vectorized_error_falls_back_per_scenario():
    def ev(block, start):
        if (block[0] == 3).any():
            raise RuntimeError("bad column")
        return block[0].astype(float)

    res = run_batched(ev, np.arange(8).reshape(1, -1), BackendConfig(batch_size=4), vectorized=True)
    assert list(res.errors) == [3]
    assert res.costs[[0, 1, 2, 4, 5, 6, 7]].tolist() == [0, 1, 2, 4, 5, 6, 7]


def test_mean_skips_infeasible():
    res = run_batched(lambda col: float(col[0]), np.array([[1, np.inf, 3]]))
    assert res.mean == 2.0
    assert res.infeasible_count == 1
    assert res.mean_all == np.inf


def test_sequential_mean_order():
    x = np.array([1e16, 1.0, -1e16, 1.0])
    assert sequential_mean(np.abs(x)) == ((1e16 + 1.0) + 1e16 + 1.0) / 4


def test_budget_drives_batches():
    res = run_batched(
        lambda col: 0.0, np.zeros((1, 10)), BackendConfig(memory_budget=300), per_scenario_bytes=100
    )
    assert [t["size"] for t in res.timings] == [3, 3, 3, 1]


def test_timing_csv(tmp_path):
    res = run_batched(lambda col: 0.0, np.zeros((1, 5)), BackendConfig(batch_size=2))
    path = tmp_path / "t.csv"
    write_timing_csv(res.timings, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "batch_index,size,wall_ms,peak_bytes_estimate"
    assert len(lines) == 4


def test_cross_mode_bitwise():
    inst = euclidean_instance(12, 30, seed=4)
    sc = generate_scenarios(DistributionSpec.uniform(1, 10, seed=1), 12, 1000)
    tour = GiantTour.identity(12)
    ref = batched_expected_split(inst, tour, sc, BackendConfig())
    for threads in (2, 8):
        for bs in (1, 37, 1000):
            other = batched_expected_split(inst, tour, sc, BackendConfig.multi(threads, batch_size=bs))
            assert other.costs.tobytes() == ref.costs.tobytes()
            assert other.mean == ref.mean


@pytest.mark.parametrize(
    "dims",
    [ProblemDims("split", 1000, n=50), ProblemDims("dsirp", 1000, capacity=100, horizon=6, options=2)],
)
def test_footprint_affine(dims):
    from dataclasses import replace

    f0 = memory_footprint(replace(dims, scenarios=0))
    f1 = memory_footprint(dims)
    f2 = memory_footprint(replace(dims, scenarios=2 * dims.scenarios))
    assert f0.total == f0.fixed
    assert f2.total - f0.total == 2 * (f1.total - f0.total)


def test_footprint_saturates(caplog):
    with caplog.at_level(logging.ERROR):
        f = memory_footprint(ProblemDims("dsirp", 10**15, capacity=10**6, horizon=1000))
    assert f.saturated and f.total == 2**63 - 1
    assert "overflow" in caplog.text


def test_dims_validation():
    with pytest.raises(ValueError):
        ProblemDims("tsp", 1)
    with pytest.raises(ValueError):
        ProblemDims("split", 1, n=0)
