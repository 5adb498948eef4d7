"""Randomized oracle comparisons and measured memory peaks."""

from __future__ import annotations

import gc
import tracemalloc
from dataclasses import dataclass, field

import numpy as np

from .dsirp import (
    CustomerSpec,
    DeliveryCostModel,
    HoldingPenaltyModel,
    batched_expected_cost,
    brute_force_schedule,
    dsirp_dims,
    simulate_schedule,
    solve_customer_scenario,
)
from .engine import BackendConfig, memory_footprint
from .split import (
    GiantTour,
    RoutingInstance,
    batched_expected_split,
    brute_force_split,
    split_dims,
    split_scenario_quadratic,
)


def random_split_case(rng: np.random.Generator, n_max: int = 10, penalized: bool = False):
    """Integer-cost instance, random tour and one demand vector."""
    n = int(rng.integers(1, n_max + 1))
    c = rng.integers(0, 20, size=(n + 2, n + 2)).astype(np.float64)
    np.fill_diagonal(c, 0.0)
    Q = int(rng.integers(5, 25))
    beta = float(rng.integers(0, 10)) if penalized else None
    inst = RoutingInstance(c, Q, beta)
    tour = GiantTour(tuple((rng.permutation(n) + 1).tolist()))
    q = rng.integers(0, Q + 3, size=n)
    return inst, tour, q


def random_dsirp_case(rng: np.random.Generator, h_max: int = 10, u_max: int = 8, r_max: int = 3):
    """Integer-cost customer with ``R`` route options and one demand path."""
    H = int(rng.integers(1, h_max + 1))
    U = int(rng.integers(0, u_max + 1))
    R = int(rng.integers(1, r_max + 1))
    spec = CustomerSpec(U, int(rng.integers(0, U + 1)), float(rng.integers(0, 4)), float(rng.integers(2, 6)), H)
    costs = DeliveryCostModel(rng.integers(0, 15, size=(H, R)).astype(float), rng.integers(0, 4, size=(H, R)).astype(float))
    if rng.random() < 0.3:
        holding = HoldingPenaltyModel.tabular(rng.integers(0, 10, size=U + 1).astype(float))
    else:
        holding = HoldingPenaltyModel.standard(spec)
    d = rng.integers(0, max(U, 1) + 2, size=H)
    return spec, costs, holding, d


@dataclass
class OracleSummary:
    comparisons: int = 0
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def run_oracle_checks(trials: int, seed: int = 0) -> OracleSummary:
    """Compare each DP with its enumeration oracle on ``trials`` random cases per family."""
    rng = np.random.default_rng(seed)
    out = OracleSummary()
    for k in range(trials):
        for penalized in (False, True):
            inst, tour, q = random_split_case(rng, penalized=penalized)
            dp = split_scenario_quadratic(inst, tour, q).total
            bf = brute_force_split(inst, tour, q)
            out.comparisons += 1
            if dp != bf:
                out.mismatches.append(f"split trial {k} penalized={penalized}: dp={dp} brute={bf}")
        spec, costs, holding, d = random_dsirp_case(rng)
        res = solve_customer_scenario(spec, costs, d, holding)
        bf = brute_force_schedule(spec, costs, d, holding)
        resim = simulate_schedule(spec, costs, d, res.deliver_flags, res.route_options, holding)
        out.comparisons += 1
        if res.total != bf or resim != res.total:
            out.mismatches.append(f"dsirp trial {k}: dp={res.total} brute={bf} resim={resim}")
    return out


def _peak(fn) -> int:
    gc.collect()
    tracemalloc.start()
    tracemalloc.reset_peak()
    base = tracemalloc.get_traced_memory()[0]
    try:
        result = fn()
        peak = tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()
    del result
    return peak - base


def measure_split_peak(instance: RoutingInstance, scenarios: np.ndarray, config=None) -> tuple[int, int]:
    """(measured, predicted) bytes for a full-retention batched split."""
    m = scenarios.shape[1]
    config = config or BackendConfig(batch_size=max(1, m), memory_budget=1 << 40)
    tour = GiantTour.identity(instance.n)
    batched_expected_split(instance, tour, scenarios[:, :1], config)
    measured = _peak(lambda: batched_expected_split(instance, tour, scenarios, config))
    predicted = memory_footprint(split_dims(instance, m, True, config.batch_size)).total
    return measured, predicted


def measure_dsirp_peak(spec, costs, scenarios: np.ndarray, holding=None, config=None) -> tuple[int, int]:
    """(measured, predicted) bytes for a batched inventory DP."""
    m = scenarios.shape[1]
    config = config or BackendConfig(batch_size=max(1, m), memory_budget=1 << 40)
    batched_expected_cost(spec, costs, scenarios[:, :1], config, holding)
    measured = _peak(lambda: batched_expected_cost(spec, costs, scenarios, config, holding))
    predicted = memory_footprint(dsirp_dims(spec, costs, m, config.batch_size)).total
    return measured, predicted
