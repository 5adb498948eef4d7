"""Deterministic scenario-batched execution.

Scenarios are cut into batches (sized against a byte budget) and each batch
into contiguous index ranges, one per worker thread.  Kernels release the GIL,
so ranges run truly in parallel; every range writes into its own slice of the
preallocated outputs, which makes results independent of thread count, batch
size and completion order.  Aggregates are a single left-to-right sum over
the finished cost vector.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from ._accel import USE_NUMBA, kernel

log = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 1 << 30
MAX_FOOTPRINT_BYTES = (1 << 63) - 1
THREADS_ENV = "SCENARIO_DP_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        return max(1, int(raw))
    return 1


@dataclass(frozen=True)
class BackendConfig:
    mode: str = "single"
    threads: int = 1
    batch_size: int = 1 << 20
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if self.mode not in ("single", "multi"):
            raise ValueError(f"mode must be 'single' or 'multi', got {self.mode!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.memory_budget < 0:
            raise ValueError("memory_budget must be >= 0")

    @classmethod
    def multi(cls, threads: int, **kw) -> "BackendConfig":
        return cls(mode="multi", threads=threads, **kw)

    @property
    def workers(self) -> int:
        return 1 if self.mode == "single" else self.threads


@dataclass
class BatchResultSet:
    """Per-scenario costs (input order) plus optional decision payloads.

    ``payloads`` is any indexable sequence; instantiations pass lazy views so
    a million-scenario run does not build a million Python objects.
    """

    costs: np.ndarray
    payloads: Sequence[Any] | None = None
    errors: dict[int, str] = field(default_factory=dict)
    timings: list[dict] = field(default_factory=list)

    def __len__(self):
        return self.costs.shape[0]

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.costs)

    @property
    def infeasible_count(self) -> int:
        bad = ~self.finite_mask
        for idx in self.errors:
            bad[idx] = False
        return int(bad.sum())

    @property
    def mean(self) -> float:
        """Mean over finite costs, summed sequentially in scenario order."""
        return sequential_mean(self.costs)

    @property
    def mean_all(self) -> float:
        """Plain mean over all scenarios (+inf if any scenario is infeasible)."""
        n = self.costs.shape[0]
        if n == 0:
            return math.nan
        return sequential_sum(self.costs) / n

    def per_scenario(self, idx: int) -> tuple[float, Any]:
        payload = None if self.payloads is None else self.payloads[idx]
        return float(self.costs[idx]), payload


def _sequential_sum_py(x):
    total = 0.0
    for v in x.tolist():
        total += v
    return total


@kernel(fallback=_sequential_sum_py)
def sequential_sum(x):
    total = 0.0
    for i in range(x.shape[0]):
        total += x[i]
    return total


def _finite_sum_py(x):
    total = 0.0
    count = 0
    for v in x.tolist():
        if v < math.inf:
            total += v
            count += 1
    return total, count


@kernel(fallback=_finite_sum_py)
def _finite_sum(x):
    total = 0.0
    count = 0
    for i in range(x.shape[0]):
        v = x[i]
        if v < np.inf:
            total += v
            count += 1
    return total, count


def sequential_mean(costs: np.ndarray) -> float:
    total, count = _finite_sum(np.ascontiguousarray(costs, dtype=np.float64))
    return total / count if count else math.nan


def adjust_batch_size(requested: int, budget: int, per_scenario_bytes: int) -> int:
    if per_scenario_bytes <= 0:
        raise ValueError("per_scenario_bytes must be positive")
    if budget < per_scenario_bytes:
        log.warning(
            "memory budget %d B below one scenario (%d B); running one scenario per batch",
            budget,
            per_scenario_bytes,
        )
        return 1
    return max(1, min(int(requested), budget // per_scenario_bytes))


def _ranges(start: int, stop: int, parts: int) -> list[tuple[int, int]]:
    size = stop - start
    parts = max(1, min(parts, size))
    base, extra = divmod(size, parts)
    out, lo = [], start
    for k in range(parts):
        hi = lo + base + (1 if k < extra else 0)
        out.append((lo, hi))
        lo = hi
    return out


def run_batched(
    evaluator: Callable,
    scenarios: np.ndarray,
    config: BackendConfig | None = None,
    *,
    vectorized: bool = False,
    per_scenario_bytes: int | None = None,
    payloads: Sequence[Any] | None = None,
) -> BatchResultSet:
    """Evaluate every scenario column of ``scenarios`` (shape ``rows x m``).

    Per-scenario mode: ``evaluator(column)`` returns a cost or ``(cost, payload)``.

    Vectorized mode: ``evaluator(block, start)`` gets the columns
    ``start:start+b`` and returns their ``b`` costs; it may write decisions
    into caller-owned arrays, in which case the caller passes a matching
    ``payloads`` view.  A failing block is retried scenario by scenario so an
    error stays confined to the offending column.
    """
    config = config or BackendConfig()
    scenarios = np.asarray(scenarios)
    if scenarios.ndim != 2:
        raise ValueError("scenarios must be a rows x m matrix")
    m = scenarios.shape[1]
    costs = np.full(m, np.inf)
    errors: dict[int, str] = {}
    own_payloads: list[Any] | None = None if vectorized else [None] * m
    timings: list[dict] = []

    batch = config.batch_size
    if per_scenario_bytes is not None:
        batch = adjust_batch_size(batch, config.memory_budget, per_scenario_bytes)

    def one(idx: int):
        try:
            if vectorized:
                res = evaluator(scenarios[:, idx : idx + 1], idx)
                costs[idx] = np.asarray(res, dtype=np.float64).reshape(-1)[0]
            else:
                res = evaluator(scenarios[:, idx])
                if isinstance(res, tuple):
                    costs[idx], own_payloads[idx] = float(res[0]), res[1]
                else:
                    costs[idx] = float(res)
        except Exception as exc:  # isolate per scenario
            costs[idx] = np.inf
            errors[idx] = f"{type(exc).__name__}: {exc}"

    def work(lo: int, hi: int):
        if not vectorized:
            for idx in range(lo, hi):
                one(idx)
            return
        try:
            out = np.asarray(evaluator(scenarios[:, lo:hi], lo), dtype=np.float64)
            if out.shape != (hi - lo,):
                raise ValueError(f"evaluator returned shape {out.shape}, expected {(hi - lo,)}")
            costs[lo:hi] = out
        except Exception:
            for idx in range(lo, hi):
                one(idx)

    workers = config.workers
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        start = 0
        batch_index = 0
        while start < m:
            stop = min(m, start + batch)
            t0 = time.perf_counter()
            parts = _ranges(start, stop, workers)
            if pool is None or len(parts) == 1:
                for lo, hi in parts:
                    work(lo, hi)
            else:
                for fut in [pool.submit(work, lo, hi) for lo, hi in parts]:
                    fut.result()
            timings.append(
                {
                    "batch_index": batch_index,
                    "size": stop - start,
                    "wall_ms": (time.perf_counter() - t0) * 1e3,
                    "peak_bytes_estimate": (stop - start) * (per_scenario_bytes or 0),
                }
            )
            start = stop
            batch_index += 1
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    return BatchResultSet(
        costs=costs,
        payloads=payloads if vectorized else own_payloads,
        errors=dict(sorted(errors.items())),
        timings=timings,
    )


TIMING_FIELDS = ("batch_index", "size", "wall_ms", "peak_bytes_estimate")


def write_timing_csv(records: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TIMING_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow({k: rec[k] for k in TIMING_FIELDS})


# ---------------------------------------------------------------------------
# memory model

# Byte constants mirror the arrays the instantiations actually allocate:
#   split:  V float64[n+1], pred int32[n+1], routes int32, cost float64 retained per
#           scenario.  The compiled kernel keeps prefixes in O(n) per-worker buffers;
#           the numpy fallback materializes prefix/value/pred planes plus one
#           scenarios x predecessors candidate plane per batch.
#   dsirp:  total float64 + (flags int8, option int8, qty int32, inventory int32)[H]
#           retained; choice table (int16 pred, int16 action)[H, U+1] and two float64
#           frontiers[U+1] as per-batch scratch.


@dataclass(frozen=True)
class ProblemDims:
    kind: str
    scenarios: int
    n: int = 0
    capacity: int = 0
    horizon: int = 0
    options: int = 1
    keep_solutions: bool = True
    batch_size: int | None = None

    def __post_init__(self):
        if self.kind not in ("split", "dsirp"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.scenarios < 0:
            raise ValueError("scenarios must be >= 0")
        if self.kind == "split" and self.n < 1:
            raise ValueError("split dims need n >= 1")
        if self.kind == "dsirp" and (self.capacity < 0 or self.horizon < 1):
            raise ValueError("dsirp dims need capacity >= 0 and horizon >= 1")


@dataclass(frozen=True)
class Footprint:
    total: int
    fixed: int
    retained_per_scenario: int
    scratch_per_scenario: int
    saturated: bool = False

    @property
    def per_scenario(self) -> int:
        return self.retained_per_scenario + self.scratch_per_scenario

    def __int__(self):
        return self.total


def _split_bytes(n: int, keep: bool, compiled: bool) -> tuple[int, int, int]:
    fixed = 8 * (n + 2) * (n + 2) + 6 * 8 * (n + 1)
    retained = 8 + (4 * (n + 1) + 8 * (n + 1) + 4 if keep else 0)
    scratch = 0 if compiled else (8 + 8 + 4) * (n + 1) + (8 + 8 + 1) * n + 8
    return fixed, retained, scratch


def _dsirp_bytes(U: int, H: int, R: int) -> tuple[int, int, int]:
    states = U + 1
    fixed = 8 * H * R * 2 + 8 * H * states + 8 * states
    retained = 8 + H * (1 + 1 + 4 + 4)
    scratch = 4 * H * states + 2 * 8 * states
    return fixed, retained, scratch


def memory_footprint(dims: ProblemDims) -> Footprint:
    """Affine byte model ``fixed + m * retained + min(batch, m) * scratch``."""
    if dims.kind == "split":
        fixed, retained, scratch = _split_bytes(dims.n, dims.keep_solutions, USE_NUMBA)
    else:
        fixed, retained, scratch = _dsirp_bytes(dims.capacity, dims.horizon, dims.options)
    m = dims.scenarios
    live = m if dims.batch_size is None else min(dims.batch_size, m)
    total = fixed + m * retained + live * scratch
    if total > MAX_FOOTPRINT_BYTES:
        log.error("memory footprint overflow: %d > %d", total, MAX_FOOTPRINT_BYTES)
        return Footprint(MAX_FOOTPRINT_BYTES, fixed, retained, scratch, saturated=True)
    return Footprint(total, fixed, retained, scratch)
