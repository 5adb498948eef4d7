"""Sample average approximation harness for the split instantiation.

Scenario streams are split into fixed-width column blocks, each drawn from
its own ``SeedSequence`` child, so ``generate_scenarios(m)`` is always a
prefix of ``generate_scenarios(m')`` for ``m < m'`` and no two named streams
overlap.  Replications run sequentially; the batch engine parallelizes the
scenario axis inside each evaluation.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import BackendConfig
from .split import GiantTour, RoutingInstance, batched_expected_split

BLOCK = 4096

# named sub-streams (first spawn-key component)
STREAM_SCENARIOS = 0
STREAM_SEARCH = 1
STREAM_EXPERIMENT = 2


@dataclass(frozen=True)
class DistributionSpec:
    """Integer demand law: ``uniform_integer`` on ``[lo, hi]`` or rounded ``truncated_normal``."""

    kind: str
    lo: int
    hi: int
    mean: float = 0.0
    std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("uniform_integer", "truncated_normal"):
            raise ValueError(f"unknown distribution {self.kind!r}")
        if self.lo > self.hi:
            raise ValueError("lo must not exceed hi")
        if self.lo < 0:
            raise ValueError("demands must be nonnegative")
        if self.kind == "truncated_normal" and not self.std > 0:
            raise ValueError("std must be positive")

    @classmethod
    def uniform(cls, lo: int, hi: int, seed: int = 0) -> "DistributionSpec":
        return cls("uniform_integer", lo, hi, seed=seed)

    @classmethod
    def normal(cls, mean: float, std: float, lo: int, hi: int, seed: int = 0) -> "DistributionSpec":
        return cls("truncated_normal", lo, hi, mean, std, seed)

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "DistributionSpec":
        """``uniform:LO:HI`` or ``normal:MEAN:STD:LO:HI``."""
        parts = text.split(":")
        try:
            if parts[0] == "uniform" and len(parts) == 3:
                return cls.uniform(int(parts[1]), int(parts[2]), seed)
            if parts[0] == "normal" and len(parts) == 5:
                return cls.normal(float(parts[1]), float(parts[2]), int(parts[3]), int(parts[4]), seed)
        except ValueError as exc:
            raise ValueError(f"bad distribution spec {text!r}: {exc}") from None
        raise ValueError(f"bad distribution spec {text!r}; use uniform:LO:HI or normal:MEAN:STD:LO:HI")

    def with_seed(self, seed: int) -> "DistributionSpec":
        return DistributionSpec(self.kind, self.lo, self.hi, self.mean, self.std, seed)

    def describe(self) -> str:
        if self.kind == "uniform_integer":
            return f"uniform:{self.lo}:{self.hi}"
        return f"normal:{self.mean:g}:{self.std:g}:{self.lo}:{self.hi}"


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _draw(dist: DistributionSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    if dist.kind == "uniform_integer":
        return rng.integers(dist.lo, dist.hi + 1, size=size, dtype=np.int64)
    # continuous normal truncated to [lo - 0.5, hi + 0.5), then rounded half up
    lo, hi = dist.lo - 0.5, dist.hi + 0.5
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        x = rng.normal(dist.mean, dist.std, size=todo.size)
        ok = (x >= lo) & (x < hi)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return np.floor(out + 0.5).astype(np.int64)


def generate_scenarios(dist: DistributionSpec, shape, m: int, stream: Sequence[int] = ()) -> np.ndarray:
    """Draw ``m`` i.i.d. scenarios as a ``rows x m`` uint32 matrix.

    ``shape`` is the row count or an ``(entities, days)`` pair (rows are
    entity-major).  ``stream`` names an independent sub-stream of the seed.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    rows = int(np.prod(shape)) if isinstance(shape, (tuple, list)) else int(shape)
    if rows < 1:
        raise ValueError("scenarios need at least one row")
    out = np.empty((m, rows), dtype=np.uint32)
    for k, start in enumerate(range(0, m, BLOCK)):
        stop = min(m, start + BLOCK)
        rng = _rng(dist.seed, STREAM_SCENARIOS, *stream, k)
        block = _draw(dist, rng, BLOCK * rows).reshape(BLOCK, rows)
        out[start:stop] = block[: stop - start]
    return out.T


def euclidean_instance(n: int, capacity: float, seed: int = 0, beta: float | None = None) -> RoutingInstance:
    """Random customers on a 100x100 square; both depots share one location."""
    rng = _rng(seed, STREAM_EXPERIMENT, n)
    pts = rng.uniform(0.0, 100.0, size=(n + 2, 2))
    pts[n + 1] = pts[0]
    diff = pts[:, None, :] - pts[None, :, :]
    cost = np.rint(np.sqrt((diff**2).sum(axis=-1)))
    return RoutingInstance(cost, capacity, beta)


# ---------------------------------------------------------------------------
# first-stage search


@dataclass(frozen=True)
class SearchBudget:
    iterations: int | None = None
    seconds: float | None = None

    def exhausted(self, evaluations: int, elapsed: float) -> bool:
        if self.iterations is not None and evaluations >= self.iterations:
            return True
        if self.seconds is not None and elapsed >= self.seconds:
            return True
        return False

    @property
    def is_zero(self) -> bool:
        return self.iterations == 0 or self.seconds == 0


@dataclass
class SearchResult:
    tour: GiantTour
    value: float
    evaluations: int
    trajectory: list[tuple[float, int, float]] = field(default_factory=list)
    progress: list[tuple[float, int, float]] = field(default_factory=list, repr=False)

    def best_at(self, seconds: float) -> tuple[float, int]:
        """Best value and number of scored candidates within ``seconds``."""
        best, count = math.inf, 0
        for elapsed, evals, value in self.progress:
            if elapsed > seconds:
                break
            best, count = value, evals
        return best, count


def _objective(instance, train, config):
    def value(order):
        res = batched_expected_split(instance, GiantTour(order), train, config, keep_solutions=False)
        return res.mean

    return value


def _nearest_neighbor(cost: np.ndarray, n: int, first: int) -> list[int]:
    tour = [first]
    left = set(range(1, n + 1)) - {first}
    while left:
        here = tour[-1]
        nxt = min(left, key=lambda j: (cost[here, j], j))
        tour.append(nxt)
        left.remove(nxt)
    return tour


def _neighbors(tour: list[int]):
    n = len(tour)
    for i in range(n - 1):
        for j in range(i + 1, n):
            yield tour[:i] + tour[i : j + 1][::-1] + tour[j + 1 :]
    for seg in (1, 2, 3):
        for i in range(n - seg + 1):
            rest = tour[:i] + tour[i + seg :]
            block = tour[i : i + seg]
            for k in range(len(rest) + 1):
                if k == i:
                    continue
                yield rest[:k] + block + rest[k:]


def _perturb(tour: list[int], rng: np.random.Generator) -> list[int]:
    n = len(tour)
    if n < 4:
        out = list(tour)
        rng.shuffle(out)
        return out
    a, b, c = sorted(rng.choice(np.arange(1, n), size=3, replace=False).tolist())
    return tour[:a] + tour[b:c] + tour[a:b] + tour[c:]


def improve_first_stage(
    instance: RoutingInstance,
    train: np.ndarray,
    budget: SearchBudget | int = 1000,
    config: BackendConfig | None = None,
    *,
    seed: int = 0,
    starts: int = 4,
) -> SearchResult:
    """Multi-start nearest neighbour, then 2-opt / Or-opt with perturbation kicks.

    Each candidate tour is scored by the batched split on ``train``.  An int
    budget counts local-search candidates; construction tours are always
    scored.  With a zero budget the best construction tour is returned.
    """
    if isinstance(budget, int):
        budget = SearchBudget(iterations=budget)
    value = _objective(instance, train, config)
    rng = _rng(seed, STREAM_SEARCH)
    n = instance.n
    t0 = time.perf_counter()
    trajectory: list[tuple[float, int, float]] = []
    progress: list[tuple[float, int, float]] = []
    state = {"evals": 0, "best": math.inf, "tour": None}

    def score(cand):
        v = value(cand)
        state["evals"] += 1
        now = time.perf_counter() - t0
        if v < state["best"] or state["tour"] is None:
            state["best"], state["tour"] = v, list(cand)
            trajectory.append((now, state["evals"], v))
        progress.append((now, state["evals"], state["best"]))
        return v

    firsts = sorted(range(1, n + 1), key=lambda j: (instance.cost[0, j], j))[: max(1, starts)]
    for first in firsts:
        score(_nearest_neighbor(instance.cost, n, first))
    built = state["evals"]

    def done():
        return budget.exhausted(state["evals"] - built, time.perf_counter() - t0)

    current, cur_val = list(state["tour"]), state["best"]
    while n > 1 and not budget.is_zero and not done():
        improved = False
        for cand in _neighbors(current):
            if done():
                break
            v = score(cand)
            if v < cur_val:
                current, cur_val = cand, v
                improved = True
                break
        if not improved and not done():
            current = _perturb(state["tour"], rng)
            cur_val = score(current)
    return SearchResult(GiantTour(state["tour"]), state["best"], state["evals"], trajectory, progress)


def out_of_sample_eval(instance: RoutingInstance, solution, eval_set: np.ndarray, config=None) -> tuple[float, float]:
    """Mean cost of a fixed tour on ``eval_set`` and its standard error."""
    tour = solution.tour if isinstance(solution, SearchResult) else solution
    res = batched_expected_split(instance, tour, eval_set, config, keep_solutions=False)
    costs = res.costs[np.isfinite(res.costs)]
    se = float(costs.std(ddof=1) / math.sqrt(costs.size)) if costs.size > 1 else 0.0
    return res.mean, se


# ---------------------------------------------------------------------------
# experiment reports

REPORT_FIELDS = ("experiment", "instance", "m", "rep", "metric", "value", "elapsed_ms", "seed")


@dataclass
class ExperimentReport:
    experiment: str
    instance: str
    seed: int
    config: dict = field(default_factory=dict)
    rows: list[tuple] = field(default_factory=list)

    def add(self, m, rep, metric, value, elapsed_ms=None):
        self.rows.append((m, rep, metric, value, elapsed_ms))

    def values(self, metric, m=None) -> list[float]:
        return [r[3] for r in self.rows if r[2] == metric and (m is None or r[0] == m)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.config):
            buf.write(f"# {key}={self.config[key]}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        for m, rep, metric, value, elapsed in self.rows:
            writer.writerow(
                [
                    self.experiment,
                    self.instance,
                    "" if m is None else m,
                    "" if rep is None else rep,
                    metric,
                    repr(float(value)),
                    "" if elapsed is None else f"{elapsed:.3f}",
                    self.seed,
                ]
            )
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _mean_se(xs: Sequence[float]) -> tuple[float, float]:
    x = np.asarray(xs, dtype=np.float64)
    if x.size < 2:
        return float(x.mean()) if x.size else math.nan, 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def log_log_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    lx, ly = np.log(np.asarray(xs, dtype=np.float64)), np.log(np.asarray(ys, dtype=np.float64))
    return float(np.polyfit(lx, ly, 1)[0])


def _train(dist, n, m, rep):
    return generate_scenarios(dist, n, m, stream=(1, m, rep))


def _eval_set(dist, n, size):
    return generate_scenarios(dist, n, size, stream=(2,))


def run_bias_experiment(
    instance: RoutingInstance,
    dist: DistributionSpec,
    m_list: Sequence[int],
    reps: int,
    *,
    eval_size: int = 100_000,
    budget: int = 300,
    config: BackendConfig | None = None,
    name: str = "instance",
) -> ExperimentReport:
    """In-sample optimum vs out-of-sample cost of the SAA tour, per ``m``.

    Per replication: ``in_sample``, ``out_of_sample``, ``gap`` and
    ``evaluations``; per ``m``: means and standard errors of the first two.
    """
    if reps < 2:
        raise ValueError("bias experiment needs reps >= 2")
    report = ExperimentReport(
        "saa-bias", name, dist.seed,
        {"dist": dist.describe(), "m_list": " ".join(map(str, m_list)), "reps": reps,
         "eval_size": eval_size, "budget": budget, "beta": instance.penalty_beta},
    )
    ev = _eval_set(dist, instance.n, eval_size)
    for m in m_list:
        zs, oos = [], []
        for rep in range(reps):
            res = improve_first_stage(instance, _train(dist, instance.n, m, rep), budget, config, seed=dist.seed)
            o, _ = out_of_sample_eval(instance, res, ev, config)
            zs.append(res.value)
            oos.append(o)
            report.add(m, rep, "in_sample", res.value)
            report.add(m, rep, "out_of_sample", o)
            report.add(m, rep, "gap", o - res.value)
            report.add(m, rep, "evaluations", res.evaluations)
        for metric, xs in (("in_sample", zs), ("out_of_sample", oos)):
            mu, se = _mean_se(xs)
            report.add(m, None, f"{metric}_mean", mu)
            report.add(m, None, f"{metric}_se", se)
    return report


def run_convergence_experiment(
    instance: RoutingInstance,
    dist: DistributionSpec,
    m_list: Sequence[int],
    reps: int,
    *,
    budget: int = 300,
    config: BackendConfig | None = None,
    name: str = "instance",
) -> ExperimentReport:
    """Spread of the SAA optimal value across replications, and its log-log slope in ``m``."""
    report = ExperimentReport(
        "saa-convergence", name, dist.seed,
        {"dist": dist.describe(), "m_list": " ".join(map(str, m_list)), "reps": reps,
         "budget": budget, "beta": instance.penalty_beta},
    )
    stds = []
    for m in m_list:
        zs = []
        for rep in range(reps):
            res = improve_first_stage(instance, _train(dist, instance.n, m, rep), budget, config, seed=dist.seed)
            zs.append(res.value)
            report.add(m, rep, "in_sample", res.value)
        x = np.asarray(zs)
        sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
        stds.append(sd)
        report.add(m, None, "in_sample_mean", float(x.mean()))
        report.add(m, None, "in_sample_std", sd)
    if len(m_list) >= 2 and all(s > 0 for s in stds):
        report.add(None, None, "log_std_slope", log_log_slope(m_list, stds))
    return report


def run_quality_experiment(
    instance: RoutingInstance,
    dist: DistributionSpec,
    m_list: Sequence[int],
    eval_size: int,
    *,
    budget: int = 300,
    config: BackendConfig | None = None,
    name: str = "instance",
) -> ExperimentReport:
    """Out-of-sample cost (with standard error) of the tour trained on ``m`` scenarios."""
    report = ExperimentReport(
        "quality-vs-scenarios", name, dist.seed,
        {"dist": dist.describe(), "m_list": " ".join(map(str, m_list)), "eval_size": eval_size,
         "budget": budget, "beta": instance.penalty_beta},
    )
    ev = _eval_set(dist, instance.n, eval_size)
    for m in m_list:
        res = improve_first_stage(instance, _train(dist, instance.n, m, 0), budget, config, seed=dist.seed)
        o, se = out_of_sample_eval(instance, res, ev, config)
        report.add(m, 0, "in_sample", res.value)
        report.add(m, 0, "out_of_sample", o)
        report.add(m, 0, "out_of_sample_se", se)
    return report


def time_split(instance, tour, scenarios, config, repeats: int = 3) -> float:
    """Median wall time (s) of one aggregate-only batched split."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        batched_expected_split(instance, tour, scenarios, config, keep_solutions=False)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def scaling_benchmark(
    instance: RoutingInstance,
    dist: DistributionSpec,
    m_list: Sequence[int],
    config: BackendConfig | None = None,
    repeats: int = 3,
) -> list[tuple[int, float]]:
    """Wall time of the batched split against scenario count."""
    config = config or BackendConfig()
    tour = GiantTour.identity(instance.n)
    top = generate_scenarios(dist, instance.n, max(m_list), stream=(3,))
    # warm-up compiles and faults in the kernels
    batched_expected_split(instance, tour, top[:, : min(16, top.shape[1])], config, keep_solutions=False)
    return [(m, time_split(instance, tour, top[:, :m], config, repeats)) for m in m_list]


def run_time_budget_experiment(
    instance: RoutingInstance,
    dist: DistributionSpec,
    budgets: Sequence[float],
    backend_modes: Sequence[tuple[str, BackendConfig]],
    *,
    m: int = 10_000,
    scaling_m: Sequence[int] = (),
    name: str = "instance",
) -> ExperimentReport:
    """Best in-sample cost reached within each wall-clock budget, per backend.

    Each mode runs one search for ``max(budgets)`` seconds; the trajectory is
    read off at every budget.  ``scaling_m`` adds a wall-time-vs-scenarios
    table and its log-log slope per mode.
    """
    if list(budgets) != sorted(budgets):
        raise ValueError("budgets must be ascending")
    report = ExperimentReport(
        "time-budget", name, dist.seed,
        {"dist": dist.describe(), "m": m, "budgets": " ".join(f"{b:g}" for b in budgets),
         "modes": " ".join(label for label, _ in backend_modes), "beta": instance.penalty_beta},
    )
    train = _train(dist, instance.n, m, 0)
    for label, cfg in backend_modes:
        res = improve_first_stage(instance, train, SearchBudget(seconds=max(budgets)), cfg, seed=dist.seed)
        for b in budgets:
            best, count = res.best_at(b)
            report.add(m, label, "best_cost", best, elapsed_ms=b * 1e3)
            report.add(m, label, "candidates", count, elapsed_ms=b * 1e3)
        if scaling_m:
            pts = scaling_benchmark(instance, dist, scaling_m, cfg)
            for mm, secs in pts:
                report.add(mm, label, "wall_time_s", secs, elapsed_ms=secs * 1e3)
            report.add(None, label, "log_time_slope", log_log_slope(*zip(*pts)))
    return report
