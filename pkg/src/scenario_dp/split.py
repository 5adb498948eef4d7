"""Giant-tour split under stochastic demand.

Positions ``1..n`` of a fixed tour are cut into contiguous routes, each
starting at depot node 0 and ending at depot node ``n+1``.  For one demand
scenario the value of serving the first ``i`` positions is

    V(i) = min_{p < i} V(p) + A(p, i)

where ``A(p, i)`` is the route cost ``W(p, i)`` when the route's load fits in
the vehicle, and either ``inf`` (hard capacity) or ``W`` plus ``beta`` per
excess unit (penalized mode) otherwise.

Every implementation evaluates a candidate as ``(V(p) + head[p]) + tail[i]``
with ``head[p] = c(0, s_{p+1}) - D[p+1]`` and ``tail[i] = D[i] + c(s_i, n+1)``,
so the quadratic scan, the deque scan and the vectorized fallback produce
bitwise-identical value vectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._accel import kernel
from .engine import BackendConfig, BatchResultSet, ProblemDims, memory_footprint, run_batched
from .minplus import INF, ValueFrontier

BRUTE_FORCE_MAX_N = 20


class InfeasibleModeError(ValueError):
    """Requested algorithm does not support the instance's capacity mode."""


@dataclass(frozen=True)
class RoutingInstance:
    cost: np.ndarray
    capacity: float
    penalty_beta: float | None = None

    def __post_init__(self):
        c = np.array(self.cost, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 3:
            raise ValueError(f"cost matrix must be square with n+2 >= 3 nodes, got shape {c.shape}")
        if not np.isfinite(c).all() or (c < 0).any():
            raise ValueError("cost entries must be finite and nonnegative")
        if (np.diag(c) != 0).any():
            raise ValueError("cost diagonal must be zero")
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")
        if self.penalty_beta is not None and not (0 <= self.penalty_beta < INF):
            raise ValueError("penalty_beta must be a finite nonnegative number or None (hard)")
        c.setflags(write=False)
        object.__setattr__(self, "cost", c)

    @property
    def n(self) -> int:
        return self.cost.shape[0] - 2

    @property
    def hard(self) -> bool:
        return self.penalty_beta is None

    def with_beta(self, beta: float | None) -> "RoutingInstance":
        return RoutingInstance(self.cost, self.capacity, beta)


@dataclass(frozen=True)
class GiantTour:
    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(v) for v in self.order)
        if not order or sorted(order) != list(range(1, len(order) + 1)):
            raise ValueError(f"tour must be a permutation of 1..{len(order)}")
        object.__setattr__(self, "order", order)

    def __len__(self):
        return len(self.order)

    @classmethod
    def identity(cls, n: int) -> "GiantTour":
        return cls(tuple(range(1, n + 1)))


def _check_tour(instance: RoutingInstance, tour) -> GiantTour:
    if not isinstance(tour, GiantTour):
        tour = GiantTour(tuple(tour))
    if len(tour) != instance.n:
        raise ValueError(f"tour has {len(tour)} customers, instance has {instance.n}")
    return tour


def _check_demands(q, n: int) -> np.ndarray:
    q = np.asarray(q)
    if q.shape[0] != n:
        raise ValueError(f"demand rows ({q.shape[0]}) must equal tour length ({n})")
    if q.dtype == np.uint64:
        q = q.astype(np.int64)
    if not np.issubdtype(q.dtype, np.integer):
        if not np.all(np.floor(q) == q):
            raise ValueError("demands must be integers")
        q = q.astype(np.int64)
    if q.dtype.kind == "i" and q.size and q.min() < 0:
        raise ValueError("demands must be nonnegative")
    return q


def build_split_inputs(instance: RoutingInstance, tour, q) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative distance ``D`` and cumulative demand ``P`` along the tour.

    Both have length ``n+1``.  ``D[i]`` is the travel cost from position 1 to
    position ``i`` (``D[0]`` is unused and set to 0); ``P[i]`` is the demand of
    positions ``1..i`` with ``P[0] = 0``.
    """
    tour = _check_tour(instance, tour)
    q = _check_demands(q, instance.n).astype(np.int64)
    s = np.asarray(tour.order)
    D = np.zeros(instance.n + 1)
    if instance.n > 1:
        D[2:] = np.cumsum(instance.cost[s[:-1], s[1:]])
    P = np.zeros(instance.n + 1, dtype=np.int64)
    P[1:] = np.cumsum(q)
    return D, P


def route_cost(instance: RoutingInstance, tour, p: int, i: int) -> float:
    """``W(p, i)``: depot -> s_{p+1} -> ... -> s_i -> end depot, summed directly."""
    s = _check_tour(instance, tour).order
    c = instance.cost
    total = c[0, s[p]]
    for k in range(p, i - 1):
        total += c[s[k], s[k + 1]]
    return float(total + c[s[i - 1], instance.n + 1])


def _head_tail(instance: RoutingInstance, tour: GiantTour) -> tuple[np.ndarray, np.ndarray]:
    n = instance.n
    s = np.asarray(tour.order)
    c = instance.cost
    D = np.zeros(n + 1)
    if n > 1:
        D[2:] = np.cumsum(c[s[:-1], s[1:]])
    head = np.zeros(n + 1)
    head[:n] = c[0, s] - D[1:]
    tail = np.zeros(n + 1)
    tail[1:] = D[1:] + c[s, n + 1]
    return head, tail


@dataclass(frozen=True)
class SplitSolution:
    values: np.ndarray
    pred: np.ndarray
    order: tuple[int, ...]

    @property
    def total(self) -> float:
        return float(self.values[-1])

    @property
    def feasible(self) -> bool:
        return bool(np.isfinite(self.values[-1]))

    @property
    def frontier(self) -> ValueFrontier:
        return ValueFrontier(len(self.order), self.values)

    def cut_points(self) -> list[int]:
        """Route boundaries ``0 = p_0 < p_1 < ... < p_k = n``."""
        if not self.feasible:
            raise ValueError("infeasible scenario has no route decomposition")
        cuts = [len(self.order)]
        while cuts[-1] > 0:
            cuts.append(int(self.pred[cuts[-1]]))
        return cuts[::-1]

    def routes(self) -> list[list[int]]:
        cuts = self.cut_points()
        return [list(self.order[a:b]) for a, b in zip(cuts[:-1], cuts[1:])]

    @property
    def n_routes(self) -> int:
        return len(self.cut_points()) - 1


# ---------------------------------------------------------------------------
# single-scenario kernels


@kernel()
def _prefix(q, P):
    P[0] = 0
    for k in range(q.shape[0]):
        P[k + 1] = P[k] + q[k]


@kernel()
def _split_quadratic_kernel(head, tail, q, Q, beta, hard, V, pred, P):
    n = q.shape[0]
    _prefix(q, P)
    V[0] = 0.0
    pred[0] = -1
    for i in range(1, n + 1):
        best = np.inf
        arg = -1
        if hard:
            # feasible predecessors form a suffix; scan it right to left, keep ties leftmost
            p = i - 1
            while p >= 0 and P[i] - P[p] <= Q:
                v = (V[p] + head[p]) + tail[i]
                if v <= best:
                    best = v
                    arg = p
                p -= 1
        else:
            for p in range(i):
                v = (V[p] + head[p]) + tail[i]
                excess = P[i] - P[p] - Q
                if excess > 0:
                    v = v + beta * excess
                if v < best:
                    best = v
                    arg = p
        V[i] = best
        pred[i] = arg if best < np.inf else -1


@kernel()
def _split_linear_kernel(head, tail, q, Q, V, pred, P, dq):
    n = q.shape[0]
    _prefix(q, P)
    V[0] = 0.0
    pred[0] = -1
    front = 0
    back = 1
    dq[0] = 0
    for i in range(1, n + 1):
        # window: drop predecessors whose route to i would overload the vehicle
        while front < back and P[i] - P[dq[front]] > Q:
            front += 1
        if front == back:
            V[i] = np.inf
            pred[i] = -1
        else:
            p = dq[front]
            V[i] = (V[p] + head[p]) + tail[i]
            pred[i] = p if V[i] < np.inf else -1
        if i < n:
            fi = V[i] + head[i]
            while front < back and V[dq[back - 1]] + head[dq[back - 1]] > fi:
                back -= 1
            dq[back] = i
            back += 1


# ---------------------------------------------------------------------------
# batched kernels (columns of qb are scenarios)


def _split_batch_numpy(head, tail, qb, Q, beta, hard, linear, costs, V, pred, routes, keep):
    # 2-D formulation: scenarios x predecessors, one min-reduction per position
    n, b = qb.shape
    P = np.zeros((b, n + 1), dtype=np.int64)
    np.cumsum(qb.T, axis=1, out=P[:, 1:])
    Vb = np.full((b, n + 1), np.inf)
    Vb[:, 0] = 0.0
    Pb = np.full((b, n + 1), -1, dtype=np.int32)
    rows = np.arange(b)
    for i in range(1, n + 1):
        cand = (Vb[:, :i] + head[:i]) + tail[i]
        load = P[:, i : i + 1] - P[:, :i]
        if hard:
            cand[load > Q] = np.inf
        else:
            excess = load - Q
            over = excess > 0
            cand[over] = cand[over] + beta * excess[over]
        arg = np.argmin(cand, axis=1)
        best = cand[rows, arg]
        Vb[:, i] = best
        Pb[:, i] = np.where(np.isfinite(best), arg, -1)
    costs[:] = Vb[:, n]
    if keep:
        V[:] = Vb
        pred[:] = Pb
        for s in range(b):
            routes[s] = _count_routes(Pb[s], n) if np.isfinite(Vb[s, n]) else 0


@kernel()
def _count_routes(pred, n):
    k = 0
    i = n
    while i > 0:
        i = pred[i]
        k += 1
    return k


@kernel(fallback=_split_batch_numpy)
def _split_batch(head, tail, qb, Q, beta, hard, linear, costs, V, pred, routes, keep):
    n, b = qb.shape
    P = np.empty(n + 1, dtype=np.int64)
    dq = np.empty(n + 1, dtype=np.int64)
    vs = np.empty(n + 1)
    ps = np.empty(n + 1, dtype=np.int32)
    for s in range(b):
        if keep:
            vrow = V[s]
            prow = pred[s]
        else:
            vrow = vs
            prow = ps
        if linear:
            _split_linear_kernel(head, tail, qb[:, s], Q, vrow, prow, P, dq)
        else:
            _split_quadratic_kernel(head, tail, qb[:, s], Q, beta, hard, vrow, prow, P)
        costs[s] = vrow[n]
        if keep:
            routes[s] = _count_routes(prow, n) if vrow[n] < np.inf else 0


# ---------------------------------------------------------------------------
# public API


def _single(instance, tour, q, linear: bool) -> SplitSolution:
    tour = _check_tour(instance, tour)
    q = _check_demands(q, instance.n).astype(np.int64)
    n = instance.n
    head, tail = _head_tail(instance, tour)
    V = np.empty(n + 1)
    pred = np.empty(n + 1, dtype=np.int32)
    P = np.empty(n + 1, dtype=np.int64)
    Q = float(instance.capacity)
    if linear:
        if not instance.hard:
            raise InfeasibleModeError("linear split supports hard capacity only; use the quadratic form")
        _split_linear_kernel(head, tail, q, Q, V, pred, P, np.empty(n + 1, dtype=np.int64))
    else:
        beta = 0.0 if instance.hard else float(instance.penalty_beta)
        _split_quadratic_kernel(head, tail, q, Q, beta, instance.hard, V, pred, P)
    return SplitSolution(V, pred, tour.order)


def split_scenario_quadratic(instance: RoutingInstance, tour, q) -> SplitSolution:
    """O(n^2) masked min-plus split for one demand vector (tour order)."""
    return _single(instance, tour, q, linear=False)


def split_scenario_linear(instance: RoutingInstance, tour, q) -> SplitSolution:
    """O(n) split using a monotone deque of candidate predecessors.

    Raises :class:`InfeasibleModeError` in penalized mode.
    """
    return _single(instance, tour, q, linear=True)


class SplitSolutions(Sequence):
    """Lazy per-scenario view over batched split outputs."""

    def __init__(self, V, pred, routes, order):
        self.V = V
        self.pred = pred
        self.routes = routes
        self.order = order

    def __len__(self):
        return self.V.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return [self[k] for k in range(*idx.indices(len(self)))]
        return SplitSolution(self.V[idx], self.pred[idx], self.order)


def split_dims(instance: RoutingInstance, m: int, keep_solutions: bool = True, batch_size=None):
    return ProblemDims("split", m, n=instance.n, keep_solutions=keep_solutions, batch_size=batch_size)


def batched_expected_split(
    instance: RoutingInstance,
    tour,
    scenarios,
    config: BackendConfig | None = None,
    *,
    keep_solutions: bool = True,
    method: str = "auto",
) -> BatchResultSet:
    """Split every scenario column of ``scenarios`` (shape ``n x m``).

    ``method`` is ``"linear"``, ``"quadratic"`` or ``"auto"`` (linear in
    hard mode, quadratic otherwise).  Per-scenario decisions are exposed via
    ``result.payloads`` when ``keep_solutions`` is set.  ``result.mean`` is
    the mean over finite totals; ``result.infeasible_count`` counts hard-mode
    scenarios that admit no feasible split.
    """
    config = config or BackendConfig()
    tour = _check_tour(instance, tour)
    q = _check_demands(scenarios, instance.n)
    if q.ndim == 1:
        q = q[:, None]
    if method == "auto":
        method = "linear" if instance.hard else "quadratic"
    if method not in ("linear", "quadratic"):
        raise ValueError(f"unknown split method {method!r}")
    linear = method == "linear"
    if linear and not instance.hard:
        raise InfeasibleModeError("linear split supports hard capacity only")

    n, m = q.shape
    head, tail = _head_tail(instance, tour)
    Q = float(instance.capacity)
    beta = 0.0 if instance.hard else float(instance.penalty_beta)
    hard = instance.hard
    if keep_solutions:
        V = np.empty((m, n + 1))
        pred = np.empty((m, n + 1), dtype=np.int32)
        routes = np.zeros(m, dtype=np.int32)
        payloads = SplitSolutions(V, pred, routes, tour.order)
    else:
        V = np.empty((1, n + 1))
        pred = np.empty((1, n + 1), dtype=np.int32)
        routes = np.zeros(1, dtype=np.int32)
        payloads = None

    def evaluate(block, start):
        b = block.shape[1]
        out = np.empty(b)
        if keep_solutions:
            sl = slice(start, start + b)
            _split_batch(head, tail, block, Q, beta, hard, linear, out, V[sl], pred[sl], routes[sl], True)
        else:
            _split_batch(head, tail, block, Q, beta, hard, linear, out, V, pred, routes, False)
        return out

    fp = memory_footprint(split_dims(instance, 1, keep_solutions))
    return run_batched(
        evaluate,
        q,
        config,
        vectorized=True,
        per_scenario_bytes=fp.per_scenario,
        payloads=payloads,
    )


def brute_force_split(instance: RoutingInstance, tour, q) -> float:
    """Minimum over all 2^(n-1) contiguous partitions, route costs summed directly."""
    tour = _check_tour(instance, tour)
    n = instance.n
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    q = [int(v) for v in _check_demands(q, n)]
    Q = instance.capacity
    best = INF
    for mask in itertools.product((False, True), repeat=n - 1):
        cuts = [0] + [k + 1 for k, cut in enumerate(mask) if cut] + [n]
        total = 0.0
        for p, i in zip(cuts[:-1], cuts[1:]):
            load = sum(q[p:i])
            w = route_cost(instance, tour, p, i)
            if load > Q:
                if instance.hard:
                    w = INF
                else:
                    w += instance.penalty_beta * (load - Q)
            total += w
        best = min(best, total)
    return best
