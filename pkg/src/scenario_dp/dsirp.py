"""Single-customer order-up-to replenishment DP.

State is end-of-day inventory on the grid ``0..U``.  Each day the customer
is either skipped (``q = 0``) or filled to capacity (``q = U - I``) through
one of ``R`` route options; unmet demand is lost and penalized.  One
scenario's cost-to-go advances by a min-plus product against the day's
transition matrix; the batched kernel fuses matrix construction into the
sweep and records argmins so each scenario's schedule can be backtracked.

Tie-breaking everywhere: skip before deliver, then lower route option, then
lower predecessor inventory; the terminal state is the lowest minimizer.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._accel import kernel
from .engine import BackendConfig, BatchResultSet, ProblemDims, memory_footprint, run_batched
from .minplus import INF, MaskedTransition, ValueFrontier, forward_sweep

BRUTE_FORCE_MAX_H = 14


class PolicyError(ValueError):
    """Delivery quantity outside the order-up-to set ``{0, U - I}``."""


@dataclass(frozen=True)
class CustomerSpec:
    capacity: int
    initial_inventory: int
    holding: float
    stockout_multiplier: float
    horizon: int

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")
        if not 0 <= self.initial_inventory <= self.capacity:
            raise ValueError("initial inventory must lie in [0, capacity]")
        if self.holding < 0:
            raise ValueError("holding cost must be >= 0")
        if not self.stockout_multiplier > 1:
            raise ValueError("stockout multiplier must exceed 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class DeliveryCostModel:
    """``F_t(q; r) = 0`` if ``q == 0`` else ``fixed[t, r] + unit[t, r] * q``.

    ``fixed``/``unit`` may be scalars, per-option vectors or ``(H, R)`` arrays.
    A tabular override ``table[t, q]`` (or ``table[q]`` for every day) replaces
    the affine form and implies a single route option.
    """

    fixed: np.ndarray | float = 0.0
    unit: np.ndarray | float = 0.0
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.table is not None:
            t = np.array(self.table, dtype=np.float64)
            if t.ndim not in (1, 2):
                raise ValueError("delivery table must be indexed [q] or [t, q]")
            if (t[..., 0] != 0).any():
                raise ValueError("delivery table must have F(0) = 0")
            if not np.isfinite(t).all() or (t < 0).any():
                raise ValueError("delivery table entries must be finite and >= 0")
            object.__setattr__(self, "table", t)
            return
        f = np.atleast_1d(np.array(self.fixed, dtype=np.float64))
        u = np.atleast_1d(np.array(self.unit, dtype=np.float64))
        if f.ndim > 2 or u.ndim > 2:
            raise ValueError("fixed/unit costs must be scalars, [r] or [t, r] arrays")
        for arr, name in ((f, "fixed"), (u, "unit")):
            if not np.isfinite(arr).all() or (arr < 0).any():
                raise ValueError(f"{name} delivery costs must be finite and >= 0")
        object.__setattr__(self, "fixed", f)
        object.__setattr__(self, "unit", u)

    @classmethod
    def tabular(cls, table) -> "DeliveryCostModel":
        return cls(table=table)

    @property
    def options(self) -> int:
        if self.table is not None:
            return 1
        return max(self.fixed.shape[-1], self.unit.shape[-1])

    def tensor(self, horizon: int, capacity: int) -> np.ndarray:
        """Dense ``F[t, r, q]`` for ``t < H``, ``r < R``, ``q <= U``."""
        q = np.arange(capacity + 1)
        if self.table is not None:
            t = self.table
            if t.shape[-1] < capacity + 1:
                raise ValueError(f"delivery table covers q <= {t.shape[-1] - 1}, need {capacity}")
            t = np.broadcast_to(t[..., : capacity + 1], (horizon, capacity + 1))
            return np.ascontiguousarray(t[:, None, :])
        R = self.options
        f = np.broadcast_to(self.fixed, (horizon, R))
        u = np.broadcast_to(self.unit, (horizon, R))
        F = f[:, :, None] + u[:, :, None] * q[None, None, :]
        F[:, :, 0] = 0.0
        return np.ascontiguousarray(F)

    def cost(self, t: int, q: int, r: int = 0) -> float:
        if q == 0:
            return 0.0
        if self.table is not None:
            row = self.table if self.table.ndim == 1 else self.table[t]
            return float(row[q])
        f = self.fixed if self.fixed.ndim == 1 else self.fixed[t]
        u = self.unit if self.unit.ndim == 1 else self.unit[t]
        f = f[r] if f.shape[0] > 1 else f[0]
        u = u[r] if u.shape[0] > 1 else u[0]
        return float(f + u * q)


@dataclass(frozen=True)
class HoldingPenaltyModel:
    """End-of-day cost ``table[t, J] + shortage_rate * s``.

    :meth:`standard` gives ``h * J + rho * h * s``; :meth:`tabular` gives a
    state-only table ``h_t(J)`` with no separate shortage charge.
    """

    state_cost: np.ndarray
    shortage_rate: float = 0.0

    def __post_init__(self):
        t = np.array(self.state_cost, dtype=np.float64)
        if t.ndim not in (1, 2):
            raise ValueError("state cost table must be indexed [J] or [t, J]")
        if not np.isfinite(t).all() or (t < 0).any():
            raise ValueError("state costs must be finite and >= 0")
        if not 0 <= self.shortage_rate < INF:
            raise ValueError("shortage rate must be finite and >= 0")
        object.__setattr__(self, "state_cost", t)

    @classmethod
    def standard(cls, spec: CustomerSpec) -> "HoldingPenaltyModel":
        J = np.arange(spec.capacity + 1)
        return cls(spec.holding * J, spec.stockout_multiplier * spec.holding)

    @classmethod
    def tabular(cls, table) -> "HoldingPenaltyModel":
        return cls(table, 0.0)

    def tensor(self, horizon: int, capacity: int) -> np.ndarray:
        t = self.state_cost
        if t.shape[-1] < capacity + 1:
            raise ValueError(f"state cost table covers J <= {t.shape[-1] - 1}, need {capacity}")
        return np.ascontiguousarray(np.broadcast_to(t[..., : capacity + 1], (horizon, capacity + 1)))

    def cost(self, t: int, J: int, shortage: int) -> float:
        row = self.state_cost if self.state_cost.ndim == 1 else self.state_cost[t]
        return float(row[J] + self.shortage_rate * shortage)


@dataclass(frozen=True)
class ScheduleResult:
    total: float
    deliver_flags: np.ndarray
    quantities: np.ndarray
    end_inventories: np.ndarray
    route_options: np.ndarray
    frontiers: list[ValueFrontier] | None = field(default=None, compare=False)


def _check_scenario(spec: CustomerSpec, demands) -> np.ndarray:
    d = np.asarray(demands)
    if d.shape[0] != spec.horizon:
        raise ValueError(f"scenario has {d.shape[0]} days, horizon is {spec.horizon}")
    if d.dtype == np.uint64 or not np.issubdtype(d.dtype, np.integer):
        if not np.all(np.floor(d) == d):
            raise ValueError("demands must be integers")
        d = d.astype(np.int64)
    if d.size and d.min() < 0:
        raise ValueError("demands must be nonnegative")
    return d


def _models(spec, costs, holding):
    holding = holding or HoldingPenaltyModel.standard(spec)
    F = costs.tensor(spec.horizon, spec.capacity)
    htab = holding.tensor(spec.horizon, spec.capacity)
    return holding, F, htab, float(holding.shortage_rate)


def simulate_day(I: int, q: int, d: int, capacity: int | None = None) -> tuple[int, int]:
    """End inventory and shortage after receiving ``q`` and facing demand ``d``."""
    if capacity is not None and q not in (0, capacity - I):
        raise PolicyError(f"q={q} not in order-up-to set {{0, {capacity - I}}}")
    if q < 0 or d < 0:
        raise PolicyError("quantities and demands must be nonnegative")
    net = I + q - d
    return max(0, net), max(0, -net)


# ---------------------------------------------------------------------------
# kernels


@kernel()
def _stage_cost(F, htab, rate, t, r, q, J, s):
    return F[t, r, q] + (htab[t, J] + rate * s)


@kernel()
def _dsirp_forward(F, htab, rate, U, I0, d, cur, nxt, cpred, cact):
    """Sweep one scenario; returns the terminal minimizer state."""
    H = d.shape[0]
    R = F.shape[1]
    for I in range(U + 1):
        cur[I] = np.inf
    cur[I0] = 0.0
    for t in range(H):
        dt = d[t]
        for J in range(U + 1):
            nxt[J] = np.inf
            cpred[t, J] = -1
            cact[t, J] = -1
        # skip
        for I in range(U + 1):
            if cur[I] < np.inf:
                net = I - dt
                J = net if net > 0 else 0
                s = -net if net < 0 else 0
                v = cur[I] + _stage_cost(F, htab, rate, t, 0, 0, J, s)
                if v < nxt[J]:
                    nxt[J] = v
                    cpred[t, J] = I
                    cact[t, J] = 0
        # deliver up to U via route option r
        for r in range(R):
            for I in range(U):
                if cur[I] < np.inf:
                    q = U - I
                    net = U - dt
                    J = net if net > 0 else 0
                    s = -net if net < 0 else 0
                    v = cur[I] + _stage_cost(F, htab, rate, t, r, q, J, s)
                    if v < nxt[J]:
                        nxt[J] = v
                        cpred[t, J] = I
                        cact[t, J] = r + 1
        for J in range(U + 1):
            cur[J] = nxt[J]
    best = 0
    for J in range(1, U + 1):
        if cur[J] < cur[best]:
            best = J
    return best


@kernel()
def _dsirp_backtrack(U, Jstar, cpred, cact, flags, options, qty, inv):
    H = cpred.shape[0]
    J = Jstar
    for t in range(H - 1, -1, -1):
        I = cpred[t, J]
        a = cact[t, J]
        inv[t] = J
        if a > 0:
            flags[t] = 1
            options[t] = a - 1
            qty[t] = U - I
        else:
            flags[t] = 0
            options[t] = -1
            qty[t] = 0
        J = I


def _dsirp_batch_numpy(F, htab, rate, U, I0, D, totals, flags, options, qty, inv, cpred, cact, cur, nxt):
    # scenarios vectorized; loop order reproduces the kernel's tie-breaking
    H, b = D.shape
    R = F.shape[1]
    rows = np.arange(b)
    cur[:] = np.inf
    cur[:, I0] = 0.0
    for t in range(H):
        dt = D[t].astype(np.int64)
        nxt[:] = np.inf
        cpred[:, t, :] = -1
        cact[:, t, :] = -1
        actions = [(0, None)] + [(r, 1) for r in range(R)]
        for r, deliver in actions:
            for I in range(U if deliver else U + 1):
                base = U if deliver else I
                net = base - dt
                J = np.maximum(net, 0)
                s = np.maximum(-net, 0)
                q = U - I if deliver else 0
                v = cur[:, I] + (F[t, r, q] + (htab[t, J] + rate * s))
                hit = v < nxt[rows, J]
                if hit.any():
                    rs, Js = rows[hit], J[hit]
                    nxt[rs, Js] = v[hit]
                    cpred[rs, t, Js] = I
                    cact[rs, t, Js] = r + 1 if deliver else 0
        cur[:] = nxt
    Jstar = np.argmin(cur, axis=1)
    totals[:] = cur[rows, Jstar]
    J = Jstar
    for t in range(H - 1, -1, -1):
        I = cpred[rows, t, J]
        a = cact[rows, t, J]
        inv[:, t] = J
        flags[:, t] = a > 0
        options[:, t] = np.where(a > 0, a - 1, -1)
        qty[:, t] = np.where(a > 0, U - I, 0)
        J = I.astype(np.int64)


@kernel(fallback=_dsirp_batch_numpy)
def _dsirp_batch(F, htab, rate, U, I0, D, totals, flags, options, qty, inv, cpred, cact, cur, nxt):
    b = D.shape[1]
    for s in range(b):
        Jstar = _dsirp_forward(F, htab, rate, U, I0, D[:, s], cur[s], nxt[s], cpred[s], cact[s])
        totals[s] = cur[s, Jstar]
        _dsirp_backtrack(U, Jstar, cpred[s], cact[s], flags[s], options[s], qty[s], inv[s])


# ---------------------------------------------------------------------------
# public API


def build_transition_matrix(
    t: int,
    scenario,
    spec: CustomerSpec,
    costs: DeliveryCostModel,
    holding: HoldingPenaltyModel | None = None,
    *,
    collapse: bool = True,
) -> MaskedTransition:
    """Day-``t`` (0-based) transition ``A[I, J]`` or option slices ``A[r, I, J]``."""
    d = _check_scenario(spec, scenario)
    if not 0 <= t < spec.horizon:
        raise IndexError(f"day {t} outside 0..{spec.horizon - 1}")
    _, F, htab, rate = _models(spec, costs, holding)
    U = spec.capacity
    R = F.shape[1]
    A = np.full((R, U + 1, U + 1), np.inf)
    dt = int(d[t])
    for r in range(R):
        for I in range(U + 1):
            for q in sorted({0, U - I}):
                J, s = simulate_day(I, q, dt)
                a = _stage_cost(F, htab, rate, t, r, q, J, s)
                A[r, I, J] = min(A[r, I, J], a)
    return MaskedTransition(A.min(axis=0) if collapse else A)


def _solve_arrays(spec, costs, holding, D):
    _, F, htab, rate = _models(spec, costs, holding)
    H, b = D.shape
    U = spec.capacity
    totals = np.empty(b)
    flags = np.empty((b, H), dtype=np.int8)
    options = np.empty((b, H), dtype=np.int8)
    qty = np.empty((b, H), dtype=np.int32)
    inv = np.empty((b, H), dtype=np.int32)
    cpred = np.empty((b, H, U + 1), dtype=np.int16)
    cact = np.empty((b, H, U + 1), dtype=np.int16)
    cur = np.empty((b, U + 1))
    nxt = np.empty((b, U + 1))
    _dsirp_batch(F, htab, rate, U, spec.initial_inventory, D, totals, flags, options, qty, inv, cpred, cact, cur, nxt)
    return totals, flags, options, qty, inv


def solve_customer_scenario(
    spec: CustomerSpec,
    costs: DeliveryCostModel,
    scenario,
    holding: HoldingPenaltyModel | None = None,
) -> ScheduleResult:
    """Optimal order-up-to schedule for one demand path, with its frontiers."""
    d = _check_scenario(spec, scenario)
    totals, flags, options, qty, inv = _solve_arrays(spec, costs, holding, d.reshape(-1, 1))
    mats = [build_transition_matrix(t, d, spec, costs, holding) for t in range(spec.horizon)]
    frontiers = forward_sweep(mats, ValueFrontier.initial(spec.capacity + 1, spec.initial_inventory))
    return ScheduleResult(float(totals[0]), flags[0], qty[0], inv[0], options[0], frontiers)


def simulate_schedule(
    spec: CustomerSpec,
    costs: DeliveryCostModel,
    scenario,
    deliver_flags: Sequence[int],
    route_options: Sequence[int] | None = None,
    holding: HoldingPenaltyModel | None = None,
) -> float:
    """Re-simulate a delivery pattern; adds costs in the DP's order."""
    d = _check_scenario(spec, scenario)
    _, F, htab, rate = _models(spec, costs, holding)
    U = spec.capacity
    I = spec.initial_inventory
    total = 0.0
    for t in range(spec.horizon):
        q = U - I if deliver_flags[t] else 0
        r = 0 if route_options is None or route_options[t] < 0 else int(route_options[t])
        J, s = simulate_day(I, q, int(d[t]), U)
        total = total + _stage_cost(F, htab, rate, t, r, q, J, s)
        I = J
    return total


class ScheduleResults(Sequence):
    """Lazy per-scenario view over batched schedule arrays."""

    def __init__(self, totals, flags, options, qty, inv):
        self.totals, self.flags, self.options, self.qty, self.inv = totals, flags, options, qty, inv

    def __len__(self):
        return self.totals.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return [self[k] for k in range(*idx.indices(len(self)))]
        return ScheduleResult(
            float(self.totals[idx]), self.flags[idx], self.qty[idx], self.inv[idx], self.options[idx]
        )


def dsirp_dims(spec: CustomerSpec, costs: DeliveryCostModel, m: int, batch_size=None) -> ProblemDims:
    return ProblemDims(
        "dsirp", m, capacity=spec.capacity, horizon=spec.horizon, options=costs.options, batch_size=batch_size
    )


def batched_expected_cost(
    spec: CustomerSpec,
    costs: DeliveryCostModel,
    scenarios,
    config: BackendConfig | None = None,
    holding: HoldingPenaltyModel | None = None,
) -> BatchResultSet:
    """Solve every scenario column (shape ``H x m``); ``result.mean`` is the expected cost."""
    config = config or BackendConfig()
    D = _check_scenario(spec, scenarios)
    if D.ndim == 1:
        D = D[:, None]
    H, m = D.shape
    holding, F, htab, rate = _models(spec, costs, holding)
    U = spec.capacity
    totals = np.empty(m)
    flags = np.empty((m, H), dtype=np.int8)
    options = np.empty((m, H), dtype=np.int8)
    qty = np.empty((m, H), dtype=np.int32)
    inv = np.empty((m, H), dtype=np.int32)

    def evaluate(block, start):
        b = block.shape[1]
        sl = slice(start, start + b)
        cpred = np.empty((b, H, U + 1), dtype=np.int16)
        cact = np.empty((b, H, U + 1), dtype=np.int16)
        cur = np.empty((b, U + 1))
        nxt = np.empty((b, U + 1))
        _dsirp_batch(
            F, htab, rate, U, spec.initial_inventory, block,
            totals[sl], flags[sl], options[sl], qty[sl], inv[sl], cpred, cact, cur, nxt,
        )
        return totals[sl].copy()

    fp = memory_footprint(dsirp_dims(spec, costs, 1))
    return run_batched(
        evaluate,
        D,
        config,
        vectorized=True,
        per_scenario_bytes=fp.per_scenario,
        payloads=ScheduleResults(totals, flags, options, qty, inv),
    )


def brute_force_schedule(
    spec: CustomerSpec,
    costs: DeliveryCostModel,
    scenario,
    holding: HoldingPenaltyModel | None = None,
) -> float:
    """Minimum over all 2^H delivery patterns, cheapest route option per delivery day."""
    if spec.horizon > BRUTE_FORCE_MAX_H:
        raise ValueError(f"brute force limited to H <= {BRUTE_FORCE_MAX_H}, got {spec.horizon}")
    d = [int(v) for v in _check_scenario(spec, scenario)]
    holding = holding or HoldingPenaltyModel.standard(spec)
    U = spec.capacity
    R = costs.options
    best = INF
    for pattern in itertools.product((0, 1), repeat=spec.horizon):
        I = spec.initial_inventory
        total = 0.0
        for t, z in enumerate(pattern):
            q = U - I if z else 0
            J, s = simulate_day(I, q, d[t], U)
            total += min(costs.cost(t, q, r) for r in range(R)) + holding.cost(t, J, s)
            I = J
        best = min(best, total)
    return best
