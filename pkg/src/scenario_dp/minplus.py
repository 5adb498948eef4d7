"""(min, +) semiring primitives and the generic forward sweep.

Costs are float64 with ``inf`` as the absorbing "infeasible" element.  No
subtraction ever happens on extended costs, so ``inf - inf`` (and hence NaN)
cannot arise; inputs containing NaN or negative entries are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._accel import kernel

INF = np.inf


class DimensionError(ValueError):
    """Raised when matrix and frontier shapes do not chain."""


def _as_cost_array(values, ndim: int | tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    allowed = (ndim,) if isinstance(ndim, int) else ndim
    if arr.ndim not in allowed:
        raise DimensionError(f"{name} must have ndim in {allowed}, got {arr.ndim}")
    if np.isnan(arr).any():
        raise ValueError(f"{name} contains NaN")
    if (arr < 0).any():
        raise ValueError(f"{name} contains negative costs")
    arr.setflags(write=False)
    return arr


def extended_add(a: float, b: float) -> float:
    """Semiring product: ordinary addition, saturating at +inf."""
    if a == INF or b == INF:
        return INF
    return float(a) + float(b)


@dataclass(frozen=True)
class ValueFrontier:
    """Cost-to-go vector over one stage's state space."""

    stage: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_cost_array(self.values, 1, "frontier"))

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def initial(cls, size: int, state: int, stage: int = 1) -> "ValueFrontier":
        """Frontier with cost 0 at ``state`` and +inf everywhere else."""
        if not 0 <= state < size:
            raise IndexError(f"initial state {state} outside 0..{size - 1}")
        v = np.full(size, INF)
        v[state] = 0.0
        return cls(stage, v)


@dataclass(frozen=True)
class MaskedTransition:
    """Stage transition costs ``entries[i, j]`` (or ``entries[r, i, j]`` per option)."""

    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _as_cost_array(self.entries, (2, 3), "transition"))

    @property
    def depth(self) -> int:
        return 1 if self.entries.ndim == 2 else self.entries.shape[0]

    @property
    def rows(self) -> int:
        return self.entries.shape[-2]

    @property
    def cols(self) -> int:
        return self.entries.shape[-1]

    def collapsed(self) -> np.ndarray:
        """Min over the option axis (identity for depth-1 matrices)."""
        if self.entries.ndim == 2:
            return self.entries
        return self.entries.min(axis=0)


def _minplus_numpy(A, J, out):
    out[:] = np.min(A + J[:, None], axis=0) if A.shape[0] else INF


@kernel(fallback=_minplus_numpy)
def _minplus_kernel(A, J, out):
    rows, cols = A.shape
    for j in range(cols):
        best = np.inf
        for i in range(rows):
            v = A[i, j] + J[i]
            if v < best:
                best = v
        out[j] = best


def _minplus_options_numpy(A, J, out):
    if A.shape[1] == 0:
        out[:] = INF
        return
    out[:] = np.min(A.min(axis=0) + J[:, None], axis=0)


@kernel(fallback=_minplus_options_numpy)
def _minplus_options_kernel(A, J, out):
    # reduce over route options first, then over predecessor states
    R, rows, cols = A.shape
    for j in range(cols):
        best = np.inf
        for i in range(rows):
            a = np.inf
            for r in range(R):
                if A[r, i, j] < a:
                    a = A[r, i, j]
            v = a + J[i]
            if v < best:
                best = v
        out[j] = best


def _frontier_values(J) -> tuple[np.ndarray, int]:
    if isinstance(J, ValueFrontier):
        return J.values, J.stage
    return _as_cost_array(J, 1, "frontier"), 0


def _transition_entries(A) -> np.ndarray:
    return A.entries if isinstance(A, MaskedTransition) else MaskedTransition(A).entries


def minplus_apply(A, J) -> ValueFrontier:
    """``out[j] = min_i A[i, j] + J[i]``.

    ``A`` may be a :class:`MaskedTransition` or a raw 2-D array; option-sliced
    (3-D) transitions are routed to :func:`minplus_apply_options`.
    """
    entries = _transition_entries(A)
    if entries.ndim == 3:
        return minplus_apply_options(A, J)
    values, stage = _frontier_values(J)
    if entries.shape[0] != values.shape[0]:
        raise DimensionError(
            f"transition has {entries.shape[0]} rows but frontier has {values.shape[0]} states"
        )
    out = np.empty(entries.shape[1])
    _minplus_kernel(entries, values, out)
    return ValueFrontier(stage + 1, out)


def minplus_apply_options(A, J) -> ValueFrontier:
    """Min-plus product against an option-sliced transition ``A[r, i, j]``."""
    if isinstance(A, MaskedTransition):
        entries = A.entries
    else:
        slices = [np.asarray(s, dtype=np.float64) for s in A] if not isinstance(A, np.ndarray) else [A]
        if len(slices) == 1 and slices[0].ndim == 3:
            entries = slices[0]
        else:
            shapes = {s.shape for s in slices}
            if len(shapes) != 1:
                raise DimensionError(f"option slices have inconsistent shapes {sorted(shapes)}")
            entries = np.stack(slices)
        entries = MaskedTransition(entries).entries
    if entries.ndim == 2:
        entries = entries[None]
    values, stage = _frontier_values(J)
    if entries.shape[1] != values.shape[0]:
        raise DimensionError(
            f"transition has {entries.shape[1]} rows but frontier has {values.shape[0]} states"
        )
    out = np.empty(entries.shape[2])
    _minplus_options_kernel(entries, values, out)
    return ValueFrontier(stage + 1, out)


def forward_sweep(stage_matrices: Sequence, J1) -> list[ValueFrontier]:
    """Frontiers ``[J1, J2, ..., J_{T+1}]`` from repeated min-plus products."""
    if not isinstance(J1, ValueFrontier):
        J1 = ValueFrontier(1, J1)
    frontiers = [J1]
    for A in stage_matrices:
        frontiers.append(minplus_apply(A, frontiers[-1]))
    return frontiers
