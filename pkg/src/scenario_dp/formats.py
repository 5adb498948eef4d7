"""Instance and scenario file formats.

Routing instance (text, ``#`` starts a comment)::

    n Q beta            # beta is a number, or "hard"
    <n+2 rows of n+2 costs>   # node 0 = start depot, node n+1 = end depot

Customer instance (text, ``key = value``)::

    capacity = 2
    initial_inventory = 1
    holding = 1.0
    stockout_multiplier = 2.0
    horizon = 2
    fixed = 3.0 5.0          # one entry per route option
    unit = 1.0 0.5
    delivery_table = 0 1 2   # optional F(q), replaces fixed/unit
    holding_table = 5 1 0    # optional h(J), replaces holding/stockout

Scenario batch (binary, little-endian)::

    magic  4s  b"SCNB"
    version u16 = 1
    rows   u32
    cols   u32   (scenario count)
    dtype  u16 = 1  (uint32)
    payload rows*cols uint32, scenario-major (each scenario's rows contiguous)

Text scenario files (``.csv``/``.txt``) hold one scenario per line.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsirp import CustomerSpec, DeliveryCostModel, HoldingPenaltyModel
from .split import RoutingInstance

MAGIC = b"SCNB"
VERSION = 1
DTYPE_U32 = 1
HEADER = struct.Struct("<4sHIIH")
TEXT_SUFFIXES = {".csv", ".txt"}


class FormatError(ValueError):
    """Malformed instance or scenario file."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.line = line


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _numbers(line, lineno, path, kind=float):
    try:
        return [kind(tok) for tok in line.replace(",", " ").split()]
    except ValueError as exc:
        raise FormatError(f"bad number ({exc})", path, lineno) from None


def parse_routing_text(text: str, path=None) -> RoutingInstance:
    lines = list(_content_lines(text))
    if not lines:
        raise FormatError("missing header 'n Q beta'", path)
    lineno, header = lines[0]
    toks = header.split()
    if len(toks) != 3:
        raise FormatError("header must be 'n Q beta'", path, lineno)
    try:
        n = int(toks[0])
        Q = float(toks[1])
        beta = None if toks[2].lower() == "hard" else float(toks[2])
    except ValueError:
        raise FormatError("header must be 'n Q beta'", path, lineno) from None
    if n < 1:
        raise FormatError("n must be >= 1", path, lineno)
    rows = lines[1:]
    if len(rows) != n + 2:
        raise FormatError(f"expected {n + 2} cost rows, found {len(rows)}", path, rows[-1][0] if rows else lineno)
    matrix = []
    for ln, line in rows:
        vals = _numbers(line, ln, path)
        if len(vals) != n + 2:
            raise FormatError(f"cost row has {len(vals)} entries, expected {n + 2}", path, ln)
        matrix.append(vals)
    try:
        return RoutingInstance(np.array(matrix), Q, beta)
    except ValueError as exc:
        raise FormatError(str(exc), path, lineno) from None


_CUSTOMER_KEYS = {
    "capacity", "initial_inventory", "holding", "stockout_multiplier", "horizon",
    "fixed", "unit", "delivery_table", "holding_table",
}
_REQUIRED = ("capacity", "initial_inventory", "horizon")


def parse_customer_text(text: str, path=None):
    values: dict[str, tuple[int, str]] = {}
    for lineno, line in _content_lines(text):
        if "=" not in line:
            raise FormatError("expected 'key = value'", path, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CUSTOMER_KEYS:
            raise FormatError(f"unknown key {key!r}", path, lineno)
        if key in values:
            raise FormatError(f"duplicate key {key!r}", path, lineno)
        values[key] = (lineno, val)
    for key in _REQUIRED:
        if key not in values:
            raise FormatError(f"missing key {key!r}", path)

    def scalar(key, kind, default=None):
        if key not in values:
            return default
        ln, raw = values[key]
        try:
            return kind(raw)
        except ValueError:
            raise FormatError(f"{key} must be {kind.__name__}", path, ln) from None

    def vector(key):
        if key not in values:
            return None
        ln, raw = values[key]
        return np.array(_numbers(raw, ln, path))

    try:
        spec = CustomerSpec(
            capacity=scalar("capacity", int),
            initial_inventory=scalar("initial_inventory", int),
            holding=scalar("holding", float, 0.0),
            stockout_multiplier=scalar("stockout_multiplier", float, 2.0),
            horizon=scalar("horizon", int),
        )
        table = vector("delivery_table")
        if table is not None:
            costs = DeliveryCostModel.tabular(table)
        else:
            fixed, unit = vector("fixed"), vector("unit")
            costs = DeliveryCostModel(
                fixed if fixed is not None else 0.0, unit if unit is not None else 0.0
            )
        htable = vector("holding_table")
        holding = HoldingPenaltyModel.tabular(htable) if htable is not None else HoldingPenaltyModel.standard(spec)
        costs.tensor(spec.horizon, spec.capacity)
        holding.tensor(spec.horizon, spec.capacity)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None
    return spec, costs, holding


def _looks_like_customer(text: str) -> bool:
    for _, line in _content_lines(text):
        return "=" in line
    return False


def parse_instance_file(path):
    """Load a routing instance, or ``(spec, costs, holding)`` for a customer file."""
    path = Path(path)
    text = path.read_text()
    if _looks_like_customer(text):
        return parse_customer_text(text, path)
    return parse_routing_text(text, path)


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def format_routing_instance(inst: RoutingInstance) -> str:
    beta = "hard" if inst.hard else _fmt(inst.penalty_beta)
    lines = [f"{inst.n} {_fmt(inst.capacity)} {beta}"]
    lines += [" ".join(_fmt(v) for v in row) for row in inst.cost]
    return "\n".join(lines) + "\n"


def format_customer_instance(spec: CustomerSpec, costs: DeliveryCostModel, holding=None) -> str:
    lines = [
        f"capacity = {spec.capacity}",
        f"initial_inventory = {spec.initial_inventory}",
        f"holding = {_fmt(spec.holding)}",
        f"stockout_multiplier = {_fmt(spec.stockout_multiplier)}",
        f"horizon = {spec.horizon}",
    ]
    if costs.table is not None:
        if costs.table.ndim != 1:
            raise ValueError("only day-independent delivery tables can be written")
        lines.append("delivery_table = " + " ".join(_fmt(v) for v in costs.table))
    else:
        if costs.fixed.ndim != 1 or costs.unit.ndim != 1:
            raise ValueError("only day-independent fixed/unit costs can be written")
        lines.append("fixed = " + " ".join(_fmt(v) for v in costs.fixed))
        lines.append("unit = " + " ".join(_fmt(v) for v in costs.unit))
    if holding is not None and holding.shortage_rate == 0.0:
        if holding.state_cost.ndim != 1:
            raise ValueError("only day-independent holding tables can be written")
        lines.append("holding_table = " + " ".join(_fmt(v) for v in holding.state_cost))
    return "\n".join(lines) + "\n"


def write_instance_file(path, instance) -> None:
    if isinstance(instance, RoutingInstance):
        text = format_routing_instance(instance)
    else:
        text = format_customer_instance(*instance)
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# scenario batches


def write_scenario_file(path, batch) -> None:
    """Write a ``rows x m`` nonnegative integer batch (binary, or text by suffix)."""
    path = Path(path)
    batch = np.asarray(batch)
    if batch.ndim != 2:
        raise ValueError("scenario batch must be rows x m")
    if batch.size and (batch.min() < 0 or batch.max() > np.iinfo(np.uint32).max):
        raise ValueError("scenario values must fit in uint32")
    if path.suffix.lower() in TEXT_SUFFIXES:
        with open(path, "w") as fh:
            for col in batch.T:
                fh.write(",".join(str(int(v)) for v in col) + "\n")
        return
    rows, cols = batch.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, rows, cols, DTYPE_U32))
        fh.write(np.ascontiguousarray(batch.T, dtype="<u4").tobytes())


def _parse_scenario_text(path: Path) -> np.ndarray:
    cols = []
    for lineno, line in _content_lines(path.read_text()):
        vals = _numbers(line, lineno, path, int)
        if cols and len(vals) != len(cols[0]):
            raise FormatError(f"scenario has {len(vals)} values, expected {len(cols[0])}", path, lineno)
        if any(v < 0 for v in vals):
            raise FormatError("scenario values must be nonnegative", path, lineno)
        cols.append(vals)
    if not cols:
        return np.zeros((0, 0), dtype=np.uint32)
    return np.asfortranarray(np.array(cols, dtype=np.uint32).T)


def parse_scenario_file(path) -> np.ndarray:
    """Load a scenario batch as a ``rows x m`` uint32 array (columns contiguous)."""
    path = Path(path)
    if path.suffix.lower() in TEXT_SUFFIXES:
        return _parse_scenario_text(path)
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise FormatError(f"file shorter than the {HEADER.size}-byte header", path)
    magic, version, rows, cols, dtype = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", path)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path)
    if dtype != DTYPE_U32:
        raise FormatError(f"unsupported dtype code {dtype}", path)
    expected = rows * cols * 4
    payload = data[HEADER.size :]
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, header implies {expected}", path)
    flat = np.frombuffer(payload, dtype="<u4").astype(np.uint32)
    return flat.reshape(cols, rows).T
