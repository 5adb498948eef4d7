"""Command-line entry point.

Randomness: one ``--seed`` feeds every command.  Scenario generation, tour
search and experiment streams are separate ``SeedSequence`` children of it,
so changing one consumer never shifts another's draws.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .diagnostics import measure_dsirp_peak, measure_split_peak, run_oracle_checks
from .dsirp import CustomerSpec, DeliveryCostModel, batched_expected_cost
from .engine import BackendConfig, ProblemDims, default_threads, memory_footprint, write_timing_csv
from .formats import FormatError, parse_instance_file, parse_scenario_file, write_scenario_file
from .saa import (
    DistributionSpec,
    euclidean_instance,
    generate_scenarios,
    log_log_slope,
    run_bias_experiment,
    run_convergence_experiment,
    run_quality_experiment,
    run_time_budget_experiment,
    scaling_benchmark,
)
from .split import GiantTour, RoutingInstance, batched_expected_split

log = logging.getLogger("scenario_dp")

SUBCOMMANDS = (
    "split-eval", "dsirp-eval", "oracle-check", "saa-bias", "saa-convergence",
    "quality-vs-scenarios", "time-budget", "scaling-bench", "mem-report", "gen-scenarios",
)


class UsageError(Exception):
    pass


def _ints(text: str) -> list[int]:
    return [int(float(t)) for t in text.replace(",", " ").split()]


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="instance file (routing or customer format)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenarios", help="scenario file (.bin, or .csv/.txt)")
    src.add_argument("--gen", metavar="DIST", help="generate scenarios: uniform:LO:HI | normal:MEAN:STD:LO:HI")
    p.add_argument("--m", type=int, default=1000, help="scenario count for --gen (default 1000)")
    p.add_argument("--mode", choices=("single", "multi"), default="single")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default $SCENARIO_DP_THREADS or 1)")
    p.add_argument("--batch-size", type=int, default=1 << 20)
    p.add_argument("--mem-budget", type=int, default=1 << 30, help="bytes per batch")
    cap = p.add_mutually_exclusive_group()
    cap.add_argument("--beta", type=float, help="penalized capacity: cost per excess demand unit")
    cap.add_argument("--hard", action="store_true", help="hard capacity (default unless the instance sets beta)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--timing-csv", help="write per-batch timing records here")
    p.add_argument("--allow-infeasible", action="store_true", help="exit 0 even if some scenarios are infeasible")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenario-dp",
        description="Scenario-batched min-plus DP for stochastic split and inventory problems.",
        epilog="Sub-streams of --seed: scenario generation, tour search, experiment instances.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("split-eval", help="split a giant tour under every scenario")
    _common(p)
    p.add_argument("--tour", help="comma-separated customer order (default 1..n)")
    p.add_argument("--method", choices=("auto", "linear", "quadratic"), default="auto")
    p.add_argument("--show", type=int, default=10, help="print per-scenario values for the first N scenarios")

    p = sub.add_parser("dsirp-eval", help="solve the order-up-to DP for every scenario")
    _common(p)
    p.add_argument("--show", type=int, default=10)

    p = sub.add_parser("oracle-check", help="compare DPs with enumeration oracles")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    for name, helptext in (
        ("saa-bias", "in-sample vs out-of-sample SAA values"),
        ("saa-convergence", "spread of SAA values across replications"),
        ("quality-vs-scenarios", "out-of-sample cost vs training scenarios"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--n", type=int, default=6, help="customers of the generated instance")
        p.add_argument("--capacity", type=float, default=20.0)
        p.add_argument("--m-list", default="10,100,1000")
        p.add_argument("--reps", type=int, default=10)
        p.add_argument("--eval-size", type=int, default=100_000)
        p.add_argument("--budget", type=int, default=300, help="local-search candidates per replication")

    p = sub.add_parser("time-budget", help="best cost within wall-clock budgets per backend")
    _common(p)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--capacity", type=float, default=40.0)
    p.add_argument("--budgets", default="0.5,1,2")
    p.add_argument("--modes", default="single,multi:8", help="comma list of single | multi:T")
    p.add_argument("--scaling-m", default="", help="also time the split at these scenario counts")

    p = sub.add_parser("scaling-bench", help="wall time of the batched split vs scenario count")
    _common(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--capacity", type=float, default=50.0)
    p.add_argument("--m-list", default="1000,10000,100000")
    p.add_argument("--repeats", type=int, default=3)

    p = sub.add_parser("mem-report", help="predicted vs measured memory")
    _common(p)
    p.add_argument("--kind", choices=("split", "dsirp"), default="split")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--capacity", type=int, default=100, help="U for dsirp, Q for split")
    p.add_argument("--horizon", type=int, default=6)
    p.add_argument("--m-list", default="10000,100000")
    p.add_argument("--measure", action="store_true", help="run and measure the traced peak")

    p = sub.add_parser("gen-scenarios", help="write a generated scenario batch")
    p.add_argument("--gen", required=True, metavar="DIST")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _config(args) -> BackendConfig:
    threads = args.threads if args.threads is not None else default_threads()
    if args.mode == "single" and args.threads not in (None, 1):
        raise UsageError("--threads > 1 requires --mode multi")
    return BackendConfig(args.mode, threads, args.batch_size, args.mem_budget)


def _result_config(args, **extra) -> dict:
    """Settings that determine results (execution settings go to the sidecar)."""
    keep = ("instance", "scenarios", "gen", "m", "beta", "hard", "seed", "tour", "method",
            "n", "capacity", "m_list", "reps", "eval_size", "budget", "trials", "kind", "horizon")
    out = {k: getattr(args, k) for k in keep if getattr(args, k, None) is not None}
    if getattr(args, "scenarios", None):
        out.pop("m", None)
    if not getattr(args, "hard", True):
        out.pop("hard", None)
    out.update(extra)
    return out


def _write_report(path, header: dict, columns, rows, args) -> None:
    if not path:
        return
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for key in sorted(header):
            fh.write(f"# {key}={header[key]}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")
    _write_sidecar(path, args)


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_sidecar(path: Path, args) -> None:
    meta = {k: v for k, v in sorted(vars(args).items()) if not callable(v)}
    meta["backend"] = backend_name()
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _routing_instance(args) -> RoutingInstance:
    if args.instance:
        inst = parse_instance_file(args.instance)
        if not isinstance(inst, RoutingInstance):
            raise UsageError(f"{args.instance} is a customer file; this command needs a routing instance")
    elif getattr(args, "n", None):
        inst = euclidean_instance(args.n, args.capacity, args.seed)
    else:
        raise UsageError("--instance is required")
    if args.beta is not None:
        inst = inst.with_beta(args.beta)
    elif args.hard:
        inst = inst.with_beta(None)
    return inst


def _dist(args) -> DistributionSpec:
    return DistributionSpec.parse(args.gen or "uniform:1:10", seed=args.seed)


def _scenario_batch(args, rows: int) -> np.ndarray:
    if args.scenarios:
        batch = parse_scenario_file(args.scenarios)
        if batch.shape[0] != rows:
            raise UsageError(f"scenario file has {batch.shape[0]} rows, instance needs {rows}")
        return batch
    if args.gen:
        return generate_scenarios(_dist(args), rows, args.m)
    raise UsageError("one of --scenarios or --gen is required")


def _exit_status(res, args) -> int:
    if res.errors:
        first = next(iter(res.errors.items()))
        print(f"error: {len(res.errors)} scenario(s) failed, first #{first[0]}: {first[1]}", file=sys.stderr)
        return 1
    if res.infeasible_count and not args.allow_infeasible:
        print(f"error: {res.infeasible_count} infeasible scenario(s); pass --allow-infeasible to accept", file=sys.stderr)
        return 1
    return 0


def cmd_split_eval(args) -> int:
    inst = _routing_instance(args)
    q = _scenario_batch(args, inst.n)
    tour = GiantTour(tuple(_ints(args.tour))) if args.tour else GiantTour.identity(inst.n)
    res = batched_expected_split(inst, tour, q, _config(args), method=args.method)
    for s in range(min(args.show, len(res))):
        sol = res.payloads[s]
        vals = ",".join(_num(v) for v in sol.values)
        routes = " ".join(str(r) for r in sol.routes()) if sol.feasible else "infeasible"
        print(f"scenario {s}: total {_num(sol.total)} V = {vals} routes {routes}")
    print(f"mean {_num(res.mean)} over {len(res) - res.infeasible_count} feasible of {len(res)} scenarios")
    rows = []
    for s in range(len(res)):
        sol = res.payloads[s]
        rows.append((s, float(sol.total), sol.n_routes if sol.feasible else 0, " ".join(_num(v) for v in sol.values)))
    _write_report(args.out, _result_config(args, mean=repr(res.mean), infeasible=res.infeasible_count),
                  ("scenario", "total", "routes", "values"), rows, args)
    if args.timing_csv:
        write_timing_csv(res.timings, args.timing_csv)
    return _exit_status(res, args)


def _num(v: float) -> str:
    v = float(v)
    if np.isinf(v):
        return "inf"
    return str(int(v)) if v.is_integer() else repr(v)


def cmd_dsirp_eval(args) -> int:
    if not args.instance:
        raise UsageError("--instance (customer file) is required")
    loaded = parse_instance_file(args.instance)
    if isinstance(loaded, RoutingInstance):
        raise UsageError(f"{args.instance} is a routing instance; dsirp-eval needs a customer file")
    spec, costs, holding = loaded
    D = _scenario_batch(args, spec.horizon)
    res = batched_expected_cost(spec, costs, D, _config(args), holding)
    for s in range(min(args.show, len(res))):
        sch = res.payloads[s]
        print(
            f"scenario {s}: total {_num(sch.total)} deliver {''.join(map(str, sch.deliver_flags))} "
            f"qty {','.join(map(str, sch.quantities))} inventory {','.join(map(str, sch.end_inventories))}"
        )
    print(f"mean {_num(res.mean)} over {len(res)} scenarios")
    rows = []
    for s in range(len(res)):
        sch = res.payloads[s]
        rows.append((s, float(sch.total), "".join(map(str, sch.deliver_flags)),
                     " ".join(map(str, sch.quantities)), " ".join(map(str, sch.route_options))))
    _write_report(args.out, _result_config(args, mean=repr(res.mean)),
                  ("scenario", "total", "deliver", "quantities", "options"), rows, args)
    if args.timing_csv:
        write_timing_csv(res.timings, args.timing_csv)
    return _exit_status(res, args)


def cmd_oracle_check(args) -> int:
    summary = run_oracle_checks(args.trials, args.seed)
    print(f"{summary.comparisons} comparisons, {len(summary.mismatches)} mismatches")
    for line in summary.mismatches[:10]:
        print("  " + line)
    if args.out:
        _write_report(args.out, {"trials": args.trials, "seed": args.seed}, ("comparisons", "mismatches"),
                      [(summary.comparisons, len(summary.mismatches))], args)
    return 0 if summary.ok else 1


def _emit(report, args) -> int:
    report.config["seed"] = args.seed
    if args.instance:
        report.config["instance"] = args.instance
    else:
        report.config.update(n=args.n, capacity=args.capacity)
    if args.out:
        report.write(args.out)
        _write_sidecar(Path(args.out), args)
    else:
        sys.stdout.write(report.to_csv())
    return 0


def cmd_saa(args) -> int:
    inst = _routing_instance(args)
    dist = _dist(args)
    cfg = _config(args)
    name = Path(args.instance).stem if args.instance else f"euclid-n{inst.n}"
    m_list = _ints(args.m_list)
    if args.command == "saa-bias":
        rep = run_bias_experiment(inst, dist, m_list, args.reps, eval_size=args.eval_size,
                                  budget=args.budget, config=cfg, name=name)
    elif args.command == "saa-convergence":
        rep = run_convergence_experiment(inst, dist, m_list, args.reps, budget=args.budget, config=cfg, name=name)
    else:
        rep = run_quality_experiment(inst, dist, m_list, args.eval_size, budget=args.budget, config=cfg, name=name)
    return _emit(rep, args)


def _modes(text: str, batch_size: int, budget: int):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok == "single":
            out.append(("single", BackendConfig("single", 1, batch_size, budget)))
        elif tok.startswith("multi:"):
            t = int(tok.split(":", 1)[1])
            out.append((tok, BackendConfig("multi", t, batch_size, budget)))
        else:
            raise UsageError(f"bad mode {tok!r}; use single or multi:T")
    return out


def cmd_time_budget(args) -> int:
    inst = _routing_instance(args)
    rep = run_time_budget_experiment(
        inst, _dist(args), _floats(args.budgets), _modes(args.modes, args.batch_size, args.mem_budget),
        m=args.m, scaling_m=_ints(args.scaling_m) if args.scaling_m else (),
        name=Path(args.instance).stem if args.instance else f"euclid-n{inst.n}",
    )
    return _emit(rep, args)


def cmd_scaling_bench(args) -> int:
    inst = _routing_instance(args)
    m_list = _ints(args.m_list)
    pts = scaling_benchmark(inst, _dist(args), m_list, _config(args), args.repeats)
    for m, secs in pts:
        print(f"m={m} wall={secs:.4f}s per-scenario={secs / m * 1e6:.3f}us")
    slope = log_log_slope(*zip(*pts)) if len(pts) >= 2 else float("nan")
    print(f"log-log slope {slope:.3f} (backend {backend_name()}, mode {args.mode})")
    _write_report(args.out, _result_config(args), ("m", "wall_s"), pts, args)
    return 0


def cmd_mem_report(args) -> int:
    rows = []
    for m in _ints(args.m_list):
        if args.kind == "split":
            inst = euclidean_instance(args.n, args.capacity, args.seed)
            dims = ProblemDims("split", m, n=args.n)
            pred = memory_footprint(dims).total
            measured = ""
            if args.measure:
                sc = generate_scenarios(_dist(args), args.n, m)
                measured, pred = measure_split_peak(inst, sc)
        else:
            spec = CustomerSpec(args.capacity, args.capacity // 2, 1.0, 3.0, args.horizon)
            costs = DeliveryCostModel(20.0, 0.5)
            dims = ProblemDims("dsirp", m, capacity=args.capacity, horizon=args.horizon)
            pred = memory_footprint(dims).total
            measured = ""
            if args.measure:
                sc = generate_scenarios(DistributionSpec.parse(args.gen or f"uniform:0:{args.capacity // 2}", args.seed),
                                        args.horizon, m)
                measured, pred = measure_dsirp_peak(spec, costs, sc)
        ratio = f"{measured / pred:.3f}" if measured != "" else ""
        print(f"{args.kind} m={m} predicted={pred} measured={measured} ratio={ratio}")
        rows.append((m, pred, measured, ratio))
    _write_report(args.out, _result_config(args), ("m", "predicted_bytes", "measured_bytes", "ratio"), rows, args)
    return 0


def cmd_gen_scenarios(args) -> int:
    batch = generate_scenarios(DistributionSpec.parse(args.gen, args.seed), args.rows, args.m)
    write_scenario_file(args.out, batch)
    print(f"wrote {args.rows}x{args.m} scenarios to {args.out}")
    return 0


HANDLERS = {
    "split-eval": cmd_split_eval,
    "dsirp-eval": cmd_dsirp_eval,
    "oracle-check": cmd_oracle_check,
    "saa-bias": cmd_saa,
    "saa-convergence": cmd_saa,
    "quality-vs-scenarios": cmd_saa,
    "time-budget": cmd_time_budget,
    "scaling-bench": cmd_scaling_bench,
    "mem-report": cmd_mem_report,
    "gen-scenarios": cmd_gen_scenarios,
}


def dispatch(args) -> int:
    handler = HANDLERS.get(args.command)
    if handler is None:
        raise UsageError(f"unknown subcommand {args.command!r}")
    return handler(args)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return 2
    try:
        return dispatch(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
