"""Command line front end.

Subcommands: ``optimize`` (one run), ``validate`` (check a given design),
``bruteforce`` (exhaustive optimum on tiny instances), ``bench`` (a TOML
plan of seeded replications) and ``summarize`` (aggregate result files).

Exit codes: 0 success, 2 infeasible instance or design, 3 input error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import hydraulics
from .experiments import ExperimentPlan, render_summary, run_experiment, summarize
from .inp import (
    InpParseError,
    RunRecord,
    parse_instance,
    parse_solution,
    parse_type_catalog,
    read_run_records,
    write_run_record,
    write_solution,
)
from .model import InstanceError, solution_cost
from .search import (
    FeasibilityChecker,
    InfeasibleInstanceError,
    SearchParams,
    brute_force_optimum,
    run,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3

CATALOG_ENV_VAR = "WDNOPT_CATALOG"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--instance", required=True, help="INP instance file")
    parser.add_argument("--catalog", default=None,
                        help=f"pipe type catalog CSV (default: ${CATALOG_ENV_VAR})")
    parser.add_argument("--h-min", type=float, default=20.0,
                        help="minimum pressure head at junctions, m")
    parser.add_argument("--v-max", type=float, default=2.0,
                        help="maximum pipe velocity, m/s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wdnopt",
        description="Pipe-type optimizer for gravity-fed water networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="run the search on one instance")
    _add_common(p_opt)
    p_opt.add_argument("--time-limit", type=float, default=60.0)
    p_opt.add_argument("--seed", type=int, default=0)
    p_opt.add_argument("--alpha", type=float, default=0.05)
    p_opt.add_argument("--factor", type=int, default=4, help="initial type reduction factor")
    p_opt.add_argument("--pool", type=int, default=3, help="solution pool size")
    p_opt.add_argument("--variant", default="full",
                       choices=["full", "base", "redu-only", "pool-only",
                                "pert-only", "spt-only"])
    p_opt.add_argument("--pert-prob", type=float, default=None,
                       help="probability of the dispersed perturbation "
                            "(default 1 - alpha)")
    p_opt.add_argument("--max-iterations", type=int, default=None,
                       help="optional deterministic iteration cap")
    p_opt.add_argument("--out", default=None, help="append the run record here "
                                                   "(default: stdout)")
    p_opt.add_argument("--best-out", default=None, help="write the best design CSV here")

    p_val = sub.add_parser("validate", help="check a design against the constraints")
    _add_common(p_val)
    p_val.add_argument("--solution", required=True, help="design CSV (pipe_id,type_index)")

    p_bf = sub.add_parser("bruteforce", help="exhaustive optimum for tiny instances")
    _add_common(p_bf)
    p_bf.add_argument("--limit", type=int, default=1_000_000,
                      help="refuse search spaces larger than this")
    p_bf.add_argument("--best-out", default=None)

    p_bench = sub.add_parser("bench", help="run a TOML experiment plan")
    p_bench.add_argument("--plan", required=True)

    p_sum = sub.add_parser("summarize", help="aggregate run record files")
    p_sum.add_argument("--records", required=True, nargs="+")

    return parser


def _load_inputs(args):
    catalog_path = args.catalog or os.environ.get(CATALOG_ENV_VAR)
    if not catalog_path:
        raise InpParseError(
            f"no catalog given: pass --catalog or set ${CATALOG_ENV_VAR}"
        )
    net = parse_instance(Path(args.instance).read_text())
    catalog = parse_type_catalog(Path(catalog_path).read_text())
    return net, catalog


def _cmd_optimize(args) -> int:
    net, catalog = _load_inputs(args)
    params = SearchParams(
        alpha=args.alpha, f0=args.factor, nu=args.pool,
        time_limit_s=args.time_limit, seed=args.seed, variant=args.variant,
        h_min=args.h_min, v_max=args.v_max, pert_prob=args.pert_prob,
        max_iterations=args.max_iterations,
    )
    best, stats = run(net, catalog, params)
    record = RunRecord(
        instance_id=Path(args.instance).stem,
        seed=args.seed,
        time_limit_s=args.time_limit,
        variant=args.variant,
        best_cost=solution_cost(best, net, catalog),
        time_to_best_s=stats.time_to_best_s,
        iterations=stats.iterations,
        simulator_calls=stats.simulator_calls,
        tested_solutions=stats.tested_solutions,
        feasible_fraction=stats.feasible_fraction,
    )
    if args.out:
        with open(args.out, "a") as fh:
            write_run_record(record, fh)
    else:
        write_run_record(record, sys.stdout)
    if args.best_out:
        with open(args.best_out, "w") as fh:
            write_solution(best, fh)
    return EXIT_OK


def _cmd_validate(args) -> int:
    net, catalog = _load_inputs(args)
    solution = parse_solution(Path(args.solution).read_text())
    verdict = hydraulics.validate(net, catalog, solution,
                                  h_min=args.h_min, v_max=args.v_max)
    if verdict.feasible:
        print(f"feasible: cost={solution_cost(solution, net, catalog):.6g}")
        return EXIT_OK
    v = verdict.violation
    print(f"infeasible: {v.kind} at period {v.period}"
          + (f" on {v.element}" if v.element else ""))
    return EXIT_INFEASIBLE


def _cmd_bruteforce(args) -> int:
    net, catalog = _load_inputs(args)
    checker = FeasibilityChecker(net, catalog, h_min=args.h_min, v_max=args.v_max)
    best, cost = brute_force_optimum(net, catalog, checker, limit=args.limit)
    print(f"optimum cost={cost:.6g} after {checker.tested} tested designs")
    if args.best_out:
        with open(args.best_out, "w") as fh:
            write_solution(best, fh)
    return EXIT_OK


def _cmd_bench(args) -> int:
    plan = ExperimentPlan.from_toml(args.plan)
    records = run_experiment(plan)
    if plan.output:
        with open(plan.output, "a") as fh:
            for rec in records:
                write_run_record(rec, fh)
    else:
        for rec in records:
            write_run_record(rec, sys.stdout)
    failed = sum(1 for r in records if r.error is not None)
    if failed:
        print(f"{failed} of {len(records)} runs failed", file=sys.stderr)
        if failed == len(records):
            return EXIT_INPUT
    return EXIT_OK


def _cmd_summarize(args) -> int:
    records = []
    for path in args.records:
        records.extend(read_run_records(Path(path).read_text()))
    print(render_summary(summarize(records)))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "optimize": _cmd_optimize,
        "validate": _cmd_validate,
        "bruteforce": _cmd_bruteforce,
        "bench": _cmd_bench,
        "summarize": _cmd_summarize,
    }
    try:
        return handlers[args.command](args)
    except InfeasibleInstanceError as exc:
        print(f"infeasible instance: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InpParseError, InstanceError, OSError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
