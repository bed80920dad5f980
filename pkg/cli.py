#!/usr/bin/env python3
"""
Command line for the pdls toolkit.

Exit codes: 0 success, 1 usage or input error, 2 verification failure,
3 solver error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from sqlmodel import Session

from approx import approximate, approximate_2path
from exact import brute_force_schedule, brute_force_td_spider, dp_fixed_chains, schedule_single_deadline
from experiments import render_table, run_bench, run_gap_experiment, run_tightness_experiment
from generators import RandomSpec, SpiderSpec, gen_gap, gen_random, gen_td_spider, gen_tight
from io_models import (
    parse_instance,
    parse_schedule,
    parse_spider,
    serialize_instance,
    serialize_schedule,
    serialize_spider,
)
from lpcore import WorkingSet, build_p2, cutting_plane_solve, format_problem, logk_eff
from model import DocumentError, InstanceValidationError, PdlsError, canonical_family, evaluate_schedule, td_spider_to_pdls
from solver_config import SolverSettings, load_settings, set_settings

logger = logging.getLogger("pdls")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_SOLVER = 3


class UsageError(Exception):
    """Bad command-line usage"""
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write(payload: bytes, output: Optional[str]) -> None:
    if output:
        Path(output).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode("utf-8") + "\n")


def _settings(args) -> SolverSettings:
    settings = load_settings(args.config)
    rounding = {
        "gamma": getattr(args, "gamma", None),
        "max_samples": getattr(args, "samples", None),
        "seed": getattr(args, "seed", None),
    }
    if getattr(args, "no_shortcut", False):
        rounding["exact_shortcut"] = False
    exact = {
        "dp_state_cap": getattr(args, "state_cap", None),
        "brute_force_cap": getattr(args, "bf_cap", None),
    }
    settings = settings.with_overrides(rounding=rounding, exact=exact)
    set_settings(settings)
    return settings


def cmd_gen(args) -> int:
    if args.kind == "random":
        if args.n is None or args.q is None or args.k is None:
            raise UsageError("random instances need --n, --q and --k")
        spec = RandomSpec(n=args.n, q=args.q, k=args.k, p_max=args.p_max, w_max=args.w_max, seed=args.seed)
        _write(serialize_instance(gen_random(spec)), args.output)
    elif args.kind == "gap":
        if args.n is None:
            raise UsageError("gap instances need --n")
        construction = gen_gap(args.n)
        _write(serialize_instance(construction.instance), args.output)
    elif args.kind == "tight":
        if args.k is None:
            raise UsageError("tight instances need --k")
        construction = gen_tight(args.k, args.gamma)
        print(f"tight: n={construction.instance.n} groups of {construction.group_size} paths", file=sys.stderr)
        _write(serialize_instance(construction.instance), args.output)
    else:
        if not args.legs:
            raise UsageError("spiders need --legs, e.g. --legs 2,3")
        lengths = [int(x) for x in args.legs.split(",")]
        spec = SpiderSpec(leg_lengths=lengths, theta_min=args.theta_min, theta_max=args.theta_max, seed=args.seed)
        _write(serialize_spider(gen_td_spider(spec)), args.output)
    return EXIT_OK


def cmd_solve(args) -> int:
    settings = _settings(args)
    instance = parse_instance(Path(args.input).read_bytes())
    stats = {"method": args.method}
    if args.method == "exact-dp":
        result = dp_fixed_chains(instance, settings)
        schedule = result.schedule
    elif args.method == "exact-bf":
        result = brute_force_schedule(instance, settings)
        schedule = result.schedule
    elif args.method == "single-deadline":
        result = schedule_single_deadline(instance)
        schedule = result.schedule
    elif args.method == "approx":
        result = approximate(instance, settings)
        schedule = result.schedule
        stats.update({
            "route": result.route,
            "lp_value": result.lp_value,
            "feas_rate": result.feas_rate,
            "samples_used": result.samples_used,
            "first_passing_penalty": result.first_passing_penalty,
            "bound": result.bound,
            "log_convention": result.log_convention,
            "rng": result.rng_algorithm,
            "seed": result.seed,
        })
    else:
        result = approximate_2path(instance, settings=settings)
        schedule = result.schedule
        stats.update({
            "lp_value": result.lp_value,
            "alpha": result.alpha,
            "grid_mean_penalty": result.mean_penalty,
            "grid_stderr": result.stderr,
            "rng": result.rng_algorithm,
            "seed": result.seed,
        })

    stats["penalty"] = schedule.penalty
    lp_value = stats.get("lp_value")
    if lp_value:
        stats["ratio"] = schedule.penalty / lp_value
    elif lp_value is not None:
        stats["ratio"] = 1.0 if schedule.penalty == 0 else None
    stats["logk_eff"] = logk_eff(instance.k)

    _write(serialize_schedule(schedule), args.output)
    print(f"penalty {schedule.penalty}")
    print(json.dumps({"stats": stats}, sort_keys=True))
    return EXIT_OK


def cmd_verify(args) -> int:
    instance = parse_instance(Path(args.input).read_bytes())
    claimed = parse_schedule(Path(args.schedule).read_bytes())
    try:
        result = evaluate_schedule(instance, claimed.order)
    except PdlsError as e:
        print(f"verification failed: {e}")
        return EXIT_VERIFY
    problems: List[str] = []
    if not result.feasible:
        problems.append(result.violation)
    if claimed.penalty != result.penalty:
        problems.append(f"penalty mismatch: claimed {claimed.penalty}, actual {result.penalty}")
    if set(claimed.late) != set(result.late):
        problems.append("late set mismatch")
    if {int(k): v for k, v in claimed.completions.items()} != result.completions:
        problems.append("completion times mismatch")
    if problems:
        for problem in problems:
            print(f"verification failed: {problem}")
        return EXIT_VERIFY
    print(f"ok: penalty {result.penalty}, {len(result.late)} late jobs")
    return EXIT_OK


def cmd_lp_dump(args) -> int:
    settings = _settings(args)
    instance = parse_instance(Path(args.input).read_bytes())
    working = WorkingSet(canonical_family(instance))
    if args.final:
        cp = cutting_plane_solve(instance, settings.rounding.gamma, settings=settings)
        for family in cp.working_set[1:]:
            working.add(family)
    sys.stdout.write(format_problem(build_p2(instance, working)))
    return EXIT_OK


def cmd_bench(args) -> int:
    settings = _settings(args)
    methods = args.methods.split(",")
    rows = run_bench(Path(args.corpus), methods, settings)
    report = {"corpus": str(args.corpus), "rows": [asdict(r) for r in rows]}
    Path(args.report).write_text(json.dumps(report, indent=2, default=str), encoding="utf-8")
    print(render_table(rows))
    if args.db:
        from bench_store import get_engine, init_db, store_bench_rows

        engine = get_engine(args.db)
        init_db(engine)
        with Session(engine) as session:
            run = store_bench_rows(session, str(args.corpus), rows, settings.model_dump_json())
            print(f"Stored: run={run.id} rows={len(rows)} db={args.db}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    settings = _settings(args)
    if args.name == "gap":
        reports = [run_gap_experiment(n, args.families, args.seed, settings).to_dict() for n in args.n]
        for r in reports:
            print(f"n={r['n']:<4} opt={r['exact_opt']:<4} witness={r['witness_objective']:.4f} "
                  f"H_n={r['harmonic_bound']:.4f} gap={r['gap']:.4f}")
        payload = {"experiment": "gap", "reports": reports}
    else:
        rows = run_tightness_experiment(args.k, args.gamma, args.trials, args.seed, settings)
        for r in rows:
            print(f"k={r.k:<3} n={r.n:<6} m={r.group_size:<3} estimate={r.estimate:.4f} "
                  f"prediction={r.prediction:.4f} within3sigma={r.within_3sigma}")
        payload = {"experiment": "tightness", "rows": [asdict(r) for r in rows]}
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_td(args) -> int:
    settings = _settings(args)
    spider = parse_spider(Path(args.input).read_bytes())
    brute = brute_force_td_spider(spider, args.connectivity, settings)
    reduced = dp_fixed_chains(td_spider_to_pdls(spider), settings)
    print(f"seed set {brute.opt_seed_size} (order {list(brute.permutation)}), "
          f"late jobs {reduced.opt_penalty}")
    return EXIT_OK if brute.opt_seed_size == reduced.opt_penalty else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdls", description="Chain-precedence deadline scheduling toolkit")
    parser.add_argument("--config", help="Solver YAML (default: config/solver.yaml or PDLS_CONFIG)")
    parser.add_argument("--debug", action="store_true", help="Debug logging to stderr")
    parser.add_argument("--log-level", default=None, help="Log level (default: PDLS_LOG_LEVEL or WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate an instance or spider")
    gen.add_argument("--kind", required=True, choices=["random", "gap", "tight", "td-spider"])
    gen.add_argument("--n", type=int)
    gen.add_argument("--q", type=int)
    gen.add_argument("--k", type=int)
    gen.add_argument("--p-max", type=int, default=5)
    gen.add_argument("--w-max", type=int, default=9)
    gen.add_argument("--gamma", type=float, default=4.0)
    gen.add_argument("--legs", help="Comma-separated leg lengths")
    gen.add_argument("--theta-min", type=int, default=1)
    gen.add_argument("--theta-max", type=int)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output")
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", help="Solve an instance")
    solve.add_argument("-i", "--input", required=True)
    solve.add_argument("--method", required=True,
                       choices=["exact-dp", "exact-bf", "single-deadline", "approx", "approx2"])
    solve.add_argument("--gamma", type=float)
    solve.add_argument("--samples", type=int)
    solve.add_argument("--seed", type=int)
    solve.add_argument("--no-shortcut", action="store_true", help="Always run the LP pipeline")
    solve.add_argument("--state-cap", type=int)
    solve.add_argument("--bf-cap", type=int)
    solve.add_argument("-o", "--output")
    solve.set_defaults(func=cmd_solve)

    verify = sub.add_parser("verify", help="Check a schedule against an instance")
    verify.add_argument("-i", "--input", required=True)
    verify.add_argument("-s", "--schedule", required=True)
    verify.set_defaults(func=cmd_verify)

    lp = sub.add_parser("lp", help="LP utilities")
    lp_sub = lp.add_subparsers(dest="lp_command", required=True)
    dump = lp_sub.add_parser("dump", help="Print the compact program")
    dump.add_argument("-i", "--input", required=True)
    dump.add_argument("--final", action="store_true", help="Include every family the cutting-plane loop adds")
    dump.add_argument("--gamma", type=float)
    dump.set_defaults(func=cmd_lp_dump)

    bench = sub.add_parser("bench", help="Run the method matrix over a corpus")
    bench.add_argument("--corpus", required=True)
    bench.add_argument("--report", required=True)
    bench.add_argument("--methods", default="exact-dp,approx,approx2")
    bench.add_argument("--gamma", type=float)
    bench.add_argument("--samples", type=int)
    bench.add_argument("--seed", type=int)
    bench.add_argument("--no-shortcut", action="store_true")
    bench.add_argument("--state-cap", type=int)
    bench.add_argument("--db", help="Also store rows in this SQLite file")
    bench.set_defaults(func=cmd_bench)

    experiment = sub.add_parser("experiment", help="Construction experiments")
    experiment.add_argument("name", choices=["gap", "tightness"])
    experiment.add_argument("--n", type=int, nargs="+", default=[8, 16, 32])
    experiment.add_argument("--families", type=int, default=200)
    experiment.add_argument("--k", type=int, nargs="+", default=[2, 4, 8])
    experiment.add_argument("--gamma", type=float, default=1.0)
    experiment.add_argument("--trials", type=int, default=1000)
    experiment.add_argument("--seed", type=int, default=0)
    experiment.add_argument("--report")
    experiment.set_defaults(func=cmd_experiment)

    td = sub.add_parser("td", help="Compare a spider's seed set with its scheduling reduction")
    td.add_argument("-i", "--input", required=True)
    td.add_argument("--connectivity", choices=["hub", "strict"], default="hub")
    td.set_defaults(func=cmd_td)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    level = "DEBUG" if args.debug else (args.log_level or os.getenv("PDLS_LOG_LEVEL", "WARNING"))
    logging.basicConfig(level=level.upper(), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logger.debug("command %s", args.command)

    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DocumentError, InstanceValidationError, FileNotFoundError, ValueError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PdlsError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
