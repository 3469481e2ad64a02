"""Command-line interface.

Exit codes: 0 success, 1 domain failure (invalid instance, illegal plan,
unsatisfiable), 2 usage or I/O error, 3 timeout without any solution.
"""

from __future__ import annotations

import argparse
import logging
import random
import sys
from pathlib import Path

from . import __version__
from .flow import Network, simulate
from .ingest import IngestError, emit_baseline, emit_facts, parse_baseline, parse_instance
from .model import validate
from .objective import ObjectiveError, parse_objective
from .pcu import pcu_from_decimal, pcu_to_decimal
from .search import (
    DECISION,
    OPTIMISE,
    SATISFIED,
    TIMEOUT_NO_SOLUTION,
    UNSATISFIABLE,
    PlanSpaceTooLarge,
    SearchProblem,
    check_plan,
    solve,
)
from .timeline import PlanError, SignalPlan, identity_plan, timeline_csv

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_TIMEOUT = 3

log = logging.getLogger("signalopt")


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Fail(EXIT_USAGE, f"cannot read {path}: {exc.strerror or exc}") from None


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise _Fail(EXIT_USAGE, f"cannot write {path}: {exc.strerror or exc}") from None


def _pcu_arg(args, text):
    if text is None:
        return None
    try:
        return pcu_from_decimal(text) if args.decimal_input else int(text)
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, f"bad PCU value {text!r}: {exc}") from None


def _load(args):
    text = _read(args.instance)
    try:
        return parse_instance(
            text,
            decimal=args.decimal_input,
            horizon=args.horizon,
            k=args.k,
            bound=_pcu_arg(args, getattr(args, "bound", None)),
        )
    except IngestError as exc:
        raise _Fail(EXIT_USAGE, f"{args.instance}: {exc}") from None


def _load_valid(args):
    instance = _load(args)
    problems = validate(instance)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        raise _Fail(EXIT_DOMAIN, f"{args.instance}: {len(problems)} violation(s)")
    return instance


def _plan(args, instance) -> SignalPlan:
    if not getattr(args, "plan", None):
        return identity_plan(instance)
    try:
        return SignalPlan.from_json(_read(args.plan))
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, f"{args.plan}: {exc}") from None


def _problem(args, instance, mode=OPTIMISE):
    baseline = {}
    if getattr(args, "baseline", None):
        try:
            baseline = parse_baseline(_read(args.baseline), instance, decimal=args.decimal_input)
        except IngestError as exc:
            raise _Fail(EXIT_USAGE, f"{args.baseline}: {exc}") from None
    try:
        objective = parse_objective(getattr(args, "objective", None) or "", instance)
        return SearchProblem(
            instance,
            objective=objective,
            baseline=baseline,
            mode=mode,
            timeout=getattr(args, "timeout", None),
        )
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, str(exc)) from None


def _fmt(v: int) -> str:
    return f"{v} ({pcu_to_decimal(v)})"


# --- subcommands -----------------------------------------------------------


def cmd_check(args) -> int:
    instance = _load(args)
    problems = validate(instance)
    for p in problems:
        print(p)
    if problems:
        return EXIT_DOMAIN
    print(f"ok: {len(instance.junctions)} junctions, {len(instance.links)} links")
    return EXIT_OK


def cmd_simulate(args) -> int:
    instance = _load_valid(args)
    plan = _plan(args, instance)
    problem = _problem(args, instance)
    try:
        report = check_plan(problem, plan)
    except PlanError as exc:
        raise _Fail(EXIT_DOMAIN, f"malformed plan: {exc}") from None
    if not report.legal:
        for v in report.k_violations:
            print(f"illegal: {v}", file=sys.stderr)
        return EXIT_DOMAIN
    trace = simulate(instance, plan, tracked=problem.objective.increment_links())
    if args.trace_out:
        _write(args.trace_out, trace.to_csv())
    if args.timeline_out:
        _write(args.timeline_out, timeline_csv(instance, plan))
    print(f"horizon: {instance.horizon}")
    for lid in instance.goal_links:
        print(f"counter {lid}: {_fmt(trace.final_counter(lid))}")
    print("objective: " + ", ".join(_fmt(v) for v in report.value))
    return EXIT_OK


def cmd_solve(args) -> int:
    instance = _load_valid(args)
    mode = DECISION if args.mode == "decision" else OPTIMISE
    problem = _problem(args, instance, mode)

    def improved(value, plan):
        print("incumbent: " + ", ".join(_fmt(v) for v in value), flush=True)

    try:
        result = solve(problem, args.engine, args.beam_width, improved)
    except PlanSpaceTooLarge as exc:
        raise _Fail(EXIT_USAGE, f"{exc}; use --engine bnb or beam") from None
    print(result.to_json(), end="")
    if result.plan is not None and args.plan_out:
        _write(args.plan_out, result.plan.to_json())
    if result.status == UNSATISFIABLE:
        return EXIT_DOMAIN
    if result.status == TIMEOUT_NO_SOLUTION:
        return EXIT_TIMEOUT
    return EXIT_OK


def cmd_emit_facts(args) -> int:
    instance = _load(args)
    text = emit_facts(instance)
    if args.plan:
        plan = _plan(args, instance)
        try:
            report = check_plan(SearchProblem(instance), plan)
        except PlanError as exc:
            raise _Fail(EXIT_DOMAIN, f"malformed plan: {exc}") from None
        baseline = emit_baseline(report.counters)
        if args.baseline_out:
            _write(args.baseline_out, baseline)
        else:
            text += "\n" + baseline
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plot_data(args) -> int:
    instance = _load_valid(args)
    problem = _problem(args, instance)
    plans = {}
    for engine in [e.strip() for e in args.engines.split(",") if e.strip()]:
        if engine == "identity":
            plans[engine] = identity_plan(instance)
        elif engine == "plan":
            plans[engine] = _plan(args, instance)
        else:
            try:
                result = solve(problem, engine, args.beam_width)
            except (ValueError, PlanSpaceTooLarge) as exc:
                raise _Fail(EXIT_USAGE, f"engine {engine}: {exc}") from None
            if result.plan is None:
                log.warning("engine %s found no plan (%s)", engine, result.status)
                continue
            plans[engine] = result.plan
    net = Network(instance)
    lines = ["time,engine,link,counter,counter_pcu"]
    for engine, plan in plans.items():
        trace = simulate(instance, plan, network=net)
        for t in range(trace.horizon + 1):
            state = trace.state(t)
            for lid, c in state.counter.items():
                lines.append(f'{t},{engine},"{lid}",{c},{pcu_to_decimal(c)}')
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_generate(args) -> int:
    from .generate import full_scale_corridor, random_corridor

    if args.full_scale:
        instance = full_scale_corridor(args.seed, args.horizon or 900)
    else:
        instance = random_corridor(
            random.Random(args.seed), n_junctions=args.junctions, horizon=args.horizon or 120
        )
    text = emit_facts(instance)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- argument parsing ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="signalopt", description="Simulate and optimise traffic signal plans."
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, bound=True):
        p.add_argument("--instance", required=True, help="instance fact file")
        p.add_argument("--horizon", type=int, help="override the horizon constant")
        p.add_argument("--k", type=int, help="cycles a configuration must persist (all junctions)")
        if bound:
            p.add_argument("--bound", help="minimum counter per goal link at the horizon")
        p.add_argument(
            "--decimal-input", action="store_true", help="PCU numbers are decimals, not scaled integers"
        )

    p = sub.add_parser("check", help="validate an instance")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="simulate a plan and write its trace")
    common(p)
    p.add_argument("--plan", help="plan JSON (default: keep initial configurations)")
    p.add_argument("--objective", help="objective expression reported in the summary")
    p.add_argument("--baseline", help="pddl_solution/2 facts to compare against")
    p.add_argument("--trace-out", help="write the per-tick trace CSV here")
    p.add_argument("--timeline-out", help="write per-tick junction status CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="search for a plan")
    common(p)
    p.add_argument("--mode", choices=("decision", "optimise"), default="optimise")
    p.add_argument("--engine", choices=("exhaustive", "bnb", "beam"), default="bnb")
    p.add_argument("--objective", help="objective expression, e.g. 'max_counter;min_occupancy'")
    p.add_argument("--baseline", help="pddl_solution/2 facts the plan must strictly beat")
    p.add_argument("--beam-width", type=int, default=8)
    p.add_argument("--timeout", type=float, help="wall-clock seconds")
    p.add_argument("--plan-out", help="write the plan JSON here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("emit-facts", help="write the instance as ASP facts")
    common(p)
    p.add_argument("--plan", help="also emit this plan's counters as pddl_solution/2")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--baseline-out", help="write pddl_solution/2 facts to a separate file")
    p.set_defaults(func=cmd_emit_facts)

    p = sub.add_parser("plot-data", help="CSV of goal counters over time for several engines")
    common(p)
    p.add_argument("--engines", default="identity,bnb,beam", help="comma list of identity, plan, exhaustive, bnb, beam")
    p.add_argument("--plan", help="plan JSON used by the 'plan' engine")
    p.add_argument("--objective")
    p.add_argument("--baseline")
    p.add_argument("--beam-width", type=int, default=8)
    p.add_argument("--timeout", type=float)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("generate", help="write a synthetic corridor instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--junctions", type=int, default=3)
    p.add_argument("--horizon", type=int)
    p.add_argument("--full-scale", action="store_true", help="6 junctions, 34 links")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    if getattr(args, "timeout", None) is not None and args.timeout <= 0:
        print("error: --timeout must be positive", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "horizon", None) is not None and args.horizon < 0:
        print("error: --horizon must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
