"""Command-line entry point: ``impalloc <command> [options]``.

Exit codes: 0 success, 1 infeasible model, 2 input error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from . import config as cfgmod
from . import io
from .engine import EngineState, plan_cycle
from .errors import ContractViolation, DomainError, InfeasibleError, ModelError, ParseError
from .grid import validate_catalog
from .simulator import POLICIES, LpEnginePolicy, compare, generate_world, make_policy, run_policy, world_from_log

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("impalloc")


@dataclass
class Inputs:
    budgets: dict
    rows: list
    catalog: object
    schedule: object
    history: object
    new: set


def load_inputs(cfg: cfgmod.RunConfig) -> Inputs:
    cfg.check_paths()
    budgets = io.load_campaigns(cfg.campaigns)
    rows = io.read_schedule(cfg.schedule)
    catalog = io.catalog_from(budgets, rows, cfg.epoch, cfg.frame_duration, path=cfg.schedule)
    schedule = io.schedule_set(rows, catalog, cfg.schedule)
    history = io.load_history(cfg.history)
    return Inputs(budgets, rows, catalog, schedule, history, io.new_triples(rows))


def _run_config(args) -> cfgmod.RunConfig:
    overrides = {
        "history": getattr(args, "history", None),
        "schedule": getattr(args, "schedule", None),
        "campaigns": getattr(args, "campaigns", None),
        "output": getattr(args, "output", None),
        "frame": getattr(args, "frame", None),
        "horizon": getattr(args, "horizon", None),
        "gamma": getattr(args, "gamma", None),
    }
    for item in getattr(args, "set", None) or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    return cfgmod.load_run_config(args.config, overrides)


def _spent_before(history, catalog, frame: int) -> Counter:
    spent = Counter()
    for r in history:
        if r.filled and 1 <= catalog.frame_at(r.timestamp) < frame:
            spent[r.campaign] += r.profit
    return spent


def cmd_validate(args) -> int:
    cfg = _run_config(args)
    inputs = load_inputs(cfg)
    report = validate_catalog(inputs.catalog, inputs.schedule)
    print(f"campaigns: {len(inputs.budgets)}  locations: {len(inputs.catalog.locations)}  "
          f"frames: {inputs.catalog.n_frames}  admissible quads: {len(inputs.schedule)}  "
          f"history records: {len(inputs.history)}")
    problems = list(report.violations)
    known_locations = set(inputs.catalog.locations)
    for r in inputs.history:
        if r.location not in known_locations:
            problems.append(f"history mentions unknown location {r.location!r}")
            known_locations.add(r.location)
    for line in problems:
        print(f"error: {line}")
    print("ok" if not problems else f"{len(problems)} problem(s)")
    return EXIT_OK if not problems else EXIT_INPUT


def cmd_plan(args) -> int:
    cfg = _run_config(args)
    inputs = load_inputs(cfg)
    spent = _spent_before(inputs.history, inputs.catalog, cfg.frame)
    remaining = {i: (b if math.isinf(b) else max(0.0, b - spent[i])) for i, b in inputs.budgets.items()}
    state = EngineState(inputs.catalog, dict(inputs.budgets), inputs.history, cfg.engine_config(),
                        frame=cfg.frame, remaining=remaining, new_triples=inputs.new)
    plan, diag = plan_cycle(state, inputs.schedule)
    io.emit_plan(plan, cfg.output)
    print(f"frame {diag.frame}: objective {diag.objective:.6f} "
          f"({diag.n_variables} variables, {diag.n_rows} rows, {diag.iterations} pivots)")
    print(f"plan written to {cfg.output}")
    return EXIT_OK


def _write_run(report, out: Path, stem: str):
    out.mkdir(parents=True, exist_ok=True)
    io.write_csv(out / f"{stem}_frames.csv", ("frame", "revenue"), zip(report.frames, report.revenue_series))
    rows = [(i, report.budgets.get(i, math.inf), report.spend.get(i, 0.0), report.overshoot(i),
             report.overshoot_bound.get(i, 0.0)) for i in sorted(report.spend)]
    io.write_csv(out / f"{stem}_campaigns.csv",
                 ("campaign_id", "budget", "spend", "overshoot", "overshoot_bound"), rows)
    io.write_csv(out / f"{stem}_summary.csv", ("key", "value"), [
        ("policy", report.policy), ("seed", report.seed), ("total_revenue", report.total_revenue),
        ("total_impressions", report.total_impressions), ("supply_violations", report.supply_violations),
        ("probability_violations", report.probability_violations), ("aborted", report.aborted or ""),
    ])
    from .plots import plot_run

    plot_run(report, out / f"{stem}_revenue.png")


def _policy(name: str, args):
    if name == "lp-engine":
        engine = _run_config(args).engine_config() if args.config or args.set else None
        kwargs = {"config": engine} if engine is not None else {}
        return LpEnginePolicy(oracle=getattr(args, "oracle", False), **kwargs)
    return make_policy(name)


def _world_config(args):
    overrides = {}
    for item in args.world_set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"--world-set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return cfgmod.world_config(args.world, overrides)


def cmd_simulate(args) -> int:
    world = generate_world(_world_config(args))
    report = run_policy(world, _policy(args.policy, args))
    _write_run(report, Path(args.out), args.policy)
    print(f"{report.policy} seed {report.seed}: revenue {report.total_revenue:.4f}, "
          f"{report.total_impressions} impressions")
    if report.aborted:
        print(f"aborted: {report.aborted}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_run(args) -> int:
    if args.world or args.world_set:
        world = generate_world(_world_config(args))
        policy = _policy(args.policy, args)
    else:
        cfg = _run_config(args)
        inputs = load_inputs(cfg)
        world = world_from_log(inputs.history, inputs.catalog, inputs.schedule, inputs.budgets)
        if args.policy == "lp-engine":
            policy = LpEnginePolicy(cfg.engine_config(), new_triples=inputs.new)
        else:
            policy = make_policy(args.policy)
    report = run_policy(world, policy)
    _write_run(report, Path(args.out), args.policy)
    print(f"{report.policy}: revenue {report.total_revenue:.4f} over {len(report.frames)} frames")
    if report.aborted:
        print(f"aborted: {report.aborted}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_compare(args) -> int:
    world_cfg = _world_config(args)
    seeds = list(range(args.first_seed, args.first_seed + args.seeds))
    factories = [(lambda name=name: _policy(name, args)) for name in args.policies]
    result = compare(world_cfg, factories, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_csv(out / "revenues.csv", ("policy", "seed", "revenue"),
                 ((p, s, r) for p, rs in result.revenues.items() for s, r in zip(seeds, rs)))
    summary = [(p, m, sd) for p, m, sd in result.rows()]
    io.write_csv(out / "summary.csv", ("policy", "mean_revenue", "std_revenue"), summary)
    from .plots import plot_comparison

    plot_comparison(result, out / "compare.png")
    for p, m, sd in summary:
        print(f"{p:>10}: mean {m:.4f}  std {sd:.4f}")
    if "lp-engine" in result.revenues and "greedy" in result.revenues:
        print(f"uplift lp-engine vs greedy: {100 * result.uplift():.2f}%  "
              f"(sign test p = {result.sign_test():.3g})")
    return EXIT_OK


def cmd_project(args) -> int:
    cfg = _run_config(args)
    inputs = load_inputs(cfg)
    state = EngineState(inputs.catalog, dict(inputs.budgets), inputs.history, cfg.engine_config(), frame=cfg.frame)
    projector = state.projector()
    last = min(inputs.catalog.n_frames, cfg.frame + cfg.horizon - 1)
    window = inputs.schedule.filter(lambda q: cfg.frame <= q.frame <= last)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    profit_rows = []
    for q in window:
        est = projector.profit(q.campaign, q.creative, q.location, inputs.catalog.frame_start(q.frame))
        profit_rows.append((q.frame, q.location, q.campaign, q.creative, est.value, est.level))
    io.write_csv(out / "profit.csv", ("frame", "location_id", "campaign_id", "creative_id", "profit", "level"),
                 profit_rows)
    supply_rows = [(k, l, projector.supply(l, inputs.catalog.frame_start(k))) for l, k in window.nodes()]
    io.write_csv(out / "supply.csv", ("frame", "location_id", "supply"), supply_rows)
    print(f"{len(profit_rows)} profit and {len(supply_rows)} supply projections written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impalloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p):
        p.add_argument("--config", help=f"key = value config file (default: ${cfgmod.ENV_VAR})")
        p.add_argument("--history")
        p.add_argument("--schedule")
        p.add_argument("--campaigns")
        p.add_argument("--frame", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--gamma", type=float)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")

    def world_options(p):
        p.add_argument("--world", help="world config file")
        p.add_argument("--world-set", action="append", metavar="KEY=VALUE", help="override a world key")

    p = sub.add_parser("validate", help="load all inputs and report problems")
    run_options(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="one optimisation cycle; writes the next-frame plan")
    run_options(p)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="rolling-horizon loop against a world or the replayed log")
    run_options(p)
    world_options(p)
    p.add_argument("--policy", choices=POLICIES, default="lp-engine")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="run-report")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="one policy on one synthetic world")
    run_options(p)
    world_options(p)
    p.add_argument("--policy", choices=POLICIES, default="lp-engine")
    p.add_argument("--oracle", action="store_true", help="give the LP engine the true projections")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="sim-report")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="several policies over several seeds")
    run_options(p)
    world_options(p)
    p.add_argument("--policies", nargs="+", choices=POLICIES, default=list(POLICIES))
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--out", default="compare-report")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("project", help="dump profit and supply projections")
    run_options(p)
    p.add_argument("--out", default="projections")
    p.set_defaults(func=cmd_project)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ParseError, DomainError, ModelError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ContractViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
