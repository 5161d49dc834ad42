"""Command-line front end: plan, validate, bench, scenarios.

Exit codes: 0 success, 2 unreadable/invalid inputs, 3 infeasible,
4 solver stopped at a limit with a certified gap, 5 validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bnb, scenarios
from .backends import backend_names
from .errors import BuildError, SchemaError
from .formulation import Formulation, load_task
from .kernels import backend_name as kernel_name
from .plan import export, extract, interpolate_swings, load_plan, validate
from .robot import load_robot
from .terrain import load_terrain

EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_INVALID = \
    0, 2, 3, 4, 5


def plan_pipeline(scene, robot, task, opts: bnb.SolveOptions,
                  seed_gait=False, apex_height=None):
    """Build, optionally seed from a linear-dynamics pre-solve, solve,
    extract and validate. Returns (plan, solution, report, form)."""
    form = Formulation(scene, robot, task)
    if seed_gait and not opts.seed_assignment:
        opts.seed_assignment = gait_seed_assignment(scene, robot, task,
                                                    opts)
    solution = bnb.solve(form.problem, opts)
    if solution.status in ("infeasible", "unbounded") or \
            not np.isfinite(solution.objective):
        return None, solution, None, form
    plan = extract(solution, form.vmap, form.dims, robot=robot, task=task)
    interpolate_swings(plan, apex_height if apex_height is not None
                       else task.apex_height)
    report = validate(plan, scene, robot)
    return plan, solution, report, form


def gait_seed_assignment(scene, robot, task, opts: bnb.SolveOptions):
    """Gait matrix from a pre-solve over the linear dynamics only."""
    import copy
    lin_task = copy.copy(task)
    lin_task.angular_dynamics = False
    lin_form = Formulation(scene, robot, lin_task)
    lin_opts = bnb.SolveOptions(gap_tol=max(opts.gap_tol, 1e-3),
                                node_limit=opts.node_limit,
                                time_limit=opts.time_limit,
                                backend=opts.backend, log=opts.log)
    lin_sol = bnb.solve(lin_form.problem, lin_opts)
    if not np.isfinite(lin_sol.objective):
        return None
    trans = lin_form.vmap.trans
    return {int(trans[i, j]): float(np.round(lin_sol.x[trans[i, j]]))
            for i in range(trans.shape[0]) for j in range(trans.shape[1])}


def _solve_options(args) -> bnb.SolveOptions:
    log_fn = None
    if getattr(args, "log", None):
        handle = open(args.log, "w")
        log_fn = lambda msg: (handle.write(msg + "\n"), handle.flush())
    return bnb.SolveOptions(gap_tol=args.gap_tol,
                            node_limit=args.node_limit,
                            time_limit=args.time_limit,
                            workers=args.workers,
                            backend=args.backend,
                            log=log_fn)


def cmd_plan(args) -> int:
    try:
        scene = load_terrain(Path(args.terrain))
        robot = load_robot(Path(args.robot))
        task = load_task(Path(args.task), robot=robot, scene=scene)
    except (SchemaError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.gait:
        task.gait = args.gait
    opts = _solve_options(args)
    try:
        plan, solution, report, form = plan_pipeline(
            scene, robot, task, opts, seed_gait=args.seed_gait,
            apex_height=args.apex_height)
    except (BuildError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    print(f"status      {solution.status}")
    print(f"nodes       {solution.nodes}")
    print(f"wall time   {solution.wall_time:.3f} s")
    print(f"kernels     {kernel_name()}")
    if plan is None:
        print("no feasible plan found", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"objective   {solution.objective:.9g}")
    print(f"gap         {solution.gap:.3g}")
    print(f"gait        {' '.join(plan.gait_labels)}")
    out_dir = Path(args.out)
    files = export(plan, out_dir)
    print(f"wrote       {', '.join(f.name for f in files)}")
    print(report.summary())
    if not report.passed:
        print("validation FAILED", file=sys.stderr)
        return EXIT_INVALID
    if solution.status != "optimal":
        return EXIT_LIMIT
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        plan = load_plan(Path(args.plan))
        scene = load_terrain(Path(args.terrain))
        robot = load_robot(Path(args.robot))
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    report = validate(plan, scene, robot)
    print(report.summary())
    if not report.passed:
        name, fam = report.worst()
        print(f"validation FAILED: {name} residual {fam.residual:.3e} "
              f"> {fam.tolerance:g}", file=sys.stderr)
        return EXIT_INVALID
    print("validation passed")
    return EXIT_OK


def cmd_bench(args) -> int:
    names = scenarios.scenario_names() if args.scenarios == "all" \
        else [s.strip() for s in args.scenarios.split(",")]
    rows = []
    header = ("scenario,gait,angular,status,objective,gap,nodes,"
              "n_vars,n_binaries,n_rows,mean_s,std_s")
    for name in names:
        variants = [(name, None, True)]
        if name == "roof":
            variants = [("roof", g, True) for g in ("walk", "trot",
                                                    "free")]
        if args.angular_compare:
            variants += [(n0, g0, False) for (n0, g0, _) in variants]
        for sc_name, gait, angular in variants:
            scene, robot, task = scenarios.load_scenario(sc_name,
                                                         gait=gait)
            task.angular_dynamics = angular
            times = []
            sol = None
            form = None
            for _ in range(args.repeats):
                form = Formulation(scene, robot, task)
                t0 = time.perf_counter()
                sol = bnb.solve(form.problem, bnb.SolveOptions(
                    gap_tol=args.gap_tol, time_limit=args.time_limit,
                    workers=args.workers, backend=args.backend))
                times.append(time.perf_counter() - t0)
            times = np.asarray(times)
            p = form.problem
            rows.append(
                f"{sc_name},{gait or task.gait},{int(angular)},"
                f"{sol.status},{sol.objective:.9g},{sol.gap:.3g},"
                f"{sol.nodes},{p.n_vars},"
                f"{int(p.binary_mask.sum())},{len(p.constraints)},"
                f"{times.mean():.3f},{times.std():.3f}")
            print(rows[-1])
    text = header + "\n" + "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


def cmd_scenarios(args) -> int:
    if args.dump:
        for name in scenarios.scenario_names():
            files = scenarios.dump_scenario(name, Path(args.dump) / name)
            print(f"{name}: {', '.join(f.name for f in files)}")
    else:
        for name in scenarios.scenario_names():
            print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="micplan",
        description="Mixed-integer convex contact and motion planner")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--gap-tol", type=float, default=1e-4)
    common.add_argument("--node-limit", type=int, default=200_000)
    common.add_argument("--time-limit", type=float, default=None)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--backend", default="reference",
                        help=f"convex backend ({', '.join(backend_names())})")
    common.add_argument("--seed", type=int, default=0,
                        help="recorded for reproducibility; the solver "
                        "itself is deterministic")

    p = sub.add_parser("plan", parents=[common],
                       help="plan contacts and motion")
    p.add_argument("--terrain", required=True)
    p.add_argument("--robot", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gait", choices=["free", "walk", "trot"],
                   default=None)
    p.add_argument("--seed-gait", action="store_true",
                   help="seed the incumbent from a linear-dynamics "
                   "pre-solve")
    p.add_argument("--apex-height", type=float, default=None)
    p.add_argument("--log", default=None,
                   help="write the solver event log to this file")
    p.set_defaults(fn=cmd_plan)

    v = sub.add_parser("validate", help="re-check an exported plan")
    v.add_argument("--plan", required=True)
    v.add_argument("--terrain", required=True)
    v.add_argument("--robot", required=True)
    v.set_defaults(fn=cmd_validate)

    b = sub.add_parser("bench", parents=[common],
                       help="run the bundled scenario benchmarks")
    b.add_argument("--scenarios", default="all")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--angular-compare", action="store_true",
                   help="also run each scenario with the angular "
                   "decomposition disabled")
    b.add_argument("--out", default=None)
    b.set_defaults(fn=cmd_bench)

    s = sub.add_parser("scenarios", help="list or dump bundled scenarios")
    s.add_argument("--dump", default=None)
    s.set_defaults(fn=cmd_scenarios)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
