"""Command line entry point: ``zdflp {validate,solve,evaluate,render,oracle,bench}``.

Exit codes: 0 success, 1 failed rows / violations, 2 input error, 3 solver error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import statistics
import sys
import time
from pathlib import Path

from .backend import SolveLimits, solve, write_mps
from .evaluate import (
    DecodeError,
    check,
    decode,
    oracle_solve,
    recompute_tc,
    serialize_solution,
    solution_from_dict,
)
from .instance import InstanceError, ValidationError, load_instance, validate
from .model import build_full_model
from .render import RenderStyle, render_solution
from .vns import SearchConfig, SearchError, run_vns

log = logging.getLogger("zdflp")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


def _load(path: str, delta: int | None = None):
    inst = load_instance(path, check=False)
    if delta is not None:
        inst = dataclasses.replace(inst, delta=delta)
    return inst


def _print_costs(sol, out=None) -> None:
    out = out or sys.stdout
    c = sol.costs
    print(f"material handling   {c.material:14.4f}", file=out)
    print(f"fixed relayout      {c.fixed_relayout:14.4f}", file=out)
    print(f"variable relayout   {c.variable_relayout:14.4f}", file=out)
    print(f"zone boundary       {c.zone_boundary:14.4f}", file=out)
    print(f"TC                  {c.total:14.4f}", file=out)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        inst = _load(args.instance, args.delta)
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    problems = validate(inst)
    for p in problems:
        print(f"{p.code}: {p.message}")
    if problems:
        return EXIT_INPUT
    print(f"{inst.name}: valid ({len(inst.departments)} departments, {inst.zones.zone_count} zones, "
          f"{inst.periods} periods)")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    try:
        inst = _load(args.instance, args.delta)
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    problems = validate(inst)
    if problems:
        for p in problems:
            print(f"{p.code}: {p.message}", file=sys.stderr)
        return EXIT_INPUT

    trace = None
    try:
        if args.method == "exact":
            m = build_full_model(inst)
            if args.mps:
                Path(args.mps).write_text(write_mps(m))
            res = solve(m, SolveLimits(time_limit=args.time_limit))
            if not res.has_solution:
                print(f"solver status {res.status}: {res.diagnostics[-800:]}", file=sys.stderr)
                return EXIT_SOLVER
            sol = decode(m, res, inst)
        else:
            cfg = SearchConfig(g_max=args.gmax, kappa=args.kappa, subproblem_time_limit=args.sub_time_limit,
                               seed=args.seed, phase1_time_limit=args.time_limit)
            if args.mps:
                Path(args.mps).write_text(write_mps(build_full_model(inst)))
            sol, trace = run_vns(inst, cfg)
    except (SearchError, DecodeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    violations = check(sol, inst)
    if violations:
        print(f"warning: solution has {len(violations)} violations", file=sys.stderr)
    _print_costs(sol)
    if args.out:
        Path(args.out).write_text(serialize_solution(sol, inst))
    if trace is not None and args.trace:
        Path(args.trace).write_text(trace.to_jsonl(timing=args.timing))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        inst = _load(args.instance, args.delta)
        sol = solution_from_dict(json.loads(Path(args.solution).read_text()))
    except (InstanceError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sol.costs = recompute_tc(sol, inst)
    violations = check(sol, inst)
    for v in violations:
        print(f"{v.code} {v.indices} {v.magnitude:.3g}")
    _print_costs(sol)
    return EXIT_FAIL if violations else EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    try:
        doc = json.loads(Path(args.solution).read_text())
        style = RenderStyle(args.scale, not args.no_io, not args.no_zones, not args.no_replacement_labels)
        pages = render_solution(doc, style)
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: malformed solution: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.solution).stem
    for t, text in pages.items():
        path = out / f"{stem}_t{t}.svg"
        path.write_text(text, encoding="utf-8")
        print(path)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    try:
        inst = _load(args.instance, args.delta)
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    problems = validate(inst)
    if problems:
        for p in problems:
            print(f"{p.code}: {p.message}", file=sys.stderr)
        return EXIT_INPUT
    try:
        sol = oracle_solve(inst)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _print_costs(sol)
    if args.out:
        Path(args.out).write_text(serialize_solution(sol, inst))
    return EXIT_OK


def run_bench(instance_dir: str | Path, replications: int, cfg: SearchConfig) -> list[dict]:
    rows = []
    for path in sorted(Path(instance_dir).glob("*.json")):
        row: dict = {"instance": path.stem, "replications": replications}
        try:
            inst = load_instance(path)
            tcs, secs = [], []
            for seed in range(1, replications + 1):
                start = time.perf_counter()
                best, _ = run_vns(inst, dataclasses.replace(cfg, seed=seed))
                secs.append(time.perf_counter() - start)
                tcs.append(best.tc)
            row.update(status="ok", best=min(tcs), average=statistics.fmean(tcs),
                       average_seconds=statistics.fmean(secs), tc=tcs)
        except (InstanceError, ValidationError, SearchError, DecodeError) as exc:
            row.update(status="failed", error=str(exc))
        rows.append(row)
    return rows


def format_table(rows: list[dict]) -> str:
    head = f"{'Problem':<28}{'Best':>14}{'Average':>14}{'Avg sec':>10}  status"
    lines = [head, "-" * len(head)]
    for r in rows:
        if r["status"] == "ok":
            lines.append(f"{r['instance']:<28}{r['best']:>14,.2f}{r['average']:>14,.2f}"
                         f"{r['average_seconds']:>10.2f}  ok")
        else:
            lines.append(f"{r['instance']:<28}{'-':>14}{'-':>14}{'-':>10}  failed")
    return "\n".join(lines)


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = SearchConfig(g_max=args.gmax, kappa=args.kappa, subproblem_time_limit=args.sub_time_limit,
                       phase1_time_limit=args.time_limit)
    rows = run_bench(args.instance, args.replications, cfg)
    if not rows:
        print(f"warning: no instance files in {args.instance}", file=sys.stderr)
    print(format_table(rows))
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    return EXIT_FAIL if any(r["status"] != "ok" for r in rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zdflp", description="Zone-based dynamic facility layout solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, instance_help="instance JSON file"):
        sp.add_argument("--instance", required=True, help=instance_help)
        sp.add_argument("--delta", type=int, help="override the number of area support points")

    sp = sub.add_parser("validate", help="check an instance file")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("solve", help="solve exactly or with MIP-VNS")
    common(sp)
    sp.add_argument("--method", choices=("exact", "vns"), default="vns")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--gmax", type=int, default=50)
    sp.add_argument("--kappa", type=int, default=3)
    sp.add_argument("--time-limit", type=float, help="exact solve / phase 1 limit in seconds")
    sp.add_argument("--sub-time-limit", type=float, default=10.0, help="subproblem limit in seconds")
    sp.add_argument("--out", help="solution JSON to write")
    sp.add_argument("--trace", help="search trace (JSON lines) to write")
    sp.add_argument("--timing", action="store_true", help="include wall times in the trace")
    sp.add_argument("--mps", help="also write the full model as MPS")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("evaluate", help="check and price a solution file")
    common(sp)
    sp.add_argument("solution")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("render", help="draw a solution as one SVG per period")
    sp.add_argument("solution")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--scale", type=float, default=40.0, help="pixels per length unit")
    sp.add_argument("--no-io", action="store_true")
    sp.add_argument("--no-zones", action="store_true")
    sp.add_argument("--no-replacement-labels", action="store_true")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("oracle", help="exact optimum of a tiny instance by enumeration")
    common(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("bench", help="replicated MIP-VNS runs over a directory of instances")
    sp.add_argument("--instance", required=True, help="directory of instance JSON files")
    sp.add_argument("--replications", type=int, default=5)
    sp.add_argument("--gmax", type=int, default=50)
    sp.add_argument("--kappa", type=int, default=3)
    sp.add_argument("--time-limit", type=float)
    sp.add_argument("--sub-time-limit", type=float, default=10.0)
    sp.add_argument("--out", help="results JSON to write")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
