"""Command-line front end.

Subcommands:

* ``profile-check`` -- validate a profile file and report any monotonicity
  warnings.
* ``run``           -- simulate a scenario under one policy and write metrics.
* ``compare``       -- run a scenario under both policies and print a summary
  table.
* ``pack-trace``    -- replay a placement event file and print the free-list
  after every operation.

Exit codes: 0 on success, 1 on validation/input errors, 2 when a run aborts
on an internal invariant breach.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import GShareError, InvariantError
from .packer import (
    GpuNode,
    PodRequest,
    as_frac,
    best_match,
    check_node,
    new_node,
    place,
    release,
    restructure,
)
from .profiles import ingest_profiles
from .sim_engine import POLICIES, Scenario, compare_policies, run as run_scenario
from .util import fmt_num

logger = logging.getLogger("gshare_sim")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVARIANT = 2


def _configure_logging(verbose: bool) -> None:
    level_name = os.environ.get("GSHARE_LOG", "").upper()
    level = getattr(logging, level_name, None) if level_name else None
    if level is None:
        level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _check_fleet(nodes: list[GpuNode]) -> None:
    breaches = [b for node in nodes for b in check_node(node)]
    if breaches:
        raise InvariantError("; ".join(breaches))


def cmd_profile_check(args: argparse.Namespace) -> int:
    profiles = ingest_profiles(args.profile)
    for fid in sorted(profiles):
        prof = profiles[fid]
        points = prof.points()
        print(f"{fid}: {len(points)} points, slo={fmt_num(prof.slo_latency_ms)}ms")
        for warning in prof.warnings:
            print(f"  warning: {warning}")
    total_warnings = sum(len(p.warnings) for p in profiles.values())
    print(f"{len(profiles)} function(s), {total_warnings} warning(s)")
    return EXIT_OK


def _load_scenario(path: str, seed: int | None = None) -> Scenario:
    if seed is None:
        return Scenario.from_json(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    data["seed"] = seed
    return Scenario.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


def cmd_run(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario, args.seed)
    report = run_scenario(scenario, policy=args.policy)
    summary = report.summary()
    if args.out:
        report.write(args.out)
        print(f"wrote {os.path.join(args.out, 'metrics.csv')}")
        print(f"wrote {os.path.join(args.out, 'summary.json')}")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _summary_table(summaries: dict[str, dict]) -> str:
    fields = ("gpus_used_peak", "mean_utilization", "mean_sm_occupancy",
              "slo_violation_pct", "placement_failures")
    names = sorted(summaries)
    width = max(len(f) for f in fields)
    lines = [" " * width + "  " + "  ".join(f"{n:>12}" for n in names)]
    for f in fields:
        cells = []
        for n in names:
            value = summaries[n][f]
            cells.append(f"{value:>12.4f}" if isinstance(value, float)
                         else f"{value:>12}")
        lines.append(f"{f:<{width}}  " + "  ".join(cells))
    return "\n".join(lines)


def cmd_compare(args: argparse.Namespace) -> int:
    scenario = Scenario.from_json(args.scenario)
    reports = compare_policies(scenario)
    summaries = {policy: report.summary() for policy, report in reports.items()}
    print(_summary_table(summaries))
    if args.out:
        for policy, report in sorted(reports.items()):
            out_dir = os.path.join(args.out, policy)
            report.write(out_dir)
            print(f"wrote {os.path.join(out_dir, 'metrics.csv')}")
    return EXIT_OK


def cmd_pack_trace(args: argparse.Namespace) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        events = json.load(fh)
    if not isinstance(events, list):
        raise GShareError("pack trace must be a JSON list of events")
    nodes = [new_node(g) for g in range(int(args.gpus))]
    by_id = {n.gpu_id: n for n in nodes}
    for node in nodes:
        print(f"[init] gpu {node.gpu_id} free: [{_free_list(node)}]")
    for i, event in enumerate(events):
        op = event.get("op")
        if op == "place":
            req = PodRequest(
                pod_id=event["pod_id"],
                function_id=event.get("function_id", event["pod_id"]),
                w=as_frac(event["w"]),
                h=as_frac(event["h"]),
            )
            found = best_match(nodes, req)
            if found is None:
                print(f"[{i}] place {req.pod_id}: no fit")
                continue
            gpu_id, chosen = found
            place(by_id[gpu_id], chosen, req)
            print(f"[{i}] place {req.pod_id} -> gpu {gpu_id} at "
                  f"({fmt_num(float(chosen.x))}, {fmt_num(float(chosen.y))})")
        elif op == "release":
            pod_id = event["pod_id"]
            node = next((n for n in nodes if pod_id in n.placements), None)
            if node is None:
                raise GShareError(f"event {i}: pod {pod_id!r} is not placed")
            release(node, pod_id)
            print(f"[{i}] release {pod_id} from gpu {node.gpu_id}")
        elif op == "restructure":
            node = by_id[int(event.get("gpu", 0))]
            changed = restructure(node, threshold=int(event.get("threshold", 0)))
            print(f"[{i}] restructure gpu {node.gpu_id}: "
                  f"{'rebuilt' if changed else 'unchanged'}")
        else:
            raise GShareError(f"event {i}: unknown op {op!r}")
        _check_fleet(nodes)
        for node in nodes:
            if not node.placements and len(node.free_rects) == 1:
                continue
            print(f"    gpu {node.gpu_id} free: [{_free_list(node)}]")
    return EXIT_OK


def _free_list(node: GpuNode) -> str:
    return ", ".join(
        f"({fmt_num(float(r.x))},{fmt_num(float(r.y))},"
        f"{fmt_num(float(r.w))},{fmt_num(float(r.h))})"
        for r in node.free_rects)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gshare",
        description="GPU-sharing scheduler simulator")
    parser.add_argument("--verbose", action="store_true",
                        help="debug logging (GSHARE_LOG overrides)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile-check", help="validate a profile file")
    p.add_argument("profile", help="CSV or JSONL profile file")
    p.set_defaults(func=cmd_profile_check)

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--policy", choices=POLICIES, default="fast")
    p.add_argument("--out", help="directory for metrics.csv / summary.json")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario's RNG seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run a scenario under both policies")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", help="directory for per-policy metrics")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pack-trace", help="replay a placement event file")
    p.add_argument("--trace", required=True, help="JSON list of events")
    p.add_argument("--gpus", type=int, default=1, help="fleet size (default 1)")
    p.set_defaults(func=cmd_pack_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except InvariantError as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except GShareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
