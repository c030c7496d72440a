"""Command line entry point: ``secaodv run`` and ``secaodv validate``."""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .report import report
from .scenario import ScenarioError, bundled_scenarios, load_scenario
from .sim import Simulator
from .units import from_seconds


def _prepare(args):
    sc = load_scenario(args.scenario)
    if args.duration is not None:
        sc = sc.with_duration(from_seconds(args.duration)).validate()
    return sc


def _run_one(scenario, seed: int, fmt: str):
    result = Simulator(scenario, seed).run()
    return report(result, scenario, fmt), result.trace


def cmd_run(args) -> int:
    sc = _prepare(args)
    seed = sc.seed if args.seed is None else args.seed
    seeds = [seed + i for i in range(args.runs)]
    if len(seeds) == 1:
        outputs = [_run_one(sc, seeds[0], args.report)]
    else:
        with ProcessPoolExecutor() as pool:
            outputs = list(pool.map(_run_one, [sc] * len(seeds), seeds, [args.report] * len(seeds)))

    text = "".join(out for out, _ in outputs)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.trace:
        lines = []
        for s, (_, trace) in zip(seeds, outputs):
            if len(seeds) > 1:
                lines.append(f"# seed {s}")
            lines += trace
        Path(args.trace).write_text("\n".join(lines) + "\n")
    return 0


def cmd_validate(args) -> int:
    sc = _prepare(args)
    print(f"{args.scenario}: ok ({len(sc.topology.node_ids)} nodes, {len(sc.flows)} flows, protocol {sc.protocol})")
    return 0


def cmd_list(args) -> int:
    for p in bundled_scenarios():
        print(p.name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="secaodv", description="AODV / keyed-digest AODV network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and print a report")
    run.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--duration", help="override the run duration in seconds")
    run.add_argument("--trace", help="write the event trace to this file")
    run.add_argument("--report", choices=("table", "structured"), default="table")
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--runs", type=int, default=1, help="seed sweep: run seeds seed..seed+N-1 in parallel")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a scenario without running it")
    val.add_argument("--scenario", required=True)
    val.add_argument("--duration")
    val.set_defaults(func=cmd_validate)

    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(func=cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "runs", 1) < 1:
        parser.error("--runs must be at least 1")
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
