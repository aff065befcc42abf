"""Command-line interface.

Subcommands map onto pipeline stage sets:

    foxli modes --config scenario.json
    foxli petermann --config scenario.json
    foxli surface --config scenario.json
    foxli fock-verify --config scenario.json
    foxli decay --config scenario.json
    foxli run --config scenario.json [--stages modes,algebra,...]
    foxli export --config scenario.json --format csv

Exit status is nonzero iff a hard invariant failed or the scenario is
invalid.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import FoxliError
from .pipeline import RunReport, export_results, run_pipeline
from .scenario import load_scenario

_SUBCOMMAND_STAGES = {
    "modes": ["modes"],
    "petermann": ["modes", "algebra"],
    "surface": ["modes", "surface"],
    "decay": ["modes", "algebra", "decay"],
}


def _add_common(parser):
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--out", default=None, help="override output directory")
    parser.add_argument("--seed", type=int, default=None, help="override solve seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foxli",
        description="Non-Hermitean resonator modes, Petermann factors, "
                    "operator-algebra verification, and atom decay simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("modes", "petermann", "surface", "decay"):
        p = sub.add_parser(name)
        _add_common(p)
    p = sub.add_parser("fock-verify")
    _add_common(p)
    p = sub.add_parser("run")
    _add_common(p)
    p.add_argument("--stages", default=None,
                   help="comma-separated subset of modes,algebra,surface,fock,decay")
    p = sub.add_parser("export")
    _add_common(p)
    p.add_argument("--format", default="csv", choices=("json", "csv"))
    return parser


def _scenario_from_args(args):
    scenario = load_scenario(args.config)
    if args.seed is not None:
        scenario.solve["seed"] = args.seed
    if args.out is not None:
        scenario.output["directory"] = args.out
    return scenario


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = _scenario_from_args(args)
        if args.command == "export":
            report_path = f"{scenario.output['directory']}/runreport.json"
            with open(report_path) as fh:
                payload = json.load(fh)
            run = RunReport(scenario=payload["scenario"], stages=payload["stages"],
                            hard_failures=payload["hard_failures"],
                            output_dir=scenario.output["directory"])
            for path in export_results(run, args.format):
                print(path)
            return 0
        if args.command == "run":
            stages = args.stages.split(",") if args.stages else None
        elif args.command == "fock-verify":
            stages = (["modes", "algebra", "fock"]
                      if scenario.fock["gamma_source"] == "basis" else ["fock"])
        else:
            stages = _SUBCOMMAND_STAGES[args.command]
        report = run_pipeline(scenario, stages=stages)
    except FoxliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for stage, entry in report.stages.items():
        print(f"{stage}: {entry['status']}")
        for failure in entry["failures"]:
            print(f"  {failure}")
    if not report.ok:
        print("hard invariant failures:", file=sys.stderr)
        for failure in report.hard_failures:
            print(f"  {failure}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
