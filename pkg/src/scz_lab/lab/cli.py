"""``scz-lab`` command line: run, list and validate experiment configs."""

import argparse
import sys

from ..errors import ConfigError
from .config import load_config
from .runner import run_scenario
from .scenarios import list_scenarios


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scz-lab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the scenario named in a config file")
    run.add_argument("config")
    run.add_argument("--out", default="reports", help="output directory (default: reports)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for independent checks")
    run.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every tolerance")
    sub.add_parser("list", help="list built-in scenarios")
    val = sub.add_parser("validate", help="check a config against the schema")
    val.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        for name, desc in list_scenarios():
            print(f"{name:34s} {desc}")
        return 0
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg['scenario']}")
            return 0
        report = run_scenario(args.config, args.out, args.jobs, args.tolerance_scale)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for rec in report.records:
        status = "PASS" if rec.passed else "FAIL"
        note = f"  ({rec.error})" if rec.error else ""
        print(f"{status}  {rec.name:34s} {rec.runtime:7.2f}s{note}")
    print(f"{report.scenario}: {'all checks passed' if report.passed else 'some checks failed'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
