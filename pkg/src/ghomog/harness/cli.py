"""``ghomog`` command line: one subcommand per experiment plus ``report``.

Exit codes: 0 on success, 2 when a budget truncated the run, 1 on a
configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import EXPERIMENT_NAMES, ConfigError, load_config, parse_config
from .report import ReportError, report
from .runner import run


def _parser():
    p = argparse.ArgumentParser(prog="ghomog", description="Monte Carlo experiments for G-equation homogenization.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENT_NAMES:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", metavar="PATH", help="key = value configuration file")
        s.add_argument("--out", metavar="DIR", help="results directory")
        s.add_argument("--seeds", metavar="A..B", help="seed range, both ends included")
        s.add_argument("--workers", metavar="N", help="worker processes")
        s.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], help="override a config key")
        s.add_argument("--report", action="store_true", help="write the report for DIR afterwards")
        s.add_argument("--quiet", action="store_true")
    r = sub.add_parser("report", help="summarise a results directory")
    r.add_argument("dir")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "report":
        try:
            report(args.dir)
        except ReportError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {args.dir}/report.md")
        return 0
    overrides = {"experiment": args.command, "out": args.out, "seeds": args.seeds, "workers": args.workers}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 1
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    try:
        if args.config:
            # the file names its own experiment; the subcommand must agree with it
            overrides.pop("experiment")
            cfg = load_config(args.config, overrides)
            if cfg.experiment != args.command:
                raise ConfigError(f"experiment: config names {cfg.experiment!r}, command is {args.command!r}")
        else:
            cfg = parse_config("", overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    result = run(cfg, log=log)
    print(json.dumps({"experiment": cfg.experiment, "digest": cfg.digest, "new_records": len(result.records),
                      "skipped": result.skipped, "truncated": result.truncated}))
    if args.report:
        try:
            report(cfg["out"])
        except ReportError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    return 2 if result.truncated else 0


if __name__ == "__main__":
    sys.exit(main())
