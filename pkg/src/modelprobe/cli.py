"""Command-line interface: register models, run properties, view reports.

Exit codes: 0 all properties passed, 1 at least one failed case,
2 configuration or setup error. The registry location can be overridden
with the MODELPROBE_REGISTRY environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import gateway, runner
from .errors import ModelProbeError


def _cmd_register(args):
    handle = gateway.register_model(args.descriptor, registry=args.registry)
    print("registered %s (%s, %s backend)" % (handle.id, handle.kind, handle.backend))
    return 0


def _cmd_run(args):
    with open(args.runconfig, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if args.seed is not None:
        config["global_seed"] = args.seed
    if args.out is not None:
        config["output_dir"] = args.out
    if args.concurrency is not None:
        config["concurrency"] = args.concurrency
    report, run_dir = runner.run(config, registry=args.registry)
    sys.stdout.buffer.write(runner.render_report(report, "text-summary"))
    print("report written to %s" % run_dir)
    any_failed = any(c["verdict"] == "fail"
                     for p in report["properties"] for c in p["cases"])
    any_errored = any(p["status"] == "error" for p in report["properties"])
    if any_errored:
        return 2
    return 1 if any_failed else 0


def _cmd_report(args):
    report = runner.load_report(args.run_dir)
    fmt = "json" if args.format == "json" else "text-summary"
    sys.stdout.buffer.write(runner.render_report(report, fmt))
    return 0


def _cmd_compare(args):
    a = runner.load_report(args.run_a)
    b = runner.load_report(args.run_b)
    rows = runner.compare_runs(a, b)
    for row in rows:
        if row["flag"] == "one-sided":
            print("%-30s (one-sided)" % row["property"])
        else:
            delta = "" if row["delta"] is None else " delta=%+g" % row["delta"]
            print("%-30s %-40s a=%s b=%s%s"
                  % (row["property"], row["metric"], row["a"], row["b"], delta))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="modelprobe",
                                     description="Black-box AI model testing toolkit")
    parser.add_argument("--registry", default=None,
                        help="registry directory (default: $MODELPROBE_REGISTRY)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="register a model from a descriptor file")
    p.add_argument("descriptor")
    p.set_defaults(fn=_cmd_register)

    p = sub.add_parser("run", help="execute a run config")
    p.add_argument("runconfig")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--concurrency", type=int, default=None)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("report", help="render a stored report")
    p.add_argument("run_dir")
    p.add_argument("--format", choices=["json", "text"], default="text")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("compare", help="compare two runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.set_defaults(fn=_cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ModelProbeError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
