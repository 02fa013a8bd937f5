"""Command-line interface: run benchmarks, conformance checks, ground truth."""

from __future__ import annotations

import argparse
import sys

from .conformance import run_checks
from .harness import parse_config, run_bo_loop, write_csv
from .objectives import make_objective


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    records = run_bo_loop(config)
    output = args.output or config.output
    if output is None:
        print("no output path given (config key 'output' or --output)", file=sys.stderr)
        return 2
    write_csv(records, output)
    print(f"wrote {len(records)} records to {output}")
    return 0


def _cmd_check(args) -> int:
    results = run_checks()
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    if failed:
        print(f"{failed}/{len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def _cmd_truth(args) -> int:
    spec = make_objective(args.objective)
    x = ", ".join(format(v, ".10g") for v in spec.maximizer)
    print(f"objective: {spec.kind}")
    print(f"true_max:  {spec.true_max:.10g}")
    print(f"maximizer: ({x})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmesbo",
        description="Bayesian-optimization benchmarks for max-value information acquisitions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a benchmark config and write the record CSV")
    p_run.add_argument("config", help="path to a key = value config file")
    p_run.add_argument("--output", help="override the config's output path")
    p_run.set_defaults(fn=_cmd_run)

    p_check = sub.add_parser("check", help="run the quadrature/oracle conformance suite")
    p_check.set_defaults(fn=_cmd_check)

    p_truth = sub.add_parser("truth", help="print the cached maximum of a named objective")
    p_truth.add_argument("objective", help="branin | eggholder | michalewicz2 | gp_sample")
    p_truth.set_defaults(fn=_cmd_truth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
