"""Command-line entry point.

One subcommand per run kind plus `verify`.  The run kind in the config must
match the subcommand; this keeps shell history self-documenting while the
config file stays the single source of truth.
"""

import argparse
import sys

from ..errors import LatticeKGError
from .config import KINDS, parse_config_file
from .runner import run
from .verify import verify


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config file (INI)")
    common.add_argument("--out", default=None, help="output directory (default: from the config)")
    common.add_argument("--workers", type=int, default=1, help="worker threads for per-energy scans")
    common.add_argument(
        "--fixed-order",
        action="store_true",
        help="serial reductions for bit-exact reproducibility (implies --workers 1)",
    )
    parser = argparse.ArgumentParser(
        prog="lkg",
        description="lattice Klein-Gordon experiments: spectra, rotation numbers, "
        "gap scans, wave evolution, and the acceptance suite",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common], help="run a config with kind=%s" % kind)
    pv = sub.add_parser("verify", help="run the acceptance criteria")
    pv.add_argument("suite", choices=("fast", "full"), help="reduced sizes or the stated ones")
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify":
        return verify(args.suite)
    try:
        config = parse_config_file(args.config)
        if config.kind != args.command:
            print(
                "error: config has kind=%s but the subcommand is %s"
                % (config.kind, args.command),
                file=sys.stderr,
            )
            return 2
        report = run(
            config,
            out_dir=args.out,
            workers=args.workers,
            fixed_order=args.fixed_order,
        )
    except LatticeKGError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    for check in report.checks:
        print(
            "%-40s %-36s measured=%s %s"
            % (
                check["name"],
                check["required"],
                check["measured"],
                "ok" if check["pass"] else "FAIL",
            )
        )
    print("report hash %s (%.2f s)" % (report.content_hash()[:16], report.wall_time_s))
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
