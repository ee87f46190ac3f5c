"""Command-line interface.

Subcommands:
  solve            solve the configured obstacle problem, dump solution
  trace            solve + energy traces per center (CSV/JSON per center)
  classify         solve + blow-up classification and boundary overlay data
  epi              epiperimetric contraction batch
  suite            run the acceptance suite (exit 0 iff everything passes)
  validate-config  check a config file, exit 2 naming the violated rule

Common flags: --config PATH, --out DIR, --seed N, --grid N, --quiet.
Unknown flags exit 2 with usage; failed checks exit 1.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness


def _add_common(sub: argparse.ArgumentParser, config_required: bool = True) -> None:
    sub.add_argument("--config", required=config_required,
                     help="experiment config file (INI sections of key=value)")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--seed", type=int, default=None, help="rng seed override")
    sub.add_argument("--grid", type=int, default=None, help="grid nodes override")
    sub.add_argument("--quiet", action="store_true", help="suppress progress lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obstacle-lab",
        description="Obstacle-problem laboratory: PSOR solves, monotonicity "
                    "traces, blow-up classification, epiperimetric checks.")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "solve and dump the discrete solution"),
                            ("trace", "energy traces at free-boundary centers"),
                            ("classify", "blow-up classification reports"),
                            ("epi", "epiperimetric contraction batch")):
        sub = subs.add_parser(name, help=help_text)
        _add_common(sub)
    suite = subs.add_parser("suite", help="run the acceptance suite")
    suite.add_argument("--out", default=None)
    suite.add_argument("--seed", type=int, default=7)
    suite.add_argument("--profile", choices=sorted(harness.PROFILES), default="full")
    suite.add_argument("--quiet", action="store_true")
    val = subs.add_parser("validate-config", help="validate a config file")
    val.add_argument("path")
    return parser


_COMMAND_CHECKS = {
    "solve": [],
    "trace": ["trace"],
    "classify": ["classify", "decay"],
    "epi": ["epi"],
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "validate-config":
        try:
            harness.parse_config(args.path)
        except harness.ConfigError as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 2
        print("config ok")
        return 0

    if args.command == "suite":
        out = args.out or os.environ.get("OBSTACLE_LAB_OUT", "runs")
        results = harness.suite(out, seed=args.seed, profile=args.profile,
                                quiet=args.quiet)
        return 0 if all(r["passed"] for r in results) else 1

    overrides = []
    if args.seed is not None:
        overrides.append(("rng", "seed", args.seed))
    if args.grid is not None:
        overrides.append(("grid", "nodes", args.grid))
    try:
        cfg = harness.parse_config(args.config, overrides=overrides)
    except harness.ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    summary = harness.run(cfg, out_dir=args.out,
                          checks=_COMMAND_CHECKS[args.command])
    if not args.quiet:
        state = "ok" if summary["ok"] else "FAILED"
        print(f"{args.command} {state}: config {summary['config_hash']}, "
              f"reports in {args.out or cfg.get('output', 'dir') or 'runs'}")
        for name, err in summary.get("errors", {}).items():
            print(f"  error[{name}]: {err}", file=sys.stderr)
    return 0 if summary["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
