"""Command-line figure rendering for obstacle-lab run directories.

    obstacle-lab-plots --run-dir RUNS [--out DIR] [--kinds phi,decay,...]
                       [--formats png,svg]

Exit codes: 0 on success, 1 when a requested kind has no inputs, 2 on
schema mismatches or bad usage.
"""

from __future__ import annotations

import argparse
import sys

from .render import FORMATS, KINDS, render
from .traces import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obstacle-lab-plots",
        description="Render monotonicity, convergence and classification "
                    "figures from obstacle-lab CSV/JSON reports.")
    parser.add_argument("--run-dir", required=True,
                        help="directory containing the reports")
    parser.add_argument("--out", default=None,
                        help="output directory (default: RUN_DIR/figures)")
    parser.add_argument("--kinds", default=",".join(KINDS),
                        help=f"comma list from {KINDS}")
    parser.add_argument("--formats", default=",".join(FORMATS),
                        help="comma list of image formats (png, svg)")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        print(f"unknown figure kind(s) {bad}; choose from {KINDS}",
              file=sys.stderr)
        return 2
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    try:
        written = render(args.run_dir, out_dir=args.out, kinds=kinds,
                         formats=formats)
    except SchemaError as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    if not args.quiet:
        for kind in kinds:
            print(f"{kind}: {len(written[kind])} file(s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
