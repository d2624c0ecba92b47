"""Command line entry point: genwave-figs <dir> [--figs LIST] [--fmt F]."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import ALL_FIGURES, FigureJob, render
from .schema import SchemaError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="genwave-figs",
        description="Render the standard figure set from genwave artifacts.")
    parser.add_argument("directory", help="genwave output directory")
    parser.add_argument("--figs", default=",".join(ALL_FIGURES),
                        help="comma-separated subset of: " + ", ".join(ALL_FIGURES))
    parser.add_argument("--fmt", default="png", choices=("png", "svg", "pdf"))
    parser.add_argument("--out", default=None, help="output directory "
                        "(default: <dir>/figs)")
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args(argv)
    try:
        job = FigureJob(input_dir=Path(args.directory),
                        figures=tuple(f.strip() for f in args.figs.split(",")
                                      if f.strip()),
                        fmt=args.fmt,
                        out_dir=Path(args.out) if args.out else None,
                        dpi=args.dpi)
        result = render(job)
    except SchemaError as exc:
        print(f"genwave-figs: error: {exc}", file=sys.stderr)
        return 1
    for name, path in result["figures"].items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
