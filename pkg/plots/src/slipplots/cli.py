"""Command line: slip-plot <kind> --in TABLE [--in TABLE2] --out IMG."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="slip-plot",
                                     description="Render figures from slipflat tables")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        metavar="TABLE", help="input CSV (repeatable)")
    parser.add_argument("--out", required=True, metavar="IMG", help="output image path")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        render(FigureSpec(kind=args.kind, inputs=tuple(args.inputs), output=args.out))
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
