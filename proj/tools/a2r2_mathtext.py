#!/usr/bin/env python3
"""Rasterize a LaTeX math body with matplotlib's mathtext engine.

Used by the renderer when no pdflatex toolchain is installed. Reads the formula
body from a file, writes a PNG, and exits non-zero with the parser message on
stderr when the formula does not typeset.
"""

import argparse
import re
import sys

# Constructs mathtext does not know but that have a direct equivalent.
_REWRITES = [
    (re.compile(r"\\(displaystyle|textstyle|scriptstyle|nonumber|notag)\b"), ""),
    (re.compile(r"\\[dt]frac\b"), r"\\frac"),
    (re.compile(r"\\operatorname\*?"), r"\\mathrm"),
    (re.compile(r"\\(left|right)\.\s*"), ""),
    (re.compile(r"\\(big|Big|bigg|Bigg)[lr]?\b"), ""),
    (re.compile(r"\\,|\\;|\\:|\\!"), " "),
]


def prepare(body: str) -> str:
    for pattern, repl in _REWRITES:
        body = pattern.sub(repl, body)
    return " ".join(body.split())


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--dpi", type=int, default=200)
    parser.add_argument("--out", required=True)
    parser.add_argument("--fontsize", type=float, default=12.0)
    parser.add_argument("source")
    args = parser.parse_args()

    with open(args.source, encoding="utf-8") as f:
        body = prepare(f.read())
    if not body:
        print("empty formula", file=sys.stderr)
        return 1

    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["mathtext.fontset"] = "cm"
    from matplotlib import mathtext
    from matplotlib.font_manager import FontProperties

    try:
        mathtext.math_to_image(
            "$" + body + "$",
            args.out,
            prop=FontProperties(size=args.fontsize),
            dpi=args.dpi,
            format="png",
        )
    except Exception as exc:  # parser errors carry the useful message
        print(f"! mathtext error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
