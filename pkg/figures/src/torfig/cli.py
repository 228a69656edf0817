"""figures: render torwalk CSV/JSON outputs to static images.

Examples:
    figures --kind collapse --in collapse.csv --out fig_collapse.png \
            --ref-curve "0.1+2*y**3"
    figures --kind profile --in 'runs/saw_L*_profile.csv' --out profiles.png
    figures --kind exponents --in exponents.json --out exponents.png
"""

from __future__ import annotations

import argparse
import glob
import sys

from .render import SchemaError, render


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="figures", description=__doc__)
    ap.add_argument("--kind", required=True, choices=("profile", "collapse", "exponents"))
    ap.add_argument("--in", dest="inputs", required=True, nargs="+",
                    help="input files or globs (CSV; JSON for exponents)")
    ap.add_argument("--out", required=True, help="output image path (png/svg/pdf)")
    ap.add_argument("--ref-curve", dest="ref_curve",
                    help="dashed reference curve in y, e.g. '0.1+2*y**3'")
    args = ap.parse_args(argv)

    files = []
    for pattern in args.inputs:
        hits = sorted(glob.glob(pattern))
        files.extend(hits if hits else [pattern])

    try:
        render(args.kind, files, args.out, ref_curve=args.ref_curve)
    except (SchemaError, FileNotFoundError, ValueError) as e:
        print(f"figures: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
