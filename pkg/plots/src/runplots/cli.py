"""plot <kind> --in run.csv --out fig.png [--frame rotating]

Exit codes: 0 figure written, 1 usage or input error, 2 containment check
failed (true barrier value outside the certified band; rerun with
--skip-containment-check to render anyway).
"""

from __future__ import annotations

import argparse
import sys

from .io import MissingColumnError
from .render import KINDS, ContainmentError, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="plot",
        description="Render figures from closed-loop run logs.",
    )
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--in", dest="run_csv", required=True, metavar="RUN_CSV")
    ap.add_argument("--out", required=True, metavar="IMAGE")
    ap.add_argument("--frame", choices=("inertial", "rotating"), default="inertial")
    ap.add_argument(
        "--scenario", default=None,
        help="scenario JSON for obstacle / polytope overlays and the "
        "rotating-frame reference",
    )
    ap.add_argument(
        "--mode", choices=("auto", "per-family", "max"), default="auto",
        help="envelope curve selection (auto: max curve for >= 10 families)",
    )
    ap.add_argument("--skip-containment-check", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        run_csv=args.run_csv,
        kind=args.kind,
        out=args.out,
        frame=args.frame,
        scenario=args.scenario,
        check_containment=not args.skip_containment_check,
        envelope_mode=args.mode,
    )
    try:
        out = render(spec)
    except ContainmentError as e:
        print(f"containment check failed: {e}", file=sys.stderr)
        return 2
    except (MissingColumnError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
