"""Standalone CSV-in/PNG-out entry points."""

from __future__ import annotations

import argparse
import sys

from .data import DEFAULT_BINS, SchemaError
from .figures import plot_curves, plot_histograms, plot_joint


def main_curves(argv=None) -> int:
    p = argparse.ArgumentParser(
        description="Overlay arrival/collision training curves from rates CSVs."
    )
    p.add_argument("--rates", nargs="+", required=True, help="rates.csv per run")
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output image path")
    args = p.parse_args(argv)
    try:
        path = plot_curves(args.rates, args.labels, args.out)
    except (SchemaError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(path)
    return 0


def main_histograms(argv=None) -> int:
    p = argparse.ArgumentParser(
        description="Density histograms and joint distributions from "
        "trajectory CSVs."
    )
    p.add_argument("--trajectories", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--no-joint", action="store_true")
    args = p.parse_args(argv)
    try:
        written = plot_histograms(args.trajectories, args.out_dir, bins=args.bins)
        if not args.no_joint:
            written += plot_joint(args.trajectories, args.out_dir, bins=args.bins)
    except (SchemaError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for w in written:
        print(w)
    return 0
