#!/usr/bin/env python3
"""Overlay the two windowed traces from `dcf fig7`: fixed parameters versus
per-interval tuning, over the on/off station timeline.

Example:
    dcf fig7 --seed 11 --out out
    python3 scripts/plot_fig7.py out/fig7_baseline.csv out/fig7_optimized.csv

The CSV contract is the whole interface: this script is documentation for
consuming the files, not part of the tool itself.
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_trace(path):
    rows = []
    with open(path, newline="") as fh:
        header = None
        for line in fh:
            if line.startswith("#"):
                continue
            if header is None:
                header = line.strip().split(",")
                continue
            rows.append(dict(zip(header, next(csv.reader([line])))))
    return rows


def steps(rows):
    """Window edges and per-window throughput as step-plot arrays."""
    xs, ys = [], []
    for r in rows:
        xs += [float(r["t_start_s"]), float(r["t_end_s"])]
        ys += [float(r["S_bps"])] * 2
    return xs, ys


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("baseline", type=Path, help="fig7_baseline.csv")
    ap.add_argument("optimized", type=Path, help="fig7_optimized.csv")
    ap.add_argument("-o", "--output", type=Path, help="PNG path (default: fig7.png beside inputs)")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for path, label in [(args.baseline, "fixed W0/payload"), (args.optimized, "tuned per interval")]:
        rows = read_trace(path)
        if not rows:
            raise SystemExit(f"{path}: no data rows")
        ax.plot(*steps(rows), label=label)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("windowed throughput (bits/second)")
    ax.set_title("dcf fig7: on/off station timeline")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()

    out = args.output or args.baseline.parent / "fig7.png"
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
