#!/usr/bin/env python3
"""Plot a `dcf sweep` CSV: throughput and capacity versus the swept axis.

Example:
    dcf sweep --axis lambda --from 0.5 --to 50 --points 40 --log --out out
    python3 scripts/plot_sweep.py out/sweep.csv --logx --xlabel "lambda (pkt/s)"

The CSV contract is the whole interface: this script is documentation for
consuming the files, not part of the tool itself.
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_report(path):
    """Return (manifest_lines, rows) from a '#'-commented dcf CSV."""
    manifest, rows = [], []
    with open(path, newline="") as fh:
        header = None
        for line in fh:
            if line.startswith("#"):
                manifest.append(line[1:].strip())
                continue
            if header is None:
                header = line.strip().split(",")
                continue
            rows.append(dict(zip(header, next(csv.reader([line])))))
    return manifest, rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", type=Path, help="sweep.csv produced by `dcf sweep`")
    ap.add_argument("-o", "--output", type=Path, help="PNG path (default: alongside the CSV)")
    ap.add_argument("--logx", action="store_true", help="logarithmic x axis")
    ap.add_argument("--xlabel", default="axis value")
    args = ap.parse_args()

    manifest, rows = read_report(args.csv)
    if not rows:
        raise SystemExit(f"{args.csv}: no data rows")
    x = [float(r["axis_value"]) for r in rows]
    s = [float(r["S_bps"]) for r in rows]
    s_m = [float(r["S_m_bps"]) for r in rows]

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(x, s, marker="o", label="throughput S")
    ax.plot(x, s_m, linestyle="--", label="link capacity S_m")
    if args.logx:
        ax.set_xscale("log")
    ax.set_xlabel(args.xlabel)
    ax.set_ylabel("bits/second")
    seed = next((m for m in manifest if m.startswith("seed:")), "")
    ax.set_title(f"dcf sweep ({seed})" if seed else "dcf sweep")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()

    out = args.output or args.csv.with_suffix(".png")
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
