#!/usr/bin/env python3
"""Plot gap/error curves from one or more svi summary.csv files."""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    rows = defaultdict(list)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            rows[row["scheme"]].append(row)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("summaries", nargs="+", help="summary.csv files")
    ap.add_argument("-o", "--output", default="svi-curves.png")
    ap.add_argument(
        "--metric",
        default="gap_median",
        choices=["gap_median", "gap_mean", "err_median", "err_mean", "dist_iter_mean"],
    )
    ap.add_argument(
        "--x",
        default="k",
        choices=["k", "proj_full", "samples"],
        help="abscissa column",
    )
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(7, 5))
    for path in args.summaries:
        for scheme, rows in sorted(load(path).items()):
            xs, ys = [], []
            for row in rows:
                if not row[args.metric]:
                    continue
                x = float(row[args.x])
                y = float(row[args.metric])
                if x > 0 and y > 0:
                    xs.append(x)
                    ys.append(y)
            if xs:
                label = scheme if len(args.summaries) == 1 else f"{path}:{scheme}"
                ax.loglog(xs, ys, marker="o", label=label)
    ax.set_xlabel(args.x)
    ax.set_ylabel(args.metric)
    ax.grid(True, which="both", ls=":", alpha=0.5)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
