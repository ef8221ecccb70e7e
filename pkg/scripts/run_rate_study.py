"""Rate study: mean selected-policy regret against sample size.

Runs the selection rule on repeated draws from the built-in rate truth and
writes a plot-ready CSV with one row per sample size. The fitted log-log
slope is printed with the full report.
"""

import argparse
import csv
import json

from polenv.experiment import default_rate_truth, run_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=100, help="replications per sample size")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument(
        "--ns",
        type=int,
        nargs="+",
        default=[125, 250, 500, 1000, 2000, 4000, 8000],
        help="sample sizes to sweep",
    )
    ap.add_argument("--out", default="rate_study.csv", help="output CSV path")
    args = ap.parse_args(argv)

    report = run_experiment(
        "rate", default_rate_truth(), ns=tuple(args.ns), reps=args.reps, seed=args.seed
    )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "mean_regret"])
        for n, mean in zip(report.summary["ns"], report.summary["means"]):
            writer.writerow([n, mean])
    print(json.dumps(report.payload(), indent=2))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
