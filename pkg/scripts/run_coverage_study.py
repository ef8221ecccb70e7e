"""Coverage study: certificate, sandwich and selection-containment rates.

Runs the three guarantee checks against the built-in coverage truth at their
reference parameters and writes one CSV row per experiment kind.
"""

import argparse
import csv
import json

from polenv.experiment import default_coverage_truth, run_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--kappa", type=float, default=0.9)
    ap.add_argument("--a", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--certificate-n", type=int, default=500)
    ap.add_argument("--levelset-n", type=int, default=1000)
    ap.add_argument("--out", default="coverage_study.csv", help="output CSV path")
    args = ap.parse_args(argv)

    truth = default_coverage_truth()
    reports = [
        run_experiment(
            "certificate",
            truth,
            n=args.certificate_n,
            reps=args.reps,
            kappa=args.kappa,
            seed=args.seed,
        ),
        run_experiment(
            "sandwich",
            truth,
            n=args.levelset_n,
            reps=args.reps,
            kappa=args.kappa,
            a=args.a,
            seed=args.seed,
        ),
        run_experiment(
            "eme",
            truth,
            n=args.levelset_n,
            reps=args.reps,
            kappa=args.kappa,
            a=args.a,
            seed=args.seed,
        ),
    ]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "coverage", "detail"])
        for rep in reports:
            detail = {k: v for k, v in rep.summary.items() if k != "coverage"}
            writer.writerow([rep.kind, rep.summary["coverage"], json.dumps(detail)])
    for rep in reports:
        print(json.dumps(rep.payload()))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
