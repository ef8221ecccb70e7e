"""One-command tour: simulate, bound, select, certify.

Draws a sample from the built-in coverage truth, prints the per-policy
envelope next to the population envelope, then runs the selection rule and
its regret certificate. Pass --out to also write the empirical curve as CSV.
"""

import argparse

from polenv import (
    certificate_cn,
    eme_select,
    empirical_measure,
    envelope_curve,
    write_curve_csv,
)
from polenv.experiment import default_coverage_truth
from polenv.simulate import draw_sample, model_for, population_measure


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000, help="sample size")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kappa", type=float, default=0.9)
    ap.add_argument("--out", default=None, help="optional CSV path for the curve")
    args = ap.parse_args(argv)

    truth = default_coverage_truth()
    sample = draw_sample(truth, args.n, args.seed)
    model = model_for(truth, sample)
    emp = envelope_curve(model, empirical_measure(model, sample))
    pop = envelope_curve(model, population_measure(truth))

    print(f"{'policy':>10} {'emp lower':>10} {'emp upper':>10} {'pop lower':>10} {'pop upper':>10}")
    for i, gid in enumerate(emp.gamma_ids):
        print(
            f"{gid:>10} {emp.lower[i]:>10.4f} {emp.upper[i]:>10.4f}"
            f" {pop.lower[i]:>10.4f} {pop.upper[i]:>10.4f}"
        )

    sel = eme_select(model, sample)
    cert = certificate_cn(model, sample, args.kappa, seed=args.seed)
    print(f"selected: {sel.gamma_id} (epsilon {sel.epsilon:.6f})")
    print(
        f"certificate: regret <= {cert.c_n:.4f} with prob >= {args.kappa}"
        f" (r_n {cert.r_n:.4f}, valid {cert.valid})"
    )
    if args.out:
        write_curve_csv(args.out, emp)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
