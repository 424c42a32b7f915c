"""Five-analysis error-spending designs: stage constants and true stage errors per method.

The linear design uses n^(k) = 22k and the signed product n^(k) = 23k, both
with power spending (exponent 2) of alpha = 0.025 and beta = 0.1.
"""

import argparse

import numpy as np

from _common import print_rows, spec_for, true_errors, write_csv
from mgst.delta import solve_boundaries_delta
from mgst.design import stage_targets
from mgst.montecarlo import solve_boundaries_mc
from mgst.simpson import solve_boundaries

GROUP = {"linear": 22, "signed_product": 23}


def rows_for(name, args):
    spec = spec_for(name, 5)
    n = GROUP[name] * np.arange(1, 6)
    targets = stage_targets(spec, 1.0)
    designs = [
        ("simpson", f"r={args.simpson_r}", solve_boundaries(spec, targets, n, args.simpson_r)),
        ("delta", f"r={args.delta_r}", solve_boundaries_delta(spec, targets, n, args.delta_r)),
    ]
    if args.replicates:
        mc = solve_boundaries_mc(spec, targets, n, args.replicates, args.seed, args.quantile)
        designs.append(("monte-carlo", f"N={args.replicates}", mc))
    rows = []
    for method, setting, bnd in designs:
        psi, xi = true_errors(spec, bnd, n, args.true_r)
        for k in range(5):
            rows.append({"statistic": name, "method": method, "setting": setting, "k": k + 1,
                         "a": float(bnd.a[k]), "b": float(bnd.b[k]), "psi": float(psi[k]), "xi": float(xi[k])})
        print(f"{name:15s} {method:12s} totals: psi={psi.sum():.5f} xi={xi.sum():.5f}")
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--statistic", choices=["linear", "signed_product", "both"], default="both")
    parser.add_argument("--simpson-r", type=int, default=6)
    parser.add_argument("--delta-r", type=int, default=128)
    parser.add_argument("--replicates", type=int, default=1_000_000, help="0 skips the Monte Carlo design")
    parser.add_argument("--quantile", choices=["conditional", "survivor"], default="conditional")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--true-r", type=int, default=10,
                        help="grid size for the reference errors of the non-linear statistic")
    parser.add_argument("--out", default=None, help="CSV file for the table")
    args = parser.parse_args()

    names = ["linear", "signed_product"] if args.statistic == "both" else [args.statistic]
    rows = [row for name in names for row in rows_for(name, args)]
    print_rows(rows)
    if args.out:
        write_csv(args.out, rows)


if __name__ == "__main__":
    main()
