"""Fixed-sample designs: boundary constant and true error rates per method.

Usage:
    python scripts/fixed_designs.py --simpson-r 6 8 10 --delta-r 8 32 --replicates 100000 1000000
"""

import argparse

from _common import print_rows, spec_for, true_errors, write_csv
from mgst.delta import solve_boundaries_delta
from mgst.design import stage_targets
from mgst.montecarlo import solve_boundaries_mc
from mgst.simpson import solve_boundaries

SAMPLE_SIZE = {"linear": 100, "signed_product": 103}


def rows_for(name, args):
    spec = spec_for(name, 1)
    n = [SAMPLE_SIZE[name]]
    targets = stage_targets(spec, 1.0)
    designs = [("simpson", f"r={r}", solve_boundaries(spec, targets, n, r)) for r in args.simpson_r]
    designs += [("delta", f"r={r}", solve_boundaries_delta(spec, targets, n, r)) for r in args.delta_r]
    designs += [
        ("monte-carlo", f"N={N}", solve_boundaries_mc(spec, targets, n, N, args.seed)) for N in args.replicates
    ]
    rows = []
    for method, setting, bnd in designs:
        psi, xi = true_errors(spec, bnd, n, args.true_r)
        rows.append({"statistic": name, "method": method, "setting": setting, "b": float(bnd.b[0]),
                     "psi": float(psi[0]), "xi": float(xi[0])})
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--statistic", choices=["linear", "signed_product", "both"], default="both")
    parser.add_argument("--simpson-r", type=int, nargs="*", default=[6, 8, 10])
    parser.add_argument("--delta-r", type=int, nargs="*", default=[8, 32])
    parser.add_argument("--replicates", type=int, nargs="*", default=[100_000, 1_000_000])
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--true-r", type=int, default=32,
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
