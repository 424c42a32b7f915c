"""Shared setup for the reproduction scripts."""

import csv

import numpy as np

from mgst.design import DesignSpec
from mgst.simpson import evaluate_boundaries
from mgst.delta import evaluate_boundaries_delta
from mgst.statistic import LinearStatistic, SignedProductStatistic

NUISANCE = np.array([[40.0, 10.0], [10.0, 40.0]])
THETA0 = np.zeros(2)
THETA_A = np.array([1.625, 1.625])

STATISTICS = {
    "linear": LinearStatistic([1.0, 1.0]),
    "signed_product": SignedProductStatistic(),
}


def spec_for(name: str, K: int) -> DesignSpec:
    return DesignSpec(K=K, alpha=0.025, beta=0.1, theta0=THETA0, thetaA=THETA_A, nuisance=NUISANCE,
                      statistic=STATISTICS[name])


def true_errors(spec, boundaries, n_schedule, r_true):
    """Reference stage errors: exact univariate integration for a linear statistic, fine grid otherwise."""
    if isinstance(spec.statistic, LinearStatistic):
        return evaluate_boundaries_delta(spec, boundaries, n_schedule, 128)
    return evaluate_boundaries(spec, boundaries, n_schedule, r_true)


def write_csv(path, rows):
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def print_rows(rows):
    if not rows:
        return
    keys = list(rows[0])
    widths = {k: max(len(k), *(len(_cell(r[k])) for r in rows)) for k in keys}
    print("  ".join(k.rjust(widths[k]) for k in keys))
    for r in rows:
        print("  ".join(_cell(r[k]).rjust(widths[k]) for k in keys))


def _cell(v):
    if isinstance(v, float):
        return f"{v:.5f}"
    return str(v)
