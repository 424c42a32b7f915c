"""Information and sample-size calculation, and the nuisance-misspecification sweep.

The fixed-sample information comes from the multivariate Simpson engine; the
group-sequential inflation factor R comes from the univariate Delta engine, so
I_max = R * I_fix never needs a multivariate group-sequential search.
Information and sample size are linked by I = n |M|^(-1/2).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from .delta import DeltaEngine, information_ratio, laws, required_n
from .design import DesignSpec, stage_targets
from .errors import ConfigurationError, InfeasibleDesignError
from .simpson import SimpsonEngine

# safety cap on analyses added when realised information under-runs I_max
MAX_EXTRA_ANALYSES = 50


@dataclass(frozen=True)
class SizingResult:
    """Outcome of a sample-size calculation.

    ``n_gst`` is the continuous maximum sample size; ``n_schedule`` holds the
    integer cumulative sizes k * ceil(n_gst / K).
    """

    i_fix: float
    ratio: float
    i_max: float
    n_fixed: int
    n_gst: float
    n_schedule: list

    def to_dict(self) -> dict:
        return asdict(self)


def det_root(m) -> float:
    return float(np.sqrt(np.linalg.det(np.asarray(m, dtype=float))))


def equal_schedule(n_total: float, K: int) -> np.ndarray:
    """Integer cumulative sizes with a common group size ceil(n_total / K)."""
    group = math.ceil(n_total / K - 1e-9)
    return group * np.arange(1, K + 1)


def _fixed_gap(spec: DesignSpec, r: int, engine: str):
    fixed = spec.replace(K=1, schedule="equal")
    targets = stage_targets(fixed, 1.0)
    if engine == "simpson":
        eng = SimpsonEngine(spec.statistic, r)

        def gap(n):
            sig = spec.sigmas([n])
            a, b, _, _ = eng.solve_arrays(spec.theta0, spec.thetaA, sig, sig, targets, final_futility=True)
            return b[0] - a[0]

    elif engine == "delta":
        eng = DeltaEngine(r)

        def gap(n):
            law0, lawA = laws(spec, [n])
            a, b, _, _ = eng.solve(law0, lawA, targets, final_futility=True)
            return b[0] - a[0]

    else:
        raise ConfigurationError(f"unknown engine {engine!r} for sizing")
    return gap


def fixed_information(spec: DesignSpec, r: int = 16, engine: str = "simpson") -> float:
    """Information at which a single analysis meets both error requirements exactly.

    Searches continuous n for the point where the futility constant solved
    from the power requirement meets the efficacy constant solved from the
    significance level.
    """
    if spec.statistic(spec.thetaA) <= spec.statistic(spec.theta0):
        raise InfeasibleDesignError("power is unattainable: statistic does not increase from theta0 to thetaA")
    # start from the linearised answer
    law0, lawA = laws(spec, [1.0])
    z = norm.isf(spec.alpha) + norm.isf(spec.beta)
    n0 = (z * np.sqrt(max(law0.variances[0], lawA.variances[0])) / (lawA.mean - law0.mean)) ** 2
    n = required_n(_fixed_gap(spec, r, engine), max(n0, 1e-6))
    return n / det_root(spec.nuisance)


def max_information(spec: DesignSpec, r: int = 16, r_delta: int = 32, engine: str = "simpson") -> SizingResult:
    """I_max = R * I_fix with the equal-increment integer schedule."""
    i_fix = fixed_information(spec, r, engine)
    ratio = 1.0 if spec.K == 1 else information_ratio(spec, r_delta)[0]
    i_max = ratio * i_fix
    root = det_root(spec.nuisance)
    n_gst = i_max * root
    return SizingResult(
        i_fix=i_fix,
        ratio=ratio,
        i_max=i_max,
        n_fixed=math.ceil(i_fix * root - 1e-9),
        n_gst=n_gst,
        n_schedule=equal_schedule(n_gst, spec.K).tolist(),
    )


@dataclass(frozen=True)
class PowerResult:
    """Attained power of a design sized under one nuisance matrix and run under another."""

    power: float
    type1: float
    n_schedule: list
    analyses: int
    sizing: SizingResult


def realised_schedule(group: int, i_max: float, true_m, cap: int) -> np.ndarray:
    """Cumulative sizes up to the first analysis whose information reaches i_max."""
    root = det_root(true_m)
    for k in range(1, cap + 1):
        if k * group / root >= i_max * (1 - 1e-12):
            return group * np.arange(1, k + 1)
    raise InfeasibleDesignError(f"information does not reach I_max within {cap} analyses")


def attained_power(
    spec: DesignSpec,
    design_m,
    true_m,
    r: int = 6,
    engine: str = "simpson",
    sizing: SizingResult | None = None,
    r_size: int = 16,
    r_delta: int = 32,
) -> PowerResult:
    """Size under ``design_m``, then run the trial under ``true_m``.

    Group sizes are fixed at the design stage. At analysis time the
    boundaries are computed from the true matrix and the observed information
    fractions I^(k)/I_max; the trial stops at the first analysis with
    I^(k) >= I_max, which spends whatever error remains. A stage budget
    larger than the probability still in play is capped at that probability.
    """
    design_spec = spec.replace(nuisance=design_m)
    true_spec = spec.replace(nuisance=true_m)
    if sizing is None:
        sizing = max_information(design_spec, r_size, r_delta, engine)
    group = sizing.n_schedule[0]
    n = realised_schedule(group, sizing.i_max, true_m, spec.K + MAX_EXTRA_ANALYSES)
    levels = true_spec.information_levels(n)
    targets = stage_targets(true_spec, sizing.i_max, levels)
    sig = true_spec.sigmas(n)
    if engine == "simpson":
        eng = SimpsonEngine(spec.statistic, r)
        _, _, rpsi, rxi = eng.solve_arrays(spec.theta0, spec.thetaA, sig, sig, targets, cap_overspend=True)
    elif engine == "delta":
        law0, lawA = laws(true_spec, n)
        _, _, rpsi, rxi = DeltaEngine(r).solve(law0, lawA, targets, cap_overspend=True)
    else:
        raise ConfigurationError(f"unknown engine {engine!r}")
    return PowerResult(
        power=float(1.0 - np.sum(rxi)),
        type1=float(np.sum(rpsi)),
        n_schedule=n.tolist(),
        analyses=int(n.size),
        sizing=sizing,
    )


def correlation_matrix(rho: float, variance: float = 40.0) -> np.ndarray:
    return variance * np.array([[1.0, rho], [rho, 1.0]])


def _power_cell(args):
    spec, m_design, m_true, r, engine, sizing = args
    return attained_power(spec, m_design, m_true, r, engine, sizing=sizing)


def sensitivity_sweep(
    spec: DesignSpec,
    rho_design,
    rho_true,
    variance: float = 40.0,
    r: int = 6,
    engine: str = "simpson",
    r_size: int = 16,
    r_delta: int = 32,
    workers: int = 1,
) -> list[dict]:
    """Attained power over a grid of (designed, true) correlations.

    Grid cells are independent and are spread over ``workers`` processes.
    """
    sizings = {
        rt: max_information(spec.replace(nuisance=correlation_matrix(rt, variance)), r_size, r_delta, engine)
        for rt in rho_design
    }
    cells = [(rt, rho) for rt in rho_design for rho in rho_true]
    jobs = [
        (spec, correlation_matrix(rt, variance), correlation_matrix(rho, variance), r, engine, sizings[rt])
        for rt, rho in cells
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_power_cell, jobs))
    else:
        results = [_power_cell(j) for j in jobs]
    return [
        {
            "rho_design": float(rt),
            "rho_true": float(rho),
            "group_size": int(sizings[rt].n_schedule[0]),
            "analyses": res.analyses,
            "power": res.power,
            "type1": res.type1,
        }
        for (rt, rho), res in zip(cells, results)
    ]
