"""Delta-approximation engine.

The statistic of the multivariate estimate is replaced by its first-order
expansion, which turns the sequence of statistic values into a univariate
canonical joint distribution: mean Delta(theta), variance g' Sigma^(k) g and
independent increments. Boundaries are then found with the Simpson recursion
in one dimension.

For a linear statistic the expansion is exact. For a curved statistic it is
not, and this engine reproduces the resulting bias on purpose so the methods
can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .design import Boundaries, DesignSpec, StageTargets, stage_targets
from .errors import ConfigurationError, DegenerateLawError
from .gaussian import as_vector
from .simpson import SimpsonEngine, _solve_level
from .statistic import LinearStatistic, SummaryStatistic

# identity statistic on the one-dimensional scale
_IDENTITY = LinearStatistic([1.0])


@dataclass(frozen=True)
class UnivariateLaw:
    """Approximate law of the statistic values: N(mean, variances[k]) with independent increments."""

    mean: float
    variances: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float)
        object.__setattr__(self, "variances", v)
        if np.any(~(v > 0)):
            raise DegenerateLawError("approximate variances must be positive")
        if np.any(np.diff(v) >= 0):
            raise DegenerateLawError("approximate variances must decrease across analyses")

    @property
    def K(self) -> int:
        return self.variances.size

    def sigmas(self) -> list[np.ndarray]:
        return [np.array([[v]]) for v in self.variances]

    def correlation(self, k1: int, k2: int) -> float:
        """Corr between analyses k1 <= k2 (0-based): sqrt(var_k2 / var_k1)."""
        if k1 > k2:
            k1, k2 = k2, k1
        return float(np.sqrt(self.variances[k2] / self.variances[k1]))


def approx_law(stat: SummaryStatistic, theta, grad_point, sigmas: Sequence[np.ndarray]) -> UnivariateLaw:
    """First-order law of Delta(theta_hat^(k)) with the gradient taken at ``grad_point``."""
    theta = as_vector(theta, "theta")
    g = stat.gradient(as_vector(grad_point, "grad_point"))
    if not np.any(g != 0.0):
        raise DegenerateLawError(f"gradient of {stat.name} vanishes at {np.asarray(grad_point).tolist()}")
    variances = np.array([float(g @ np.asarray(s, dtype=float) @ g) for s in sigmas])
    return UnivariateLaw(mean=float(stat(theta)), variances=variances)


def gradient_points(stat: SummaryStatistic, theta0, thetaA) -> tuple[np.ndarray, np.ndarray]:
    """Points at which the null and alternative laws take their gradients.

    Each hypothesis uses its own point unless the gradient vanishes there, in
    which case the other hypothesis' point is substituted.
    """
    theta0 = as_vector(theta0, "theta0")
    thetaA = as_vector(thetaA, "thetaA")
    zero0 = not np.any(stat.gradient(theta0) != 0.0)
    zeroA = not np.any(stat.gradient(thetaA) != 0.0)
    if zero0 and zeroA:
        raise DegenerateLawError("gradient vanishes at both hypotheses")
    return (thetaA if zero0 else theta0), (theta0 if zeroA else thetaA)


def laws(spec: DesignSpec, n_schedule, nuisance=None) -> tuple[UnivariateLaw, UnivariateLaw]:
    """Approximate laws under theta0 and thetaA for a sample-size schedule."""
    sig = spec.sigmas(n_schedule, nuisance)
    gp0, gpA = gradient_points(spec.statistic, spec.theta0, spec.thetaA)
    return (
        approx_law(spec.statistic, spec.theta0, gp0, sig),
        approx_law(spec.statistic, spec.thetaA, gpA, sig),
    )


class DeltaEngine:
    """Boundary search and evaluation on the approximate univariate scale."""

    name = "delta"

    def __init__(self, r: int):
        self.r = r
        self._engine = SimpsonEngine(_IDENTITY, r)

    def solve(self, law0: UnivariateLaw, lawA: UnivariateLaw, targets: StageTargets,
              final_futility: bool = False, cap_overspend: bool = False):
        K = targets.K
        return self._engine.solve_arrays(
            [law0.mean], [lawA.mean], law0.sigmas()[:K], lawA.sigmas()[:K], targets, final_futility,
            cap_overspend,
        )

    def evaluate(self, law: UnivariateLaw, boundaries: Boundaries) -> tuple[np.ndarray, np.ndarray]:
        return self._engine.evaluate([law.mean], law.sigmas()[: boundaries.K], boundaries)


def solve_boundaries_delta(spec: DesignSpec, targets: StageTargets, n_schedule, r: int) -> Boundaries:
    """Boundary constants from the univariate error-spending equations."""
    law0, lawA = laws(spec, n_schedule)
    a, b, rpsi, rxi = DeltaEngine(r).solve(law0, lawA, targets)
    return Boundaries(a=a, b=b, realized_psi=rpsi, realized_xi=rxi)


def evaluate_boundaries_delta(
    spec: DesignSpec, boundaries: Boundaries, n_schedule, r: int, nuisance=None
) -> tuple[np.ndarray, np.ndarray]:
    """(psi, xi) of given boundaries under the approximate laws.

    These are the true stage probabilities when the statistic is linear.
    """
    law0, lawA = laws(spec, np.asarray(n_schedule)[: boundaries.K], nuisance)
    eng = DeltaEngine(r)
    psi, _ = eng.evaluate(law0, boundaries)
    _, xi = eng.evaluate(lawA, boundaries)
    return psi, xi


def _equal_targets(spec: DesignSpec, K: int) -> StageTargets:
    return stage_targets(spec.replace(K=K, schedule="equal"), 1.0)


def required_n(solve_gap, n_start: float) -> float:
    """Continuous n at which the final futility and efficacy constants coincide.

    ``solve_gap(n)`` returns b^(K) - a^(K) for the equally spaced schedule
    n*k/K; it is positive when the trial is too small.
    """
    if not n_start > 0:
        raise ConfigurationError("starting sample size must be positive")

    # the gap shrinks as log n grows; find where it changes sign
    logn = _solve_level(lambda ln: solve_gap(float(np.exp(ln))), 0.0, np.log(n_start), 0.05)
    return float(np.exp(logn))


def information_ratio(spec: DesignSpec, r: int) -> tuple[float, float, float]:
    """(R, I~_fix, I~_max) computed entirely on the approximate univariate scale.

    I~ levels are reported as n|M|^(-1/2) for the sample size each univariate
    design needs, so R = I~_max / I~_fix is the inflation of the group
    sequential design over the fixed one.
    """
    det_root = float(np.sqrt(np.linalg.det(spec.nuisance)))
    eng = DeltaEngine(r)
    fixed_targets = _equal_targets(spec, 1)
    gst_targets = _equal_targets(spec, spec.K)

    def gap_for(targets: StageTargets):
        K = targets.K

        def gap(n):
            law0, lawA = laws(spec, n * np.arange(1, K + 1) / K)
            a, b, _, _ = eng.solve(law0, lawA, targets, final_futility=True)
            return b[-1] - a[-1]

        return gap

    # closed form start for the fixed design on the approximate scale
    law0, lawA = laws(spec, [1.0])
    z = norm.isf(spec.alpha) + norm.isf(spec.beta)
    sd1 = np.sqrt(max(law0.variances[0], lawA.variances[0]))
    n0 = (z * sd1 / (lawA.mean - law0.mean)) ** 2
    n_fix = required_n(gap_for(fixed_targets), n0)
    if spec.K == 1:
        n_max = n_fix
    else:
        n_max = required_n(gap_for(gst_targets), n_fix * 1.1)
    i_fix = n_fix / det_root
    i_max = n_max / det_root
    return i_max / i_fix, i_fix, i_max
