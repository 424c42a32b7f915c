"""Design inputs, error-spending stage targets and decision regions."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, ScheduleOrderError
from .gaussian import as_vector, information, validate_cov
from .statistic import SummaryStatistic


@dataclass(frozen=True)
class SpendingFunction:
    """Power-family spending function ``budget * min(t**exponent, 1)``."""

    exponent: float = 2.0
    family: str = "power"

    def __post_init__(self):
        if self.family != "power":
            raise ConfigurationError(f"unknown spending family {self.family!r}")
        if not self.exponent > 0:
            raise ConfigurationError("spending exponent must be positive")

    def __call__(self, t: float, budget: float) -> float:
        if t <= 0:
            return 0.0
        return budget * min(t**self.exponent, 1.0)

    def to_dict(self) -> dict:
        return {"family": self.family, "exponent": self.exponent}


@dataclass
class DesignSpec:
    """Everything fixed at the design stage.

    ``nuisance`` is the matrix M with Sigma^(k) = M / n^(k). ``schedule`` is
    either ``"equal"`` (information fractions k/K) or a list of K strictly
    increasing information levels.
    """

    K: int
    alpha: float
    beta: float
    theta0: np.ndarray
    thetaA: np.ndarray
    nuisance: np.ndarray
    statistic: SummaryStatistic
    spending1: SpendingFunction = field(default_factory=SpendingFunction)
    spending2: SpendingFunction = field(default_factory=SpendingFunction)
    schedule: str | Sequence[float] = "equal"

    def __post_init__(self):
        if not isinstance(self.K, (int, np.integer)) or self.K < 1:
            raise ConfigurationError("invalid analysis count")
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ConfigurationError("alpha and beta must lie in (0, 1)")
        self.theta0 = as_vector(self.theta0, "theta0")
        self.thetaA = as_vector(self.thetaA, "thetaA")
        self.nuisance = validate_cov(self.nuisance)
        p = self.statistic.p
        if self.theta0.size != p or self.thetaA.size != p or self.nuisance.shape != (p, p):
            raise ConfigurationError("dimension mismatch between statistic, hypotheses and nuisance matrix")
        if self.statistic(self.thetaA) <= self.statistic(self.theta0):
            raise ConfigurationError("statistic must be larger at thetaA than at theta0")
        if not isinstance(self.schedule, str):
            levels = np.asarray(self.schedule, dtype=float)
            if levels.size != self.K:
                raise ConfigurationError("schedule length must equal K")
            check_increasing(levels)
        elif self.schedule != "equal":
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")

    @property
    def p(self) -> int:
        return self.statistic.p

    def sigmas(self, n_schedule: Sequence[float], nuisance=None) -> list[np.ndarray]:
        m = self.nuisance if nuisance is None else np.asarray(nuisance, dtype=float)
        n = np.asarray(n_schedule, dtype=float)
        check_increasing(n)
        return [m / nk for nk in n]

    def information_levels(self, n_schedule: Sequence[float], nuisance=None) -> np.ndarray:
        return np.array([information(s) for s in self.sigmas(n_schedule, nuisance)])

    def replace(self, **changes) -> "DesignSpec":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return DesignSpec(**values)


def check_increasing(levels) -> None:
    levels = np.asarray(levels, dtype=float)
    if np.any(~np.isfinite(levels)) or np.any(levels <= 0):
        raise ScheduleOrderError("information levels must be positive and finite")
    if np.any(np.diff(levels) <= 0):
        raise ScheduleOrderError("information levels must be strictly increasing")


@dataclass(frozen=True)
class StageTargets:
    psi: np.ndarray
    xi: np.ndarray

    @property
    def K(self) -> int:
        return len(self.psi)


def stage_targets(spec: DesignSpec, i_max: float, levels: Sequence[float] | None = None) -> StageTargets:
    """Stage-wise error budgets from the two spending functions.

    ``levels`` defaults to the design's schedule; for ``"equal"`` the levels are
    k/K * i_max. The design is truncated at the first analysis whose level
    reaches ``i_max``, which then receives the whole remaining budget.
    """
    if not i_max > 0:
        raise ConfigurationError("i_max must be positive")
    if levels is None:
        if isinstance(spec.schedule, str):
            levels = i_max * np.arange(1, spec.K + 1) / spec.K
        else:
            levels = spec.schedule
    levels = np.asarray(levels, dtype=float)
    check_increasing(levels)
    fractions = levels / i_max
    reached = np.nonzero(fractions >= 1.0 - 1e-12)[0]
    if reached.size:
        fractions = fractions[: reached[0] + 1].copy()
        fractions[-1] = max(fractions[-1], 1.0)
    cum1 = np.array([spec.spending1(t, spec.alpha) for t in fractions])
    cum2 = np.array([spec.spending2(t, spec.beta) for t in fractions])
    psi = np.diff(cum1, prepend=0.0)
    xi = np.diff(cum2, prepend=0.0)
    return StageTargets(psi=np.maximum(psi, 0.0), xi=np.maximum(xi, 0.0))


@dataclass
class Boundaries:
    """Per-stage futility (a) and efficacy (b) constants with realised stage errors."""

    a: np.ndarray
    b: np.ndarray
    realized_psi: np.ndarray
    realized_xi: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.realized_psi = np.asarray(self.realized_psi, dtype=float)
        self.realized_xi = np.asarray(self.realized_xi, dtype=float)
        if np.any(self.a > self.b):
            raise ConfigurationError("futility constant exceeds efficacy constant")
        if self.a[-1] != self.b[-1]:
            raise ConfigurationError("final analysis must have a == b")

    @property
    def K(self) -> int:
        return len(self.a)

    def to_dict(self) -> dict:
        return {
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "realized_psi": self.realized_psi.tolist(),
            "realized_xi": self.realized_xi.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Boundaries":
        K = len(d["a"])
        return cls(
            a=d["a"],
            b=d["b"],
            realized_psi=d.get("realized_psi", [np.nan] * K),
            realized_xi=d.get("realized_xi", [np.nan] * K),
        )


class Region(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    CONTINUE = "continue"


def region_of(boundaries: Boundaries, k: int, delta_value: float) -> Region:
    """Decision at analysis ``k`` (1-based): reject on delta >= b, accept on delta < a."""
    if not 1 <= k <= boundaries.K:
        raise ConfigurationError(f"stage {k} outside 1..{boundaries.K}")
    if delta_value >= boundaries.b[k - 1]:
        return Region.REJECT
    if delta_value < boundaries.a[k - 1]:
        return Region.ACCEPT
    return Region.CONTINUE


def worst_case_null(
    boundaries: Boundaries,
    candidates: Sequence,
    type1_total: Callable[[np.ndarray, Boundaries], float],
) -> np.ndarray:
    """Candidate null point with the largest overall type 1 error.

    ``type1_total(theta, boundaries)`` is supplied by the active engine.
    Ties go to the earliest candidate.
    """
    candidates = [as_vector(c, "candidate") for c in candidates]
    if not candidates:
        raise ConfigurationError("need at least one candidate null point")
    if len(candidates) == 1:
        return candidates[0]
    values = [type1_total(c, boundaries) for c in candidates]
    return candidates[int(np.argmax(values))]
