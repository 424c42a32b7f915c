"""Global summary statistics: evaluation, gradients and last-coordinate inversion."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError


class SummaryStatistic:
    """Scalar summary of a p-vector of treatment effects.

    Subclasses implement ``_evaluate`` on an ``(n, p)`` array and
    ``last_coord_roots``. ``max_roots`` is the declared upper bound on the
    number of solutions of ``stat(prefix, t) == level`` in ``t``; the Simpson
    engine refuses statistics that exceed it.
    """

    p: int
    max_roots: int = 1
    name: str = "statistic"

    def evaluate(self, theta):
        arr = np.asarray(theta, dtype=float)
        if arr.shape[-1] != self.p:
            raise ConfigurationError(f"{self.name} expects {self.p} coordinates, got {arr.shape[-1]}")
        if arr.ndim == 1:
            return float(self._evaluate(arr[None, :])[0])
        flat = arr.reshape(-1, self.p)
        return self._evaluate(flat).reshape(arr.shape[:-1])

    __call__ = evaluate

    def _evaluate(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, theta) -> np.ndarray:
        """Central finite differences with step max(1e-6, 1e-6*|theta_j|)."""
        theta = np.asarray(theta, dtype=float)
        grad = np.empty(self.p)
        for j in range(self.p):
            h = max(1e-6, 1e-6 * abs(theta[j]))
            up, down = theta.copy(), theta.copy()
            up[j] += h
            down[j] -= h
            grad[j] = (self.evaluate(up) - self.evaluate(down)) / (2 * h)
        return grad

    def last_coord_roots(self, prefix, level: float) -> list[float]:
        raise NotImplementedError

    def _check_prefix(self, prefix) -> np.ndarray:
        prefix = np.asarray(prefix, dtype=float).reshape(-1)
        if prefix.size != self.p - 1:
            raise ConfigurationError(f"prefix must have {self.p - 1} entries, got {prefix.size}")
        return prefix

    def describe(self) -> dict:
        return {"name": self.name}


class LinearStatistic(SummaryStatistic):
    """Weighted sum of the coordinates."""

    name = "linear"
    max_roots = 1

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise ConfigurationError("linear weights must be finite and non-empty")
        if w[-1] == 0.0:
            raise ConfigurationError("last linear weight must be nonzero for inversion")
        self.weights = w
        self.p = w.size

    def _evaluate(self, theta):
        return theta @ self.weights

    def gradient(self, theta) -> np.ndarray:
        return self.weights.copy()

    def last_coord_roots(self, prefix, level):
        prefix = self._check_prefix(prefix)
        with np.errstate(over="ignore"):
            t = float((level - prefix @ self.weights[:-1]) / self.weights[-1])
        return [t] if np.isfinite(t) else []

    def describe(self):
        return {"name": self.name, "weights": self.weights.tolist()}


class SignedProductStatistic(SummaryStatistic):
    """theta1*theta2, with the sign flipped when both effects are negative."""

    name = "signed_product"
    p = 2
    max_roots = 2

    def _evaluate(self, theta):
        prod = theta[:, 0] * theta[:, 1]
        both_negative = (theta[:, 0] < 0) & (theta[:, 1] < 0)
        return np.where(both_negative, -prod, prod)

    def gradient(self, theta) -> np.ndarray:
        t1, t2 = np.asarray(theta, dtype=float)
        # the boundary {t1<0, t2=0} uses the plain product branch
        if t1 < 0 and t2 < 0:
            return np.array([-t2, -t1])
        return np.array([t2, t1])

    def last_coord_roots(self, prefix, level):
        (x,) = self._check_prefix(prefix)
        with np.errstate(over="ignore"):
            return [t for t in self._roots(x, level) if np.isfinite(t)]

    @staticmethod
    def _roots(x, level):
        if x > 0:
            return [level / x]
        if x == 0:
            # stat(0, t) == 0 identically: no isolated crossings
            return []
        # x < 0: stat(x, t) = -|x||t| <= 0
        if level > 0:
            return []
        if level == 0:
            return [0.0]
        t = level / abs(x)
        return [t, -t]


class CallableStatistic(SummaryStatistic):
    """User statistic given as a plain function of a p-vector.

    Inversion scans the last coordinate over ``search_range`` in ``n_scan``
    subintervals and refines each sign change with Brent's method. Finding
    more roots than ``max_roots`` is a configuration error.
    """

    name = "callable"

    def __init__(
        self,
        func: Callable[[np.ndarray], float],
        p: int,
        max_roots: int,
        grad: Callable[[np.ndarray], np.ndarray] | None = None,
        search_range: tuple[float, float] = (-50.0, 50.0),
        n_scan: int = 69,
    ):
        if p < 1 or max_roots < 0:
            raise ConfigurationError("p must be >= 1 and max_roots >= 0")
        self.func = func
        self.p = p
        self.max_roots = max_roots
        self._grad = grad
        self.search_range = search_range
        self.n_scan = n_scan

    def _evaluate(self, theta):
        return np.array([float(self.func(row)) for row in theta])

    def gradient(self, theta):
        if self._grad is not None:
            return np.asarray(self._grad(np.asarray(theta, dtype=float)), dtype=float)
        return super().gradient(theta)

    def last_coord_roots(self, prefix, level):
        prefix = self._check_prefix(prefix)
        lo, hi = self.search_range
        ts = np.linspace(lo, hi, self.n_scan + 1)

        def h(t):
            return float(self.func(np.append(prefix, t))) - level

        vals = np.array([h(t) for t in ts])
        roots = []
        for i in range(self.n_scan):
            if vals[i] == 0.0:
                roots.append(float(ts[i]))
            elif vals[i] * vals[i + 1] < 0:
                roots.append(float(brentq(h, ts[i], ts[i + 1], xtol=1e-10)))
        if vals[-1] == 0.0:
            roots.append(float(ts[-1]))
        roots = sorted(set(roots))
        if len(roots) > self.max_roots:
            raise ConfigurationError(
                f"found {len(roots)} roots, more than the declared maximum {self.max_roots}"
            )
        return roots


def make_statistic(config: dict) -> SummaryStatistic:
    """Build a built-in statistic from its registry entry."""
    name = config.get("name")
    if name == "linear":
        if "weights" not in config:
            raise ConfigurationError("linear statistic needs 'weights'")
        return LinearStatistic(config["weights"])
    if name == "signed_product":
        return SignedProductStatistic()
    raise ConfigurationError(f"unknown statistic {name!r}")
