"""Multivariate Simpson engine.

Subdensities of the sequential estimates are carried on tensor-product grids
(one axis per endpoint). The first p-1 coordinates are always integrated over
their full axes; the last coordinate is cut into segments at the points where
the statistic crosses a boundary constant, and each segment that belongs to
the region of interest is integrated with its own truncated Simpson rule.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .design import Boundaries, DesignSpec, StageTargets, stage_targets
from .errors import ConfigurationError, InfeasibleDesignError
from .gaussian import cholesky_pd, information_gain_check, mvn_density_batch, regression_matrix
from .statistic import SummaryStatistic

MERGE_TOL = 1e-12
MAX_P = 3
# number of (new point, previous point) pairs evaluated per block
KERNEL_BLOCK = 4_000_000


# ---------------------------------------------------------------------------
# one-dimensional rules


def standard_base_points(r: int) -> np.ndarray:
    """The 6r-1 standardised points: log-spaced tails, linear over [-3, 3]."""
    if r < 1:
        raise ConfigurationError("grid size r must be >= 1")
    i = np.arange(1, 6 * r)
    return np.where(
        i < r,
        -3.0 - 4.0 * np.log(r / i),
        np.where(i <= 5 * r, -3.0 + 3.0 * (i - r) / (2.0 * r), 3.0 + 4.0 * np.log(r / (6.0 * r - i))),
    )


def simpson_rule(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Composite Simpson nodes and weights on panels between consecutive ``points``.

    Panel midpoints are inserted, so ``len(points) = m`` gives ``2m - 1`` nodes.
    """
    z = np.asarray(points, dtype=float)
    h = np.diff(z)
    nodes = np.empty(2 * z.size - 1)
    nodes[0::2] = z
    nodes[1::2] = 0.5 * (z[:-1] + z[1:])
    weights = np.zeros_like(nodes)
    weights[1::2] = 4.0 * h / 6.0
    weights[0:-1:2] += h / 6.0
    weights[2::2] += h / 6.0
    return nodes, weights


@dataclass(frozen=True)
class Axis:
    """Unbounded Simpson grid for one coordinate."""

    nodes: np.ndarray
    weights: np.ndarray
    base: np.ndarray

    @property
    def lo(self) -> float:
        return float(self.base[0])

    @property
    def hi(self) -> float:
        return float(self.base[-1])

    def truncated(self, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
        """Simpson rule on [lo, hi] clipped to the axis.

        Base points strictly inside are kept, the ends are inserted, and
        panel midpoints are rebuilt. Ends within ``MERGE_TOL`` of a base point
        replace it.
        """
        lo = max(lo, self.lo)
        hi = min(hi, self.hi)
        if not hi > lo:
            return np.empty(0), np.empty(0)
        scale = MERGE_TOL * max(1.0, abs(lo), abs(hi))
        inner = self.base[(self.base > lo + scale) & (self.base < hi - scale)]
        z = np.concatenate(([lo], inner, [hi]))
        return simpson_rule(z)


def build_axis(center: float, variance: float, r: int) -> Axis:
    if not variance > 0:
        raise ConfigurationError("axis variance must be positive")
    base = center + np.sqrt(variance) * standard_base_points(r)
    nodes, weights = simpson_rule(base)
    return Axis(nodes=nodes, weights=weights, base=base)


# ---------------------------------------------------------------------------
# slicing the last coordinate


@dataclass(frozen=True)
class SegmentSlice:
    cuts: np.ndarray
    inside: np.ndarray

    def segments(self):
        for s in np.nonzero(self.inside)[0]:
            yield float(self.cuts[s]), float(self.cuts[s + 1])


def _roots(stat: SummaryStatistic, prefix, level: float) -> list[float]:
    if not np.isfinite(level):
        return []
    roots = stat.last_coord_roots(prefix, level)
    if len(roots) > stat.max_roots:
        raise ConfigurationError(
            f"statistic returned {len(roots)} roots, more than its declared maximum {stat.max_roots}"
        )
    return roots


def slice_axis(
    stat: SummaryStatistic,
    prefix,
    lower: float,
    upper: float,
    axis_range: tuple[float, float],
) -> SegmentSlice:
    """Split the last coordinate into segments of constant membership in [lower, upper)."""
    if lower > upper:
        raise ConfigurationError("lower limit exceeds upper limit")
    prefix = np.asarray(prefix, dtype=float).reshape(-1)
    cuts = np.array(sorted([-np.inf, *_roots(stat, prefix, lower), *_roots(stat, prefix, upper), np.inf]))
    cuts = cuts[np.concatenate(([True], np.diff(cuts) > 0))]
    lo_ax, hi_ax = axis_range
    left = cuts[:-1].copy()
    right = cuts[1:].copy()
    # unbounded ends are pulled in to the finite grid before taking midpoints
    left = np.where(np.isinf(left), np.minimum(lo_ax, right - 1.0), left)
    right = np.where(np.isinf(right), np.maximum(hi_ax, left + 1.0), right)
    mids = 0.5 * (left + right)
    pts = np.column_stack([np.broadcast_to(prefix, (mids.size, prefix.size)), mids])
    vals = np.atleast_1d(stat.evaluate(pts))
    inside = (vals >= lower) & (vals < upper)
    return SegmentSlice(cuts=cuts, inside=inside)


# ---------------------------------------------------------------------------
# layers


class _Kernel:
    """Evaluates sum_i c_i f(x | x_i) for the conditional normal transition."""

    def __init__(self, theta, sigma_prev, sigma_curr, points, coef):
        information_gain_check(sigma_prev, sigma_curr)
        A = regression_matrix(sigma_prev, sigma_curr)
        cond = sigma_curr - A @ sigma_curr
        cond = 0.5 * (cond + cond.T)
        self.L = cholesky_pd(cond)
        self.theta = np.asarray(theta, dtype=float)
        keep = coef != 0.0
        self.coef = coef[keep]
        y_prev = np.linalg.solve(self.L, A @ (points[keep] - self.theta).T).T
        self.y_prev = y_prev
        self.sq_prev = np.einsum("ij,ij->i", y_prev, y_prev)
        p = self.L.shape[0]
        self.log_norm = 0.5 * p * np.log(2 * np.pi) + np.sum(np.log(np.diag(self.L)))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        if self.coef.size == 0:
            out[:] = 0.0
            return out
        y = np.linalg.solve(self.L, (x - self.theta).T).T
        sq = np.einsum("ij,ij->i", y, y)
        block = max(1, KERNEL_BLOCK // max(1, self.coef.size))
        for s in range(0, x.shape[0], block):
            e = slice(s, s + block)
            q = sq[e, None] + self.sq_prev[None, :] - 2.0 * (y[e] @ self.y_prev.T)
            np.maximum(q, 0.0, out=q)
            dens = np.exp(-0.5 * q - self.log_norm)
            out[e] = dens @ self.coef
        return out


@dataclass
class GridLayer:
    """Subdensity of one analysis on its tensor grid.

    ``subdensity`` holds g on the full grid; ``density`` evaluates g anywhere
    (needed at segment ends, which move with the boundary constants).
    """

    axes: list[Axis]
    subdensity: np.ndarray
    density: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    theta: np.ndarray
    sigma: np.ndarray

    @property
    def p(self) -> int:
        return len(self.axes)

    def grid_points(self) -> np.ndarray:
        mesh = np.meshgrid(*[ax.nodes for ax in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def total_mass(self) -> float:
        w = _tensor_weights([ax.weights for ax in self.axes])
        return float(np.sum(w * self.subdensity))


def _tensor_weights(ws: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(())
    for w in ws:
        out = np.multiply.outer(out, w)
    return out


def _axes_for(theta, sigma, r) -> list[Axis]:
    return [build_axis(theta[j], sigma[j, j], r) for j in range(len(theta))]


def first_layer(theta, sigma1, r: int) -> GridLayer:
    """Stage-1 layer: the unconditional normal density on the grid."""
    theta = np.asarray(theta, dtype=float)
    sigma1 = np.asarray(sigma1, dtype=float)
    _check_dim(theta.size)
    L = cholesky_pd(sigma1)
    axes = _axes_for(theta, sigma1, r)

    def density(x):
        return mvn_density_batch(np.atleast_2d(x), theta, L)

    layer = GridLayer(axes=axes, subdensity=np.empty(()), density=density, theta=theta, sigma=sigma1)
    layer.subdensity = density(layer.grid_points()).reshape([len(ax.nodes) for ax in axes])
    return layer


def _check_dim(p: int) -> None:
    if p > MAX_P:
        raise ConfigurationError(f"p = {p} exceeds the supported maximum {MAX_P} for the Simpson engine")


def region_rule(layer: GridLayer, stat: SummaryStatistic, lower: float, upper: float):
    """Quadrature points, weights and subdensity values for {lower <= stat < upper}."""
    axes = layer.axes
    last = axes[-1]
    prefix_axes = axes[:-1]
    pts, wts, grid_idx = [], [], []
    for idx in itertools.product(*[range(len(ax.nodes)) for ax in prefix_axes]):
        prefix = np.array([ax.nodes[i] for ax, i in zip(prefix_axes, idx)])
        wpre = float(np.prod([ax.weights[i] for ax, i in zip(prefix_axes, idx)])) if idx else 1.0
        sl = slice_axis(stat, prefix, lower, upper, (last.lo, last.hi))
        for lo, hi in sl.segments():
            nodes, weights = last.truncated(lo, hi)
            if nodes.size == 0:
                continue
            n = nodes.size
            block = np.empty((n, len(axes)))
            block[:, :-1] = prefix
            block[:, -1] = nodes
            pts.append(block)
            wts.append(wpre * weights)
            pos = np.clip(np.searchsorted(last.nodes, nodes), 0, len(last.nodes) - 1)
            hit = last.nodes[pos] == nodes
            flat_prefix = np.ravel_multi_index(idx, [len(ax.nodes) for ax in prefix_axes]) if idx else 0
            grid_idx.append(np.where(hit, flat_prefix * len(last.nodes) + pos, -1))
    if not pts:
        return np.empty((0, len(axes))), np.empty(0), np.empty(0)
    pts = np.concatenate(pts)
    wts = np.concatenate(wts)
    grid_idx = np.concatenate(grid_idx)
    g = np.empty(len(wts))
    hit = grid_idx >= 0
    g[hit] = layer.subdensity.ravel()[grid_idx[hit]]
    if np.any(~hit):
        g[~hit] = layer.density(pts[~hit])
    return pts, wts, g


def stage_probability(layer: GridLayer, stat: SummaryStatistic, lower: float, upper: float) -> float:
    """Mass of the layer's subdensity over {lower <= stat < upper}.

    Reject(b) is ``(b, inf)``, Accept(a) is ``(-inf, a)``.
    """
    _, w, g = region_rule(layer, stat, lower, upper)
    return float(np.sum(w * g))


def propagate_layer(
    prev: GridLayer,
    prev_bounds: tuple[float, float],
    theta,
    sigma_prev,
    sigma_curr,
    r: int,
    stat: SummaryStatistic,
) -> GridLayer:
    """Next-analysis subdensity: integrate the previous one over its continuation region."""
    a, b = prev_bounds
    pts, w, g = region_rule(prev, stat, a, b)
    theta = np.asarray(theta, dtype=float)
    sigma_curr = np.asarray(sigma_curr, dtype=float)
    kernel = _Kernel(theta, np.asarray(sigma_prev, float), sigma_curr, pts, w * g)
    axes = _axes_for(theta, sigma_curr, r)
    layer = GridLayer(axes=axes, subdensity=np.empty(()), density=kernel, theta=theta, sigma=sigma_curr)
    layer.subdensity = kernel(layer.grid_points()).reshape([len(ax.nodes) for ax in axes])
    return layer


# ---------------------------------------------------------------------------
# boundary search


def _solve_level(prob: Callable[[float], float], target: float, seed: float, scale: float) -> float:
    """Find c with prob(c) == target for a non-increasing ``prob``."""

    def f(c):
        return prob(c) - target

    step = max(scale, 1e-8)
    f_seed = f(seed)
    if f_seed == 0.0:
        return seed
    direction = 1.0 if f_seed > 0 else -1.0
    lo = seed
    f_lo = f_seed
    for _ in range(80):
        hi = lo + direction * step
        f_hi = f(hi)
        if f_hi == 0.0:
            return hi
        if np.sign(f_hi) != np.sign(f_lo):
            x0, x1 = sorted((lo, hi))
            return float(brentq(f, x0, x1, xtol=1e-10, rtol=4 * np.finfo(float).eps, maxiter=200))
        lo, f_lo = hi, f_hi
        step *= 2.0
    raise InfeasibleDesignError(f"could not bracket a boundary for stage target {target:.6g}")


@dataclass
class _Hypothesis:
    theta: np.ndarray
    sigmas: list
    layer: GridLayer | None = None


class SimpsonEngine:
    """Recursive Simpson evaluation for a statistic and per-hypothesis covariance sequences.

    The Delta engine reuses this class with p = 1.
    """

    name = "simpson"

    def __init__(self, stat: SummaryStatistic, r: int):
        if r < 1:
            raise ConfigurationError("grid size r must be >= 1")
        self.stat = stat
        self.r = r

    def _advance(self, hyp: _Hypothesis, k: int, bounds=None) -> GridLayer:
        if k == 0:
            return first_layer(hyp.theta, hyp.sigmas[0], self.r)
        return propagate_layer(hyp.layer, bounds, hyp.theta, hyp.sigmas[k - 1], hyp.sigmas[k], self.r, self.stat)

    def _scale(self, hyp: _Hypothesis, k: int) -> float:
        # rough spread of the statistic, used to size bracket steps
        g = self.stat.gradient(hyp.theta)
        s = float(np.sqrt(max(g @ hyp.sigmas[k] @ g, 0.0)))
        if s == 0.0:
            s = float(np.sqrt(np.max(np.diag(hyp.sigmas[k]))))
        return max(s, 1e-6)

    def solve(
        self,
        theta0,
        thetaA,
        sigmas0: Sequence[np.ndarray],
        sigmasA: Sequence[np.ndarray],
        targets: StageTargets,
    ) -> Boundaries:
        a, b, rpsi, rxi = self.solve_arrays(theta0, thetaA, sigmas0, sigmasA, targets)
        return Boundaries(a=a, b=b, realized_psi=rpsi, realized_xi=rxi)

    def solve_arrays(
        self,
        theta0,
        thetaA,
        sigmas0,
        sigmasA,
        targets: StageTargets,
        final_futility: bool = False,
        cap_overspend: bool = False,
    ):
        """Stage-by-stage boundary search.

        With ``final_futility`` the last futility constant is solved from its
        own target instead of being set to the efficacy constant; the gap
        b[-1] - a[-1] then drives sample-size searches.

        A stage target larger than the mass still in the trial is an error
        unless ``cap_overspend`` is set, in which case every remaining path
        stops on that side (b = -inf for type 1, a = b for type 2).
        """
        K = targets.K
        if len(sigmas0) < K or len(sigmasA) < K:
            raise ConfigurationError("need one covariance matrix per analysis")
        _check_dim(self.stat.p)
        h0 = _Hypothesis(np.asarray(theta0, float), list(sigmas0))
        hA = _Hypothesis(np.asarray(thetaA, float), list(sigmasA))
        a = np.empty(K)
        b = np.empty(K)
        rpsi = np.empty(K)
        rxi = np.empty(K)
        seed_b = seed_a = self.stat(hA.theta)
        for k in range(K):
            bounds = None if k == 0 else (a[k - 1], b[k - 1])
            h0.layer = self._advance(h0, k, bounds)
            hA.layer = self._advance(hA, k, bounds)
            l0, lA = h0.layer, hA.layer

            def p_reject(c, layer=l0):
                return stage_probability(layer, self.stat, c, np.inf)

            def p_accept(c, layer=lA):
                return stage_probability(layer, self.stat, -np.inf, c)

            last = k == K - 1
            if targets.psi[k] <= 0:
                b[k] = np.inf
            elif targets.psi[k] >= l0.total_mass() * (1 - 1e-9):
                if not cap_overspend:
                    raise InfeasibleDesignError(
                        f"stage {k + 1} type 1 target {targets.psi[k]:.6g} exceeds remaining mass "
                        f"{l0.total_mass():.6g}"
                    )
                b[k] = -np.inf
            else:
                b[k] = _solve_level(p_reject, targets.psi[k], seed_b, self._scale(h0, k))
            if last and not final_futility:
                a[k] = b[k]
            elif targets.xi[k] <= 0:
                a[k] = -np.inf
            elif cap_overspend and targets.xi[k] >= lA.total_mass() * (1 - 1e-9):
                a[k] = b[k]
            else:
                a[k] = _solve_level(lambda c: -p_accept(c), -targets.xi[k], seed_a, self._scale(hA, k))
            if not last and a[k] > b[k]:
                a[k] = b[k]
            rpsi[k] = p_reject(b[k]) if np.isfinite(b[k]) else (l0.total_mass() if b[k] < 0 else 0.0)
            rxi[k] = p_accept(a[k]) if np.isfinite(a[k]) else (lA.total_mass() if a[k] > 0 else 0.0)
            if np.isfinite(b[k]):
                seed_b = b[k]
            if np.isfinite(a[k]):
                seed_a = a[k]
        return a, b, rpsi, rxi

    def evaluate(self, theta, sigmas: Sequence[np.ndarray], boundaries: Boundaries) -> tuple[np.ndarray, np.ndarray]:
        """Stage-wise reject and accept probabilities at ``theta`` for fixed boundaries."""
        K = boundaries.K
        hyp = _Hypothesis(np.asarray(theta, float), list(sigmas))
        rej = np.zeros(K)
        acc = np.zeros(K)
        for k in range(K):
            bounds = None if k == 0 else (boundaries.a[k - 1], boundaries.b[k - 1])
            hyp.layer = self._advance(hyp, k, bounds)
            if np.isfinite(boundaries.b[k]):
                rej[k] = stage_probability(hyp.layer, self.stat, boundaries.b[k], np.inf)
            if np.isfinite(boundaries.a[k]) or boundaries.a[k] == np.inf:
                acc[k] = stage_probability(hyp.layer, self.stat, -np.inf, boundaries.a[k])
        return rej, acc


def solve_boundaries(
    spec: DesignSpec,
    targets: StageTargets,
    n_schedule: Sequence[float],
    r: int,
) -> Boundaries:
    """Boundary constants meeting the stage targets, designed on the Simpson grid."""
    sig = spec.sigmas(n_schedule)[: targets.K]
    return SimpsonEngine(spec.statistic, r).solve(spec.theta0, spec.thetaA, sig, sig, targets)


def evaluate_boundaries(
    spec: DesignSpec,
    boundaries: Boundaries,
    n_schedule: Sequence[float],
    r: int,
    nuisance=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Realised (psi, xi) of given boundaries: rejection under theta0, acceptance under thetaA."""
    sig = spec.sigmas(n_schedule, nuisance)[: boundaries.K]
    eng = SimpsonEngine(spec.statistic, r)
    psi, _ = eng.evaluate(spec.theta0, sig, boundaries)
    _, xi = eng.evaluate(spec.thetaA, sig, boundaries)
    return psi, xi


def design(spec: DesignSpec, n_schedule: Sequence[float], r: int) -> tuple[StageTargets, Boundaries]:
    """Targets from the schedule's information fractions, then boundaries."""
    levels = spec.information_levels(n_schedule)
    if isinstance(spec.schedule, str):
        targets = stage_targets(spec, levels[-1], levels)
    else:
        targets = stage_targets(spec, float(spec.schedule[-1]), levels)
    return targets, solve_boundaries(spec, targets, n_schedule, r)
