"""Monte Carlo engine: sequential sampling of the estimates and quantile-based boundaries.

Random numbers come from counter-based Philox streams keyed by
(seed, hypothesis, stage, block of replicates). A replicate's draw at a stage
therefore depends only on the seed and its index, never on how many other
replicates are still running or on the order in which blocks are processed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .design import Boundaries, DesignSpec, StageTargets
from .errors import ConfigurationError, InsufficientReplicatesError
from .gaussian import cholesky_pd, information_gain_check, regression_matrix

BLOCK = 1 << 16
# blocks per unit of work in estimate_probabilities
CHUNK_BLOCKS = 16
MIN_ALIVE = 10
QUANTILE_MODES = ("conditional", "survivor")


def _stream(seed: int, tag: int, stage: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(tag, stage, block))
    return np.random.Generator(np.random.Philox(ss))


def standard_normals(seed: int, tag: int, stage: int, n: int, p: int, block0: int = 0) -> np.ndarray:
    """(n, p) standard normals for replicates starting at block ``block0``.

    Row i is a fixed function of (seed, tag, stage, block0 * BLOCK + i).
    """
    out = np.empty((n, p))
    for blk, start in enumerate(range(0, n, BLOCK)):
        stop = min(start + BLOCK, n)
        out[start:stop] = _stream(seed, tag, stage, block0 + blk).standard_normal((BLOCK, p))[: stop - start]
    return out


@dataclass
class SamplePaths:
    """Current estimates of N replicates and whether each is still in the trial.

    ``delta`` keeps the statistic value at every completed stage (NaN once a
    replicate has stopped).
    """

    current: np.ndarray
    alive: np.ndarray
    delta: list
    seed: int
    tag: int = 0
    stage: int = 0
    block0: int = 0

    @classmethod
    def start(cls, N: int, p: int, seed: int, tag: int = 0, block0: int = 0) -> "SamplePaths":
        if N < 1:
            raise ConfigurationError("need at least one replicate")
        return cls(current=np.zeros((N, p)), alive=np.ones(N, dtype=bool), delta=[], seed=seed, tag=tag,
                   block0=block0)

    @property
    def N(self) -> int:
        return self.alive.size

    def n_alive(self) -> int:
        return int(np.count_nonzero(self.alive))


def sample_stage(paths: SamplePaths, k: int, theta, sigma_prev, sigma_curr) -> SamplePaths:
    """Extend every live replicate by its stage-k estimate (k is 1-based).

    Stage 1 draws from N(theta, sigma_curr); later stages from the conditional
    law given the previous estimate. Stopped replicates are left untouched.
    """
    if k != paths.stage + 1:
        raise ConfigurationError(f"expected stage {paths.stage + 1}, got {k}")
    theta = np.asarray(theta, dtype=float)
    sigma_curr = np.asarray(sigma_curr, dtype=float)
    p = theta.size
    z = standard_normals(paths.seed, paths.tag, k, paths.N, p, paths.block0)[paths.alive]
    x = paths.current[paths.alive]
    if k == 1:
        new = theta + z @ cholesky_pd(sigma_curr).T
    else:
        sigma_prev = np.asarray(sigma_prev, dtype=float)
        information_gain_check(sigma_prev, sigma_curr)
        A = regression_matrix(sigma_prev, sigma_curr)
        cond = sigma_curr - A @ sigma_curr
        cond = 0.5 * (cond + cond.T)
        mean = theta + (x - theta) @ A.T
        if np.allclose(cond, 0.0):
            new = mean
        else:
            new = mean + z @ cholesky_pd(cond).T
    current = paths.current.copy()
    current[paths.alive] = new
    return SamplePaths(current=current, alive=paths.alive.copy(), delta=list(paths.delta),
                       seed=paths.seed, tag=paths.tag, stage=k, block0=paths.block0)


def _record(paths: SamplePaths, stat) -> np.ndarray:
    d = np.full(paths.N, np.nan)
    d[paths.alive] = stat.evaluate(paths.current[paths.alive])
    paths.delta.append(d)
    return d


@dataclass
class MCProbabilities:
    """Stage-wise stopping proportions with binomial standard errors."""

    reject: np.ndarray
    accept: np.ndarray
    N: int

    @property
    def reject_se(self) -> np.ndarray:
        return np.sqrt(self.reject * (1 - self.reject) / self.N)

    @property
    def accept_se(self) -> np.ndarray:
        return np.sqrt(self.accept * (1 - self.accept) / self.N)


def _count_chunk(args):
    stat, a, b, theta, sigmas, n, seed, tag, block0 = args
    K = len(a)
    paths = SamplePaths.start(n, theta.size, seed, tag, block0)
    rej = np.zeros(K, dtype=np.int64)
    acc = np.zeros(K, dtype=np.int64)
    for k in range(K):
        paths = sample_stage(paths, k + 1, theta, sigmas[k - 1] if k else None, sigmas[k])
        d = _record(paths, stat)
        alive = paths.alive
        r_mask = alive & (d >= b[k])
        a_mask = alive & (d < a[k])
        rej[k] = np.count_nonzero(r_mask)
        acc[k] = np.count_nonzero(a_mask)
        paths.alive = alive & ~r_mask & ~a_mask
    return rej, acc


def estimate_probabilities(
    spec: DesignSpec,
    boundaries: Boundaries,
    theta,
    N: int,
    seed: int,
    n_schedule,
    nuisance=None,
    tag: int = 0,
    workers: int = 1,
) -> MCProbabilities:
    """Fraction of N simulated trials stopping to reject / accept at each analysis.

    Replicates are processed in chunks of whole RNG blocks, so the result is
    the same for any number of ``workers``.
    """
    if N < 1:
        raise ConfigurationError("need at least one replicate")
    sig = spec.sigmas(n_schedule, nuisance)[: boundaries.K]
    theta = np.asarray(theta, dtype=float)
    per_chunk = CHUNK_BLOCKS * BLOCK
    jobs = [
        (spec.statistic, boundaries.a, boundaries.b, theta, sig, min(per_chunk, N - start), seed, tag,
         start // BLOCK)
        for start in range(0, N, per_chunk)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_chunk, jobs))
    else:
        parts = [_count_chunk(j) for j in jobs]
    rej = sum(p[0] for p in parts) / N
    acc = sum(p[1] for p in parts) / N
    return MCProbabilities(reject=rej, accept=acc, N=N)


def _upper_cut(values: np.ndarray, count: int) -> float:
    """Constant c with exactly ``count`` of ``values`` satisfying v >= c."""
    if count <= 0:
        return np.inf
    if count >= values.size:
        return -np.inf
    return float(np.partition(values, values.size - count)[values.size - count])


def _lower_cut(values: np.ndarray, count: int) -> float:
    """Constant c with exactly ``count`` of ``values`` satisfying v < c."""
    if count <= 0:
        return -np.inf
    if count >= values.size:
        return np.inf
    return float(np.partition(values, count)[count])


def solve_boundaries_mc(
    spec: DesignSpec,
    targets: StageTargets,
    n_schedule,
    N: int,
    seed: int,
    quantile: str = "conditional",
) -> Boundaries:
    """Empirical-quantile boundaries from N replicates under each hypothesis.

    ``quantile="conditional"`` rejects round(psi_k * N) of the surviving null
    replicates, so stage targets stay on the unconditional scale.
    ``quantile="survivor"`` rejects the fraction psi_k of the survivors.
    The final analysis uses a = b from the null side.
    """
    if quantile not in QUANTILE_MODES:
        raise ConfigurationError(f"quantile must be one of {QUANTILE_MODES}")
    K = targets.K
    sig = spec.sigmas(n_schedule)[:K]
    stat = spec.statistic
    p0 = SamplePaths.start(N, spec.p, seed, tag=0)
    pA = SamplePaths.start(N, spec.p, seed, tag=1)
    a = np.empty(K)
    b = np.empty(K)
    rpsi = np.empty(K)
    rxi = np.empty(K)
    for k in range(K):
        for paths in (p0, pA):
            if paths.n_alive() < MIN_ALIVE:
                raise InsufficientReplicatesError(
                    f"only {paths.n_alive()} replicates left at analysis {k + 1}"
                )
        p0 = sample_stage(p0, k + 1, spec.theta0, sig[k - 1] if k else None, sig[k])
        pA = sample_stage(pA, k + 1, spec.thetaA, sig[k - 1] if k else None, sig[k])
        d0 = _record(p0, stat)[p0.alive]
        dA = _record(pA, stat)[pA.alive]
        base0 = N if quantile == "conditional" else d0.size
        baseA = N if quantile == "conditional" else dA.size
        n_rej = int(round(targets.psi[k] * base0))
        b[k] = _upper_cut(d0, n_rej)
        if k == K - 1:
            a[k] = b[k]
        else:
            a[k] = _lower_cut(dA, int(round(targets.xi[k] * baseA)))
            a[k] = min(a[k], b[k])
        full0 = p0.delta[-1]
        fullA = pA.delta[-1]
        rpsi[k] = np.count_nonzero(p0.alive & (full0 >= b[k])) / N
        rxi[k] = np.count_nonzero(pA.alive & (fullA < a[k])) / N
        p0.alive &= (full0 >= a[k]) & (full0 < b[k])
        pA.alive &= (fullA >= a[k]) & (fullA < b[k])
    return Boundaries(a=a, b=b, realized_psi=rpsi, realized_xi=rxi)
