import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from mgst.design import Boundaries, StageTargets, stage_targets
from mgst.errors import ConfigurationError, InsufficientReplicatesError
from mgst.montecarlo import (
    BLOCK,
    SamplePaths,
    _record,
    estimate_probabilities,
    sample_stage,
    solve_boundaries_mc,
    standard_normals,
)
from mgst.statistic import LinearStatistic, SignedProductStatistic

from conftest import M, THETA0, THETA_A, make_spec

LIN = LinearStatistic([1.0, 1.0])
PROD = SignedProductStatistic()
Z975 = norm.isf(0.025)


def _fixed(b):
    return Boundaries([b], [b], [np.nan], [np.nan])


def test_normals_depend_only_on_index():
    full = standard_normals(5, 0, 1, BLOCK + 100, 2)
    head = standard_normals(5, 0, 1, 40, 2)
    np.testing.assert_array_equal(full[:40], head)
    tail = standard_normals(5, 0, 1, 100, 2, block0=1)
    np.testing.assert_array_equal(full[BLOCK:], tail)


def test_normals_streams_differ():
    a = standard_normals(5, 0, 1, 100, 2)
    assert not np.array_equal(a, standard_normals(5, 1, 1, 100, 2))
    assert not np.array_equal(a, standard_normals(5, 0, 2, 100, 2))
    assert not np.array_equal(a, standard_normals(6, 0, 1, 100, 2))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_stage_means(k):
    N = 200_000
    theta = np.array([0.5, -1.0])
    sig = [M / (22 * j) for j in range(1, 4)]
    paths = SamplePaths.start(N, 2, seed=1)
    for j in range(1, k + 1):
        paths = sample_stage(paths, j, theta, sig[j - 2] if j > 1 else None, sig[j - 1])
    tol = 4 * np.sqrt(np.trace(sig[k - 1])) / np.sqrt(N)
    assert np.all(np.abs(paths.current.mean(axis=0) - theta) < tol)


def test_cross_stage_covariance():
    """Cov(theta^(1), theta^(2)) equals Sigma^(2) for nested samples."""
    N = 400_000
    s1, s2 = M / 22, M / 44
    p1 = sample_stage(SamplePaths.start(N, 2, seed=9), 1, THETA0, None, s1)
    p2 = sample_stage(p1, 2, THETA0, s1, s2)
    x1, x2 = p1.current, p2.current
    cov = (x1 - x1.mean(0)).T @ (x2 - x2.mean(0)) / N
    se = np.sqrt((np.outer(np.diag(s1), np.diag(s2)) + s2 * s2.T) / N)
    assert np.all(np.abs(cov - s2) < 5 * se)
    cov2 = np.cov(x2.T)
    assert np.all(np.abs(cov2 - s2) < 5 * np.sqrt(2 * np.outer(np.diag(s2), np.diag(s2)) / N))


def test_same_seed_same_draws():
    a = sample_stage(SamplePaths.start(1000, 2, seed=3), 1, THETA0, None, M / 10)
    b = sample_stage(SamplePaths.start(1000, 2, seed=3), 1, THETA0, None, M / 10)
    np.testing.assert_array_equal(a.current, b.current)


def test_stopped_replicates_untouched():
    p = sample_stage(SamplePaths.start(1000, 2, seed=3), 1, THETA0, None, M / 10)
    p.alive[::2] = False
    before = p.current.copy()
    q = sample_stage(p, 2, THETA0, M / 10, M / 20)
    np.testing.assert_array_equal(q.current[::2], before[::2])
    assert not np.array_equal(q.current[1::2], before[1::2])


def test_stage_order_enforced():
    with pytest.raises(ConfigurationError):
        sample_stage(SamplePaths.start(10, 2, seed=0), 2, THETA0, M, M / 2)


def test_survivorship():
    spec = make_spec(LIN)
    n = 22 * np.arange(1, 6)
    sig = spec.sigmas(n)
    a = [-2.4, -0.07, 0.91, 1.5, 1.955]
    b = [6.58, 4.09, 3.04, 2.43, 1.955]
    paths = SamplePaths.start(50_000, 2, seed=4)
    counts = [paths.n_alive()]
    for k in range(5):
        paths = sample_stage(paths, k + 1, THETA_A, sig[k - 1] if k else None, sig[k])
        was_alive = paths.alive.copy()
        d = _record(paths, LIN)
        paths.alive &= (d >= a[k]) & (d < b[k])
        expected = was_alive & (d >= a[k]) & (d < b[k])
        np.testing.assert_array_equal(paths.alive, expected)
        assert not np.any(paths.alive & ~was_alive)
        counts.append(paths.n_alive())
    assert all(c1 >= c2 for c1, c2 in zip(counts, counts[1:]))
    assert counts[-1] == 0


def test_infinite_efficacy_never_rejects(linear_spec):
    bnd = Boundaries([-np.inf] * 4 + [np.inf], [np.inf] * 5, [0] * 5, [0] * 5)
    est = estimate_probabilities(linear_spec, bnd, THETA0, 20_000, 0, 22 * np.arange(1, 6))
    np.testing.assert_array_equal(est.reject, np.zeros(5))
    assert est.accept[-1] == 1.0


def test_workers_do_not_change_result():
    spec = make_spec(PROD, K=2)
    bnd = Boundaries([0.1, 0.8], [3.0, 0.8], [0, 0], [0, 0])
    N = 2 * 16 * BLOCK + 1234
    one = estimate_probabilities(spec, bnd, THETA0, N, 11, [50, 100], workers=1)
    three = estimate_probabilities(spec, bnd, THETA0, N, 11, [50, 100], workers=3)
    np.testing.assert_array_equal(one.reject, three.reject)
    np.testing.assert_array_equal(one.accept, three.accept)


def test_unbiased_stage_one():
    """Mean over 100 seeds of the stage-1 rejection rate sits on the exact value."""
    spec = make_spec(LIN, K=1)
    N = 10_000
    est = [estimate_probabilities(spec, _fixed(Z975), THETA0, N, s, [100]).reject[0] for s in range(100)]
    pooled_se = np.sqrt(0.025 * 0.975 / (N * 100))
    assert abs(np.mean(est) - 0.025) < 4 * pooled_se


@pytest.mark.slow
def test_nonlinear_fixed_rate():
    spec = make_spec(PROD, K=1)
    N = 10_000_000
    est = estimate_probabilities(spec, _fixed(0.8234), THETA0, N, 2024, [103], workers=4)
    assert abs(est.reject[0] - 0.02502) < 4 * est.reject_se[0]


@pytest.mark.slow
def test_linear_table_boundaries_total_type1(linear_spec):
    bnd = Boundaries(
        a=[-2.4044, -0.0732, 0.9136, 1.5027, 1.9554],
        b=[6.5816, 4.0915, 3.0436, 2.4260, 1.9554],
        realized_psi=[np.nan] * 5,
        realized_xi=[np.nan] * 5,
    )
    N = 10_000_000
    est = estimate_probabilities(linear_spec, bnd, THETA0, N, 77, 22 * np.arange(1, 6), workers=4)
    total = est.reject.sum()
    assert abs(total - 0.025) < 4 * np.sqrt(total * (1 - total) / N)


def test_mc_boundaries_deterministic(linear_spec):
    t = stage_targets(linear_spec, 1.0)
    n = 22 * np.arange(1, 6)
    b1 = solve_boundaries_mc(linear_spec, t, n, 200_000, 8)
    b2 = solve_boundaries_mc(linear_spec, t, n, 200_000, 8)
    np.testing.assert_array_equal(b1.a, b2.a)
    np.testing.assert_array_equal(b1.b, b2.b)
    np.testing.assert_array_equal(b1.realized_psi, b2.realized_psi)


@pytest.mark.slow
def test_mc_fixed_linear_constant():
    spec = make_spec(LIN, K=1)
    N = 10_000_000
    bnd = solve_boundaries_mc(spec, stage_targets(spec, 1.0), [100], N, 5)
    quantile_se = np.sqrt(0.025 * 0.975 / N) / norm.pdf(Z975)
    assert abs(bnd.b[0] - Z975) < 4 * quantile_se
    assert bnd.a[0] == bnd.b[0]


def test_full_budget_at_stage_one():
    spec = make_spec(LIN, K=1)
    N = 100_000
    t = StageTargets(psi=np.array([0.025]), xi=np.array([0.1]))
    bnd = solve_boundaries_mc(spec, t, [100], N, 12)
    assert bnd.a[0] == bnd.b[0]
    assert bnd.realized_psi[0] == 0.025
    d = LIN.evaluate(sample_stage(SamplePaths.start(N, 2, seed=12), 1, THETA0, None, M / 100).current)
    assert np.count_nonzero(d >= bnd.b[0]) == 2500


def test_quantile_modes_agree_at_stage_one(linear_spec):
    t = stage_targets(linear_spec, 1.0)
    n = 22 * np.arange(1, 6)
    c = solve_boundaries_mc(linear_spec, t, n, 100_000, 1, quantile="conditional")
    s = solve_boundaries_mc(linear_spec, t, n, 100_000, 1, quantile="survivor")
    assert c.b[0] == s.b[0] and c.a[0] == s.a[0]
    # survivors are fewer than N, so later survivor-mode budgets are smaller
    assert s.realized_psi[1:].sum() < c.realized_psi[1:].sum()


def test_unknown_quantile_mode(linear_spec):
    with pytest.raises(ConfigurationError):
        solve_boundaries_mc(linear_spec, stage_targets(linear_spec, 1.0), 22 * np.arange(1, 6), 100, 0,
                            quantile="nearest")


def test_population_exhaustion():
    spec = make_spec(LIN, K=3)
    t = StageTargets(psi=np.array([0.45, 0.01, 0.04]), xi=np.array([0.5, 0.01, 0.04]))
    with pytest.raises(InsufficientReplicatesError):
        solve_boundaries_mc(spec, t, [30, 60, 90], 200, 0)


@given(seed=st.integers(0, 2**32 - 1), b=st.floats(-1.0, 4.0))
def test_estimates_are_proportions(seed, b):
    spec = make_spec(LIN, K=1)
    est = estimate_probabilities(spec, _fixed(b), THETA0, 2000, seed, [100])
    assert est.reject[0] + est.accept[0] == pytest.approx(1.0)
    assert (est.reject[0] * 2000) == pytest.approx(round(est.reject[0] * 2000))
