import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import multivariate_normal, norm

from mgst.delta import evaluate_boundaries_delta, solve_boundaries_delta
from mgst.design import Boundaries, StageTargets, stage_targets
from mgst.errors import ConfigurationError, InfeasibleDesignError
from mgst.montecarlo import estimate_probabilities
from mgst.simpson import (
    SimpsonEngine,
    build_axis,
    design,
    evaluate_boundaries,
    first_layer,
    propagate_layer,
    simpson_rule,
    slice_axis,
    solve_boundaries,
    stage_probability,
    standard_base_points,
)
from mgst.statistic import LinearStatistic, SignedProductStatistic

from conftest import THETA0, THETA_A, make_spec

LIN = LinearStatistic([1.0, 1.0])
PROD = SignedProductStatistic()


def test_axis_r1():
    ax = build_axis(0.0, 1.0, 1)
    np.testing.assert_allclose(ax.nodes, [-3, -2.25, -1.5, -0.75, 0, 0.75, 1.5, 2.25, 3])
    np.testing.assert_allclose(ax.weights, [0.25, 1, 0.5, 1, 0.5, 1, 0.5, 1, 0.25])


def test_axis_affine():
    np.testing.assert_allclose(build_axis(5.0, 4.0, 1).nodes, 5 + 2 * build_axis(0.0, 1.0, 1).nodes)


@pytest.mark.parametrize("r", [1, 2, 6, 16])
def test_axis_shape(r):
    ax = build_axis(0.0, 1.0, r)
    assert ax.nodes.size == 12 * r - 3
    assert np.all(np.diff(ax.nodes) > 0)
    assert np.all(ax.weights > 0)
    # tails mirror each other
    np.testing.assert_allclose(ax.nodes, -ax.nodes[::-1], atol=1e-12)


@given(center=st.floats(-100, 100), variance=st.floats(1e-4, 1e4), r=st.integers(1, 40))
def test_weight_sum_is_range(center, variance, r):
    ax = build_axis(center, variance, r)
    span = ax.nodes[-1] - ax.nodes[0]
    assert ax.weights.sum() == pytest.approx(span, rel=1e-9)


@given(r=st.integers(1, 20), data=st.data())
def test_cubic_exactness(r, data):
    base = standard_base_points(r) * 1.7 + 0.3
    i = data.draw(st.integers(0, base.size - 3))
    nodes, weights = simpson_rule(base[i : i + 3])
    lo, hi = base[i], base[i + 2]
    c = data.draw(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
    poly = np.polynomial.Polynomial(c)
    exact = poly.integ()(hi) - poly.integ()(lo)
    assert weights @ poly(nodes) == pytest.approx(exact, rel=1e-10, abs=1e-10)


def test_normal_mass_r4():
    ax = build_axis(0.0, 1.0, 4)
    phi = norm.pdf(ax.nodes)
    assert ax.weights @ phi == pytest.approx(1.0, abs=1e-4)
    nodes, weights = ax.truncated(-3.0, 3.0)
    assert weights @ norm.pdf(nodes) == pytest.approx(0.9973, abs=1e-4)


@given(lo=st.floats(-8, 8), width=st.floats(1e-3, 10))
def test_truncated_rule(lo, width):
    ax = build_axis(0.0, 1.0, 10)
    hi = lo + width
    nodes, weights = ax.truncated(lo, hi)
    exact = norm.cdf(min(hi, ax.hi)) - norm.cdf(max(lo, ax.lo))
    assert weights @ norm.pdf(nodes) == pytest.approx(exact, abs=2e-6)


def test_truncated_outside_is_empty():
    nodes, weights = build_axis(0.0, 1.0, 2).truncated(50.0, 60.0)
    assert nodes.size == 0 and weights.size == 0


@pytest.mark.parametrize(
    "stat, prefix, lower, upper, cuts, inside",
    [
        (PROD, [2.0], 1.0, 4.0, [-np.inf, 0.5, 2.0, np.inf], [False, True, False]),
        (PROD, [-1.0], 1.0, 4.0, [-np.inf, np.inf], [False]),
        (LIN, [0.0], -np.inf, 1.9599, [-np.inf, 1.9599, np.inf], [True, False]),
    ],
)
def test_slice_axis(stat, prefix, lower, upper, cuts, inside):
    sl = slice_axis(stat, prefix, lower, upper, (-10.0, 10.0))
    np.testing.assert_allclose(sl.cuts, cuts)
    np.testing.assert_array_equal(sl.inside, inside)


def test_slice_rejects_excess_roots():
    class Liar(SignedProductStatistic):
        max_roots = 1

    with pytest.raises(ConfigurationError):
        slice_axis(Liar(), [-1.0], -2.0, np.inf, (-10.0, 10.0))


def test_first_layer_mass_r6():
    layer = first_layer([0.7, 0.7], np.array([[0.4, 0.1], [0.1, 0.4]]), 6)
    assert layer.total_mass() == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("p", [1, 2])
def test_first_layer_mass_converges(p):
    sigma = np.array([[0.4, 0.1], [0.1, 0.4]])[:p, :p]
    errs = [abs(first_layer(np.full(p, 0.7), sigma, r).total_mass() - 1.0) for r in (4, 8, 16)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-6


def test_first_layer_mean_1d():
    layer = first_layer([0.7], [[0.3]], 6)
    ax = layer.axes[0]
    mass = ax.weights @ layer.subdensity
    assert ax.weights @ (ax.nodes * layer.subdensity) / mass == pytest.approx(0.7, abs=1e-10)


def test_first_layer_centre_value():
    sigma = np.array([[0.4, 0.1], [0.1, 0.4]])
    layer = first_layer(THETA_A, sigma, 3)
    mid = [ax.nodes.size // 2 for ax in layer.axes]
    assert layer.subdensity[tuple(mid)] == pytest.approx(multivariate_normal(THETA_A, sigma).pdf(THETA_A))


def test_propagate_without_stopping():
    M = np.array([[40.0, 10.0], [10.0, 40.0]])
    layer = first_layer(THETA0, M / 22, 6)
    nxt = propagate_layer(layer, (-np.inf, np.inf), THETA0, M / 22, M / 44, 6, LIN)
    assert nxt.total_mass() == pytest.approx(1.0, abs=1e-6)


def test_propagate_without_stopping_converges():
    M = np.array([[40.0, 10.0], [10.0, 40.0]])
    errs = []
    for r in (4, 8, 16):
        layer = first_layer(THETA0, M / 22, r)
        nxt = propagate_layer(layer, (-np.inf, np.inf), THETA0, M / 22, M / 44, r, LIN)
        errs.append(abs(nxt.total_mass() - 1.0))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 2e-6


def test_reject_everything_is_total_mass():
    layer = first_layer(THETA0, np.eye(2), 4)
    assert stage_probability(layer, PROD, -np.inf, np.inf) == pytest.approx(layer.total_mass(), rel=1e-12)


@pytest.mark.parametrize(
    "stat, n, b",
    [(LIN, 100, 1.9599), (PROD, 103, 0.8234)],
)
def test_fixed_stage_probability(stat, n, b):
    spec = make_spec(stat, K=1)
    psi, _ = evaluate_boundaries(spec, Boundaries([b], [b], [0], [0]), [n], 10)
    assert psi[0] == pytest.approx(0.02500, abs=1e-5)


@given(b1=st.floats(-2, 8), db=st.floats(0.01, 3))
def test_reject_probability_monotone(b1, db):
    layer = first_layer(THETA0, np.array([[0.4, 0.1], [0.1, 0.4]]), 3)
    assert stage_probability(layer, PROD, b1 + db, np.inf) <= stage_probability(layer, PROD, b1, np.inf) + 1e-15


def test_refinement_stable():
    spec = make_spec(LIN, K=1)
    bnd = Boundaries([1.9599], [1.9599], [0], [0])
    p10 = evaluate_boundaries(spec, bnd, [100], 10)[0][0]
    p11 = evaluate_boundaries(spec, bnd, [100], 11)[0][0]
    assert abs(p10 - p11) < 1e-5


def test_univariate_two_stage_against_bivariate_cdf():
    """p = 1, K = 2: compare with the bivariate normal law of (Z1, Z2)."""
    eng = SimpsonEngine(LinearStatistic([1.0]), 10)
    v1, v2 = 1.0, 0.5
    a1, b1, c = -0.4, 2.2, 1.1
    bnd = Boundaries([a1, c], [b1, c], [0, 0], [0, 0])
    rej, acc = eng.evaluate([0.3], [np.array([[v1]]), np.array([[v2]])], bnd)
    cov = np.array([[v1, v2], [v2, v2]])
    law = multivariate_normal([0.3, 0.3], cov)
    # P(a1 <= X1 < b1, X2 >= c)
    box = law.cdf([b1, np.inf]) - law.cdf([a1, np.inf]) - law.cdf([b1, c]) + law.cdf([a1, c])
    assert rej[1] == pytest.approx(box, abs=5e-6)
    assert rej[0] == pytest.approx(norm.sf(b1, 0.3, 1.0), abs=5e-6)
    assert acc[0] == pytest.approx(norm.cdf(a1, 0.3, 1.0), abs=5e-6)


def test_linear_agrees_with_exact_delta(linear_spec):
    n = 22 * np.arange(1, 6)
    exact = solve_boundaries_delta(linear_spec, stage_targets(linear_spec, 1.0), n, 128)
    psi, xi = evaluate_boundaries(linear_spec, exact, n, 8)
    np.testing.assert_allclose(psi, exact.realized_psi, atol=1e-5)
    np.testing.assert_allclose(xi, exact.realized_xi, atol=1e-5)


def test_second_layer_acceptance_against_monte_carlo(linear_spec):
    n = 22 * np.arange(1, 6)
    bnd = Boundaries(
        a=[-2.4044, -0.0732, 0.9136, 1.5027, 1.9554],
        b=[6.5816, 4.0915, 3.0436, 2.4260, 1.9554],
        realized_psi=[np.nan] * 5,
        realized_xi=[np.nan] * 5,
    )
    eng = SimpsonEngine(LIN, 6)
    rej, acc = eng.evaluate(THETA0, linear_spec.sigmas(n), bnd)
    mc = estimate_probabilities(linear_spec, bnd, THETA0, 1_000_000, 17, n)
    se = np.sqrt(np.maximum(acc * (1 - acc), 1e-12) / mc.N)
    assert np.all(np.abs(mc.accept - acc) < 4 * se)


@pytest.mark.slow
def test_product_against_monte_carlo(product_spec):
    """Stage probabilities of the non-linear design on a fine grid against simulation."""
    n = 23 * np.arange(1, 6)
    targets = stage_targets(product_spec, 1.0)
    bnd = solve_boundaries(product_spec, targets, n, 6)
    psi, xi = evaluate_boundaries(product_spec, bnd, n, 16)
    mc0 = estimate_probabilities(product_spec, bnd, THETA0, 1_000_000, 3, n)
    mcA = estimate_probabilities(product_spec, bnd, THETA_A, 1_000_000, 3, n, tag=1)
    for est, ref in ((mc0.reject, psi), (mcA.accept, xi)):
        se = np.sqrt(ref * (1 - ref) / 1_000_000)
        assert np.all(np.abs(est - ref) < 4 * se)


def test_k1_design_equals_truncated_design(linear_spec):
    """A one-analysis design is reproduced bit for bit by a design truncated at its first analysis."""
    single = linear_spec.replace(K=1)
    t1 = stage_targets(single, 1.0)
    b1 = solve_boundaries(single, t1, [100], 8)
    over = linear_spec.replace(K=2, schedule=[1.0, 2.0])
    t2 = stage_targets(over, 1.0)
    b2 = solve_boundaries(over, t2, [100, 200], 8)
    np.testing.assert_array_equal(t1.psi, t2.psi)
    np.testing.assert_array_equal(b1.b, b2.b)
    np.testing.assert_array_equal(b1.a, b2.a)
    _, b3 = design(single, [100], 8)
    np.testing.assert_array_equal(b1.b, b3.b)


def test_k1_linear_constant(linear_spec):
    b = solve_boundaries(linear_spec.replace(K=1), stage_targets(linear_spec.replace(K=1), 1.0), [100], 10)
    assert b.a[0] == b.b[0]
    assert b.b[0] == pytest.approx(norm.isf(0.025), abs=5e-4)


def test_infeasible_target():
    spec = make_spec(LIN, K=1)
    eng = SimpsonEngine(LIN, 3)
    sig = spec.sigmas([100])
    t = StageTargets(psi=np.array([1.5]), xi=np.array([0.1]))
    with pytest.raises(InfeasibleDesignError):
        eng.solve(THETA0, THETA_A, sig, sig, t)


def test_dimension_cap():
    stat = LinearStatistic([1.0, 1.0, 1.0, 1.0])
    with pytest.raises(ConfigurationError):
        first_layer(np.zeros(4), np.eye(4), 2)
    eng = SimpsonEngine(stat, 2)
    with pytest.raises(ConfigurationError):
        eng.evaluate(np.zeros(4), [np.eye(4)], Boundaries([0.0], [0.0], [0], [0]))


def test_three_endpoints_fixed():
    """p = 3 linear statistic against its closed form."""
    stat = LinearStatistic([1.0, 0.5, 1.0])
    sigma = np.array([[1.0, 0.2, 0.1], [0.2, 1.0, 0.3], [0.1, 0.3, 1.0]]) / 4
    eng = SimpsonEngine(stat, 6)
    rej, _ = eng.evaluate(np.zeros(3), [sigma], Boundaries([1.0], [1.0], [0], [0]))
    sd = np.sqrt(stat.weights @ sigma @ stat.weights)
    assert rej[0] == pytest.approx(norm.sf(1.0 / sd), abs=5e-5)
