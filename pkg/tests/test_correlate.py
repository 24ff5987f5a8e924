import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from towerdecay.bounds import trunc_bound
from towerdecay.correlate import (
    CorrelationSeries,
    DecayRateRegressor,
    Observable,
    build_boundary_ops,
    check_gouezel_identity,
    explicit_correlation,
    fit_rate,
    lsv_observable,
    mc_correlation,
    operator_correlation,
    trunc_compare,
)
from towerdecay.operators import OperatorFamily
from towerdecay.systems import TailModel, build_iid_system
from towerdecay.tower import build_tower, truncate
from towerdecay._validation import ValidationError


def centered_base_indicator(tower):
    # 1_Y minus its tower mean 1 / mean height
    mean = 1.0 / tower.mean_height
    return Observable.level_function(lambda l: np.where(l == 0, 1.0 - mean, -mean), levels=1, baseline=-mean)


def tower_of(pmf, k=None):
    full = build_tower(build_iid_system(TailModel.empirical(pmf)))
    return full if k is None else truncate(full, k)


# -- exact correlations -------------------------------------------------------------


def test_two_point_closed_form(two_point):
    tower = build_tower(two_point)
    v = centered_base_indicator(tower)
    rho = operator_correlation(tower, v, v, 40).values
    n = np.arange(41)
    np.testing.assert_allclose(rho, (2 / 9) * (-0.5) ** n, atol=1e-12)
    assert rho[1] == pytest.approx(-1 / 9, abs=1e-15)
    assert rho[2] == pytest.approx(1 / 18, abs=1e-15)


def test_rho_zero_is_covariance(three_point):
    tower = build_tower(three_point)
    v = Observable.level_function(lambda l: np.cos(l + 0.3), levels=None)
    w = Observable.level_function(lambda l: l**2 + 1.0, levels=None)
    cyl, lev = tower.state_index()
    mu = tower.state_masses()
    vv, ww = v(cyl, lev), w(cyl, lev)
    cov = mu @ (vv * ww) - (mu @ vv) * (mu @ ww)
    assert operator_correlation(tower, v, w, 3).values[0] == pytest.approx(cov, abs=1e-14)


def test_unit_return_time_decorrelates():
    tower = tower_of([1.0])
    v = Observable.from_state_values(tower, [0.0])
    rho = operator_correlation(tower, v, v, 10).values
    np.testing.assert_array_equal(rho, 0.0)


def test_constant_observable_gives_zero(three_point):
    tower = build_tower(three_point)
    v = Observable.level_function(lambda l: (-1.0) ** l)
    rho = operator_correlation(tower, v, Observable.constant(1.0), 60).values
    np.testing.assert_allclose(rho, 0.0, atol=1e-12)


@given(
    st.lists(st.floats(0.01, 1.0), min_size=1, max_size=7),
    st.lists(st.floats(-2.0, 2.0), min_size=7, max_size=7),
    st.lists(st.floats(-2.0, 2.0), min_size=7, max_size=7),
    st.one_of(st.none(), st.integers(1, 6)),
)
def test_operator_matches_explicit_matrix(w, gv, gw, k):
    tower = tower_of(np.asarray(w) / sum(w), k)
    gv, gw = np.asarray(gv), np.asarray(gw)
    v = Observable.level_function(lambda l: gv[l])
    u = Observable.level_function(lambda l: gw[l])
    got = operator_correlation(tower, v, u, 30).values
    np.testing.assert_allclose(got, explicit_correlation(tower, v, u, 30), atol=1e-12)


def test_operator_matches_explicit_on_ulam_tower(lsv_small):
    tower = build_tower(lsv_small)
    v = lsv_observable(tower, lambda x: x)
    got = operator_correlation(tower, v, v, 40).values
    np.testing.assert_allclose(got, explicit_correlation(tower, v, v, 40), atol=1e-12)


def test_family_truncation_mismatch_rejected(three_point):
    tower = truncate(build_tower(three_point), 2)
    v = Observable.base_indicator()
    with pytest.raises(ValidationError):
        operator_correlation(tower, v, v, 5, family=OperatorFamily(three_point, 3))


# -- Monte Carlo -----------------------------------------------------------------------


def test_mc_two_point_first_lag(two_point):
    tower = build_tower(two_point)
    v = centered_base_indicator(tower)
    est = mc_correlation(tower, v, v, 5, 10**6, seed=1)
    assert abs(est.values[1] + 1 / 9) <= 3 * est.se[1]


def test_mc_constant_observable(three_point):
    tower = build_tower(three_point)
    v = Observable.level_function(lambda l: (-1.0) ** l)
    est = mc_correlation(tower, v, Observable.constant(1.0), 10, 10**5, seed=2)
    # each sample pairs v with the constant minus its mean: exactly zero
    assert np.all(np.abs(est.values) <= 3 * est.se + 1e-12)


def test_mc_agrees_with_operator(three_point):
    tower = build_tower(three_point)
    v = centered_base_indicator(tower)
    exact = operator_correlation(tower, v, v, 10).values
    est = mc_correlation(tower, v, v, 10, 4 * 10**5, seed=5, shards=2)
    assert np.all(np.abs(est.values - exact) <= 4 * est.se)


def test_mc_is_reproducible_per_seed_and_shards(two_point):
    tower = build_tower(two_point)
    v = centered_base_indicator(tower)
    a = mc_correlation(tower, v, v, 5, 10**4, seed=9, shards=3)
    b = mc_correlation(tower, v, v, 5, 10**4, seed=9, shards=3)
    c = mc_correlation(tower, v, v, 5, 10**4, seed=9, shards=2)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.se, b.se)
    assert not np.array_equal(a.values, c.values)


def test_mc_needs_enough_samples(two_point):
    v = Observable.base_indicator()
    with pytest.raises(ValidationError):
        mc_correlation(build_tower(two_point), v, v, 5, 100)


def test_mc_rejects_non_finite(two_point):
    v = Observable.level_function(lambda l: np.where(l == 0, np.inf, 0.0))
    with pytest.raises(ValidationError):
        mc_correlation(build_tower(two_point), v, v, 3, 10**4)


@pytest.mark.slow
def test_lsv_mc_positive_and_decreasing(lsv_default):
    v = lsv_observable(build_tower(lsv_default), lambda x: x)
    est = mc_correlation(lsv_default, v, v, 50, 10**7, seed=0)
    rho = est.values[1:51]
    assert np.all(rho > 0)
    # monotone up to noise
    assert np.all(np.diff(rho) <= 3 * est.se[2:51])
    assert rho[-1] < rho[0] / 2


# -- truncation comparison ---------------------------------------------------------------


def truncation_ratios(system, ks, N=200):
    full = build_tower(system)
    v = centered_base_indicator(full)
    rho = operator_correlation(full, v, v, N)
    out = []
    for k in ks:
        rho_k = operator_correlation(truncate(full, k), v, v, N)
        out.append(trunc_compare(rho, rho_k, system.tail, k).max_ratio)
    return np.array(out)


def test_truncation_above_max_height_is_exact(three_point):
    full = build_tower(three_point)
    v = centered_base_indicator(full)
    a = operator_correlation(full, v, v, 50)
    b = operator_correlation(truncate(full, 3), v, v, 50)
    report = trunc_compare(a, b, three_point.tail, 3)
    np.testing.assert_array_equal(report.differences, 0.0)
    assert report.max_ratio == 0.0


def test_truncation_ratio_three_point(three_point):
    ratios = truncation_ratios(three_point, [2], N=100)
    assert np.isfinite(ratios).all() and ratios[0] > 0


def test_truncation_ratio_stable_across_k():
    system = build_iid_system(TailModel.polynomial(1.0, nmax=400, renormalize=True))
    ratios = truncation_ratios(system, [2, 4, 8, 16])
    assert np.all(np.isfinite(ratios))
    assert ratios.max() / ratios.min() < 3


def test_trunc_compare_bounds_match_formula(three_point):
    a = CorrelationSeries(np.zeros(6), "operator")
    rep = trunc_compare(a, a, three_point.tail, 2)
    np.testing.assert_allclose(rep.bounds, [trunc_bound(three_point.tail, n, 2) for n in range(1, 6)])


# -- boundary operators --------------------------------------------------------------------


def boundary(pmf, k):
    system = build_iid_system(TailModel.empirical(pmf))
    return truncate(build_tower(system), k), OperatorFamily(system, k)


def test_a0_is_level_zero_injection():
    tower, fam = boundary([0.5, 0.25, 0.25], 3)
    ops = build_boundary_ops(tower, fam)
    base_rows = tower.offsets[:-1] if tower.offsets.size > fam.n_cells else tower.offsets
    np.testing.assert_array_equal(ops.A[0][base_rows], np.eye(fam.n_cells))
    assert np.count_nonzero(ops.A[0]) == fam.n_cells


@pytest.mark.parametrize("pmf,k", [([0.5, 0.5], 2), ([0.5, 0.25, 0.25], 3), ([0.5, 0.25, 0.25], 2), ([0.1, 0.2, 0.3, 0.4], 4)])
def test_averaged_identity_is_tower_projection(pmf, k):
    tower, fam = boundary(pmf, k)
    ops = build_boundary_ops(tower, fam)
    mu = tower.state_masses()
    proj = np.outer(np.ones(tower.n_states), mu)  # density v -> (int v dmu) * 1
    np.testing.assert_allclose(ops.averaged_identity(), proj, atol=1e-10)


def test_a_norms_bounded_by_tail():
    tail = TailModel.empirical([0.1, 0.2, 0.3, 0.4])
    tower, fam = boundary(tail.pmf, 4)
    norms = build_boundary_ops(tower, fam).a_norms() * tower.mean_height
    n = np.arange(4)
    # rescaled to the unnormalized tower measure, ||A_n|| = mu(phi > n)
    np.testing.assert_allclose(norms, tail.prob(n), atol=1e-15)
    assert np.all(norms <= tail.prob(np.maximum(n - 1, 0)) + 1e-15)


def test_boundary_ops_need_consistent_truncation(three_point):
    tower = truncate(build_tower(three_point), 2)
    with pytest.raises(ValidationError):
        build_boundary_ops(tower, OperatorFamily(three_point, 3))
    with pytest.raises(ValidationError):
        build_boundary_ops(build_tower(three_point), OperatorFamily(three_point))


@pytest.mark.parametrize("pmf,k", [([0.5, 0.5], 2), ([0.5, 0.25, 0.25], 3)])
def test_gouezel_identity_examples(pmf, k):
    tower, fam = boundary(pmf, k)
    assert check_gouezel_identity(tower, fam, 50) <= 1e-10
    assert check_gouezel_identity(tower, fam, 0) <= 1e-15


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=9), st.integers(1, 8))
def test_gouezel_identity_random_systems(w, k):
    pmf = np.asarray(w) / sum(w)
    tower, fam = boundary(pmf, k)
    assert check_gouezel_identity(tower, fam, 50) <= 1e-10


# -- rate fitting ----------------------------------------------------------------------------


def test_fit_exact_power_law():
    n = np.arange(0, 1001, dtype=float)
    series = 3.0 / np.maximum(n, 1)
    fit = fit_rate(series, "power", (10, 1000))
    assert fit.slope == pytest.approx(-1.0, abs=1e-10)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.n_points == 991


def test_fit_two_point_exponential_rate(two_point):
    tower = build_tower(two_point)
    v = centered_base_indicator(tower)
    fit = fit_rate(operator_correlation(tower, v, v, 40), "exponential", (1, 40))
    assert fit.rate == pytest.approx(math.log(2), abs=0.01)
    assert fit.sign_changes == 39


def test_fit_stretched():
    n = np.arange(0, 401, dtype=float)
    fit = fit_rate(np.exp(-2.0 * n**0.5), "stretched", (1, 400), gamma=0.5)
    assert fit.rate == pytest.approx(2.0, rel=1e-10)


def test_fit_polynomial_tower_slope():
    system = build_iid_system(TailModel.polynomial(1.0, nmax=2000, renormalize=True))
    tower = build_tower(system)
    v = centered_base_indicator(tower)
    fit = fit_rate(operator_correlation(tower, v, v, 400), "power", (20, 400))
    assert -1.25 <= fit.slope <= -0.80


def test_fit_needs_five_points():
    with pytest.raises(ValidationError):
        fit_rate(np.array([1.0, 0.5, 0.25, 0.125, 0.0625]), "power", (1, 4))
    with pytest.raises(ValidationError):
        fit_rate(np.ones(10), "cubic")


def test_regressor_is_an_estimator():
    from sklearn.base import clone

    n = np.arange(1, 50)
    est = DecayRateRegressor("exponential").fit(n, np.exp(-0.3 * n))
    assert est.rate_ == pytest.approx(0.3)
    np.testing.assert_allclose(est.predict([10]), np.exp(-3.0))
    assert clone(est).get_params() == {"model": "exponential", "gamma": 0.5}
