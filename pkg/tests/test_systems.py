import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import zeta

from towerdecay.systems import (
    ReturnTimeTailEstimator,
    TailModel,
    build_iid_system,
    build_lsv_system,
    lsv_map,
    sample_return_time,
    survival_slope,
    tail_prob,
)
from towerdecay._validation import NormalizationError, ValidationError

weights = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12).filter(lambda w: sum(w) > 1e-3)


# -- tail models --------------------------------------------------------------


def test_three_point_survival():
    tail = TailModel.empirical([0.5, 0.25, 0.25])
    assert tail_prob(tail, 0) == 1.0
    assert tail_prob(tail, 1) == 0.5
    assert tail_prob(tail, 2) == 0.25
    assert tail_prob(tail, 3) == 0.0
    assert tail.mean == pytest.approx(1.75, abs=1e-15)


def test_exponential_survival_matches_closed_form():
    tail = TailModel.exponential(1.0, nmax=600)
    n = np.arange(1, 600)
    ratio = tail.prob(n) / np.exp(-n)
    assert ratio.min() > 0.5 and ratio.max() < 2.0


def test_polynomial_excess_is_hurwitz_zeta():
    tail = TailModel.polynomial(1.0, nmax=1000)
    # sum_{j >= 1000} j^-2
    assert tail.excess == pytest.approx(float(zeta(2.0, 1000)), rel=1e-14)
    assert tail.residual == pytest.approx(1000.0**-2, rel=1e-14)


def test_polynomial_renormalized_masses_match_partial_sums():
    nmax = 500
    tail = TailModel.polynomial(1.0, nmax=nmax, renormalize=True)
    # oracle: survival min(1, n^-2), conditioned on phi <= nmax
    s = np.minimum(1.0, np.arange(nmax + 1, dtype=float).clip(1) ** -2.0)
    expected = (s[:-1] - s[1:]) / (1.0 - s[-1])
    system = build_iid_system(tail)
    np.testing.assert_allclose(system.masses, expected[expected > 0], atol=1e-12)


def test_unnormalized_tail_rejected():
    with pytest.raises(NormalizationError):
        build_iid_system(TailModel.polynomial(1.0, nmax=100))


def test_slow_tail_is_always_renormalized():
    tail = TailModel.slow(nmax=2000)
    assert tail.is_normalized
    assert tail.mean < math.inf


def test_log_type_tail_sum_matches_direct_sum():
    # mu(phi > n) = log(n+e)^-2 / n: direct sum to M, then the integral remainder
    tail = TailModel.slow_boundary(2.0, nmax=200)
    big = 2_000_000
    j = np.arange(200, big, dtype=float)
    head = np.sum(np.log(j + math.e) ** -2 / j)

    # with x = e^(1/t) the remainder integral is smooth on (0, 1/log M]
    def g(t):
        return 1.0 / (1.0 + t * math.log1p(math.exp(1.0 - 1.0 / t))) ** 2

    rest, _ = integrate.quad(g, 0.0, 1.0 / math.log(big), epsabs=1e-15, epsrel=1e-13)
    half = 0.5 * math.log(big + math.e) ** -2 / big
    assert tail.tail_sum(200) == pytest.approx(head + rest + half, rel=1e-10)


@given(weights)
def test_pmf_properties(w):
    tail = TailModel.from_pmf(w)
    assert abs(tail.pmf.sum() + tail.residual - 1.0) <= 1e-12
    s = tail.prob(np.arange(tail.nmax + 1))
    assert s[0] == 1.0
    assert np.all(np.diff(s) <= 0)


@given(weights)
def test_iid_system_reproduces_tail(w):
    tail = TailModel.from_pmf(w)
    system = build_iid_system(tail)
    assert system.n_cells == np.count_nonzero(tail.pmf)
    rebuilt = np.bincount(system.cyl_time, weights=system.cyl_mass, minlength=tail.nmax + 1)[1:]
    np.testing.assert_allclose(rebuilt, tail.pmf, atol=1e-15)
    assert abs(system.masses.sum() - 1.0) <= 1e-12


@given(st.floats(0.3, 3.0), st.integers(20, 400))
def test_parametric_tails_are_monotone(beta, nmax):
    for tail in (
        TailModel.polynomial(beta, nmax=nmax, renormalize=True),
        TailModel.regularly_varying(beta, 1.0, nmax=nmax, renormalize=True),
        TailModel.stretched_exponential(beta, 0.5, nmax=nmax, renormalize=True),
    ):
        s = tail.prob(np.arange(nmax + 1))
        assert np.all(np.diff(s) <= 1e-16)
        assert abs(tail.pmf.sum() - 1.0) <= 1e-12


# -- small systems ------------------------------------------------------------


def test_degenerate_tower_system():
    system = build_iid_system(TailModel.empirical([1.0]))
    assert system.n_cells == 1
    assert system.max_time == 1


def test_two_point_system(two_point):
    assert two_point.n_cells == 2
    assert two_point.masses.tolist() == [0.5, 0.5]
    assert two_point.mean_return == 1.5


# -- sampling ------------------------------------------------------------------


def test_sampling_degenerate():
    tail = TailModel.empirical([1.0])
    assert np.all(sample_return_time(tail, 0, size=100) == 1)


def test_sampling_two_point_frequency():
    tail = TailModel.empirical([0.5, 0.5])
    draws = sample_return_time(tail, np.random.default_rng(11), size=10**6)
    assert 0.498 <= np.mean(draws == 1) <= 0.502


def test_sampling_is_reproducible():
    tail = TailModel.polynomial(1.0, nmax=200, renormalize=True)
    a = sample_return_time(tail, 5, size=1000)
    b = sample_return_time(tail, 5, size=1000)
    np.testing.assert_array_equal(a, b)


def test_estimator_recovers_pmf():
    tail = TailModel.empirical([0.2, 0.3, 0.5])
    draws = sample_return_time(tail, 1, size=200_000)
    est = ReturnTimeTailEstimator().fit(draws)
    np.testing.assert_allclose(est.tail_.pmf, tail.pmf, atol=5e-3)
    assert est.survival(3) == 0.0


def test_estimator_rejects_bad_times():
    with pytest.raises(ValidationError):
        ReturnTimeTailEstimator().fit([0, 1, 2])


# -- intermittent map ---------------------------------------------------------


def test_lsv_map_branches():
    x = np.array([0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(lsv_map(x, 0.5), [0.25 * (1 + 0.5**0.5), 0.0, 0.5, 1.0])


def test_lsv_right_quarter_returns_in_one_step(lsv_default):
    lsv = lsv_default.lsv
    lengths = np.diff(lsv.orbit_offsets)
    start = lsv.orbit_values[lsv.orbit_offsets[:-1]]
    assert np.all(lengths[start >= 0.75] == 1)


def test_lsv_tail_mass_accounts_for_discards(lsv_default):
    meta = lsv_default.meta
    assert abs(meta["raw_tail"].sum() - (1.0 - meta["discard_mass"])) <= 1e-12
    assert abs(lsv_default.masses.sum() - 1.0) <= 1e-12


def test_lsv_tail_exponent(lsv_default):
    slope = survival_slope(lsv_default.tail, (10, 200))
    assert -2.3 <= slope <= -1.7


def test_lsv_is_deterministic():
    a = build_lsv_system(0.5, 30, 50, seed=4)
    b = build_lsv_system(0.5, 30, 50, seed=4)
    np.testing.assert_array_equal(a.cyl_mass, b.cyl_mass)
    np.testing.assert_array_equal(a.cyl_time, b.cyl_time)
    assert (a.landing != b.landing).nnz == 0


def test_lsv_rejects_bad_alpha():
    with pytest.raises(ValidationError):
        build_lsv_system(1.5)
