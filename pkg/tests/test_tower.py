import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from towerdecay.systems import TailModel, build_iid_system
from towerdecay.tower import (
    Tower,
    build_tower,
    en_mass,
    en_mass_bruteforce,
    height_defect,
    trunc_region_mass,
    truncate,
)
from towerdecay._validation import ValidationError

pmfs = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10).filter(lambda w: sum(w) > 1e-3)


def iid(pmf):
    return build_iid_system(TailModel.from_pmf(pmf))


def test_height_one_tower_is_the_base():
    t = build_tower(iid([1.0]))
    assert t.mean_height == 1.0
    assert t.n_states == 1


def test_two_point_level_masses(two_point):
    t = build_tower(two_point)
    assert t.mean_height == 1.5
    np.testing.assert_allclose(t.level_masses, [2 / 3, 1 / 3], atol=1e-15)


def test_three_point_mean(three_point):
    assert build_tower(three_point).mean_height == pytest.approx(7 / 4, abs=1e-15)


def test_truncation_examples(two_point, three_point):
    full3 = build_tower(three_point)
    assert truncate(full3, 2).mean_height == pytest.approx(1.5, abs=1e-15)
    assert truncate(full3, 5).mean_height == full3.mean_height
    assert truncate(build_tower(two_point), 1).mean_height == 1.0


def test_height_defect_examples(two_point, three_point):
    full3 = build_tower(three_point)
    assert height_defect(full3, truncate(full3, 2)) == pytest.approx(0.25, abs=1e-15)
    assert height_defect(full3, truncate(full3, 3)) == 0.0
    full2 = build_tower(two_point)
    assert height_defect(full2, truncate(full2, 1)) == pytest.approx(0.5, abs=1e-15)


def test_trunc_region_mass_examples(two_point, three_point):
    assert trunc_region_mass(build_tower(two_point), 1) == pytest.approx(1 / 3, abs=1e-15)
    assert trunc_region_mass(build_tower(two_point), 2) == 0.0
    assert trunc_region_mass(build_tower(three_point), 2) == pytest.approx(1 / 7, abs=1e-15)


def test_en_mass_two_point(two_point):
    full = build_tower(two_point)
    short = truncate(full, 1)
    # one step: level-0 points of the phi = 2 cell climb into level 1
    assert en_mass(full, short, 1) == pytest.approx(1 / 3, abs=1e-15)
    e3 = en_mass(full, short, 3)
    assert en_mass(full, short, 1) <= e3 <= 3 * (2 / 3) * 0.5


def test_en_mass_vanishes_without_truncation(three_point):
    full = build_tower(three_point)
    assert en_mass(full, truncate(full, 3), 10) == 0.0


def test_truncate_rejects_truncated_input(three_point):
    t = truncate(build_tower(three_point), 2)
    with pytest.raises(ValidationError):
        truncate(t, 1)


@given(pmfs, st.integers(1, 12))
def test_truncation_identities(pmf, k):
    system = iid(pmf)
    tail = system.tail
    full = build_tower(system)
    short = truncate(full, k)
    assert abs(height_defect(full, short) - tail.tail_sum(k)) <= 1e-12
    assert abs(trunc_region_mass(full, k) - tail.tail_sum(k) / full.mean_height) <= 1e-12
    # the kept and cut regions partition the tower
    kept = np.minimum(full.heights, k) @ system.cyl_mass / full.mean_height
    assert abs(kept + trunc_region_mass(full, k) - 1.0) <= 1e-12
    np.testing.assert_array_equal(short.heights, np.minimum(full.heights, k))


@given(pmfs, st.integers(1, 8), st.integers(1, 25))
def test_en_mass_matches_absorbing_chain(pmf, k, n):
    full = build_tower(iid(pmf))
    short = truncate(full, k)
    assert abs(en_mass(full, short, n) - en_mass_bruteforce(full, short, n)) <= 1e-12


@given(pmfs, st.integers(1, 8))
def test_en_mass_bound_and_monotonicity(pmf, k):
    system = iid(pmf)
    full = build_tower(system)
    short = truncate(full, k)
    vals = np.array([en_mass(full, short, n) for n in range(1, 40)])
    assert np.all(np.diff(vals) >= -1e-15)
    bound = np.arange(1, 40) / full.mean_height * float(system.tail.prob(k))
    assert np.all(vals <= bound + 1e-15)


def test_en_mass_on_ulam_tower(lsv_small):
    full = build_tower(lsv_small)
    short = truncate(full, 5)
    for n in (1, 4, 9):
        assert abs(en_mass(full, short, n) - en_mass_bruteforce(full, short, n)) <= 1e-12


@given(pmfs)
def test_tower_measure_is_stationary(pmf):
    t = build_tower(iid(pmf))
    w = t.state_masses()
    assert abs(w.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(t.transition_matrix().T @ w, w, atol=1e-14)


def test_ulam_tower_measure_is_stationary(lsv_small):
    t = Tower(lsv_small)
    w = t.state_masses()
    np.testing.assert_allclose(t.transition_matrix().T @ w, w, atol=1e-14)
