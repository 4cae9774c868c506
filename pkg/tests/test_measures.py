import itertools

import numpy as np
import pytest

from src.measures.empirical import Coupling, DimensionMismatchError, EmpiricalMeasure
from src.measures.transport import (
    ParticleCapError,
    moment,
    optimal_coupling,
    pushforward_shift,
    wasserstein_distance,
)


def _brute_force(q, x, y, period=None):
    best = np.inf
    for perm in itertools.permutations(range(len(y))):
        gaps = np.abs(x - y[list(perm)])
        if period is not None:
            gaps = np.minimum(gaps, period - gaps)
        cost = np.mean(np.sqrt(np.sum(gaps ** 2, axis=1)) ** q)
        best = min(best, cost)
    return best ** (1.0 / q)


def test_wasserstein_matches_permutation_brute_force():
    rng = np.random.default_rng(2024)
    for i in range(200):
        n = int(rng.integers(1, 7))
        d = int(rng.integers(1, 3))
        q = (1.0, 2.0)[i % 2]
        x = rng.standard_normal((n, d))
        y = rng.standard_normal((n, d)) + 0.5
        expected = _brute_force(q, x, y)
        got = wasserstein_distance(q, EmpiricalMeasure(x), EmpiricalMeasure(y))
        assert got == pytest.approx(expected, rel=1e-10, abs=1e-14), f"instance {i}: n={n} d={d} q={q}"


def test_wasserstein_on_torus_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(30):
        n = int(rng.integers(1, 6))
        x = rng.uniform(0, 1, (n, 1))
        y = rng.uniform(0, 1, (n, 1))
        expected = _brute_force(1.0, x, y, period=1.0)
        got = wasserstein_distance(1.0, EmpiricalMeasure(x, 1.0), EmpiricalMeasure(y, 1.0))
        assert got == pytest.approx(expected, rel=1e-10, abs=1e-14)


def test_unequal_sizes_on_the_line():
    mu = EmpiricalMeasure([[0.0]])
    nu = EmpiricalMeasure([[0.0], [2.0]])
    assert wasserstein_distance(1, mu, nu) == pytest.approx(1.0)
    assert wasserstein_distance(2, mu, nu) == pytest.approx(np.sqrt(2.0))


def test_torus_distance_wraps_around():
    mu = EmpiricalMeasure([[0.1]], period=1.0)
    nu = EmpiricalMeasure([[0.9]], period=1.0)
    assert wasserstein_distance(1, mu, nu) == pytest.approx(0.2)


def test_optimal_coupling_attains_the_distance():
    rng = np.random.default_rng(3)
    mu = EmpiricalMeasure(rng.standard_normal((5, 2)))
    nu = EmpiricalMeasure(rng.standard_normal((5, 2)))
    coupling = optimal_coupling(2, mu, nu)
    assert coupling.cost(2) ** 0.5 == pytest.approx(wasserstein_distance(2, mu, nu))


def test_distance_is_zero_on_identical_clouds():
    pts = np.random.default_rng(0).standard_normal((6, 2))
    assert wasserstein_distance(2, EmpiricalMeasure(pts), EmpiricalMeasure(pts[::-1])) == pytest.approx(0.0, abs=1e-15)


def test_particle_cap_is_enforced():
    rng = np.random.default_rng(0)
    mu = EmpiricalMeasure(rng.standard_normal((300, 2)))
    nu = EmpiricalMeasure(rng.standard_normal((300, 2)))
    with pytest.raises(ParticleCapError):
        wasserstein_distance(2, mu, nu)


def test_sorted_line_case_has_no_cap():
    rng = np.random.default_rng(0)
    mu = EmpiricalMeasure(rng.standard_normal(1000))
    assert wasserstein_distance(2, mu, pushforward_shift(mu, [0.5])) == pytest.approx(0.5)


def test_sorted_line_case_still_caps_unequal_counts():
    rng = np.random.default_rng(1)
    mu = EmpiricalMeasure(rng.standard_normal(17))
    nu = EmpiricalMeasure(rng.standard_normal(19))
    with pytest.raises(ParticleCapError):
        wasserstein_distance(2, mu, nu)
    assert wasserstein_distance(2, mu, nu, cap=400) >= 0.0


def test_mismatched_spaces_raise():
    with pytest.raises(DimensionMismatchError):
        wasserstein_distance(2, EmpiricalMeasure(np.zeros((2, 1))), EmpiricalMeasure(np.zeros((2, 2))))
    with pytest.raises(DimensionMismatchError):
        wasserstein_distance(2, EmpiricalMeasure([[0.2]], 1.0), EmpiricalMeasure([[0.2]]))


def test_order_below_one_is_rejected():
    mu = EmpiricalMeasure([[0.0]])
    with pytest.raises(ValueError):
        wasserstein_distance(0.5, mu, mu)


def test_measure_rejects_non_finite_points():
    with pytest.raises(ValueError):
        EmpiricalMeasure([[0.0], [np.nan]])


def test_torus_points_are_reduced():
    mu = EmpiricalMeasure([[1.25], [-0.25]], period=1.0)
    assert np.allclose(mu.points[:, 0], [0.25, 0.75])
    shifted = pushforward_shift(mu, [0.8])
    assert np.all(shifted.points >= 0.0) and np.all(shifted.points < 1.0)


def test_pushforward_with_zero_shift_returns_same_measure():
    mu = EmpiricalMeasure([[1.0], [2.0]])
    assert pushforward_shift(mu, [0.0]) is mu
    with pytest.raises(DimensionMismatchError):
        pushforward_shift(mu, [1.0, 2.0])


def test_moment_of_point_mass():
    assert moment(EmpiricalMeasure([[3.0, 4.0]]), 2) == pytest.approx(5.0)


def test_coupling_displacement_takes_short_way_on_torus():
    c = Coupling([[0.95]], [[0.05]], period=1.0)
    assert c.displacement()[0, 0] == pytest.approx(-0.1)
    assert c.cost(1) == pytest.approx(0.1)


def test_coupling_sides_must_match():
    with pytest.raises(DimensionMismatchError):
        Coupling(np.zeros((2, 1)), np.zeros((3, 1)))


def test_particle_csv_parsing():
    mu = EmpiricalMeasure.from_csv_text("x0,x1\n0.5,1\n-2,3\n")
    assert mu.n == 2 and mu.dim == 2
    assert mu.to_csv_text().splitlines()[0] == "x0,x1"
    with pytest.raises(ValueError):
        EmpiricalMeasure.from_csv_text("x0\nabc\n")
    with pytest.raises(DimensionMismatchError):
        EmpiricalMeasure.from_json_text("[[1.0], [1.0, 2.0]]")
