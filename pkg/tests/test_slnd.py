import math

import numpy as np
import pytest

from sfbm.errors import UsageError
from sfbm.field import covariance, variogram_truncated
from sfbm.numerics import RandomStream
from sfbm.slnd import (
    Configuration,
    conditional_variance_exact,
    conditional_variance_truncated,
    estimate_K2,
    lemma_bound_check,
    optimal_weights,
    quadratic_form_truncated,
    random_configuration,
    slnd_ratio,
)
from sfbm.sphere import NORTH_POLE, from_angles, geodesic_distance, sample_uniform
from sfbm.spectrum import HURST_TEST_SET, build_spectrum


@pytest.fixture(scope="module")
def spec25():
    return build_spectrum(0.25, 512)


def test_epsilon_conventions():
    x = from_angles(0.5, 0.0)
    far = from_angles(2.0, 1.0)
    c = Configuration(x, (far,))
    assert c.epsilon == pytest.approx(0.5, abs=1e-15)
    assert c.epsilon_without_pole == pytest.approx(geodesic_distance(x, far))
    assert math.isnan(Configuration(x).epsilon_without_pole)


def test_exact_trivial_cases():
    x = from_angles(1.3, 0.7)
    rep = slnd_ratio(Configuration(x), 0.3)
    assert rep.conditional_variance == pytest.approx(1.3**0.6, abs=1e-15)
    assert rep.ratio == pytest.approx(1.0, abs=1e-14)
    same = conditional_variance_exact(Configuration(x, (x,)), 0.3)
    assert same.conditional_variance == pytest.approx(0.0, abs=1e-12)
    assert same.degenerate and math.isnan(same.ratio)
    assert optimal_weights(Configuration(x, (x,)), 0.3) == pytest.approx([1.0], abs=1e-9)


def test_exact_one_point_brute_force():
    x, y = from_angles(1.0, 0.2), from_angles(1.7, 2.9)
    H = 0.4
    rxx, rxy, ryy = covariance(x, x, H), covariance(x, y, H), covariance(y, y, H)
    rep = conditional_variance_exact(Configuration(x, (y,)), H)
    assert rep.conditional_variance == pytest.approx(rxx - rxy**2 / ryy, abs=1e-10)
    assert rep.weights == pytest.approx([rxy / ryy], abs=1e-12)


def test_antipode_half():
    x = from_angles(math.pi / 2, 0.4)
    y = x.antipode()
    rxy, ryy = covariance(x, y, 0.5), covariance(y, y, 0.5)
    rep = slnd_ratio(Configuration(x, (y,)), 0.5)
    assert rep.conditional_variance == pytest.approx(math.pi / 2 - rxy**2 / ryy, abs=1e-10)
    assert rep.ratio > 0


def test_pole_and_duplicate_points_ignored():
    x = from_angles(1.1, 0.3)
    y, z = from_angles(0.4, 1.0), from_angles(2.0, 4.0)
    base = conditional_variance_exact(Configuration(x, (y, z)), 0.25)
    dup = conditional_variance_exact(Configuration(x, (y, z, y, NORTH_POLE)), 0.25)
    assert dup.conditional_variance == pytest.approx(base.conditional_variance, abs=1e-9)
    assert dup.weights[2] == 0.0 and dup.weights[3] == 0.0


@pytest.mark.parametrize("H", HURST_TEST_SET)
def test_upper_bound_and_monotone(H):
    s = RandomStream(50)
    for i in range(30):
        c, _ = random_configuration(s.child(i).generator(), 6, (0.01, 1.0))
        top = geodesic_distance(c.target, NORTH_POLE) ** (2 * H)
        prev = top
        for k in range(c.n + 1):
            cv = conditional_variance_exact(Configuration(c.target, c.points[:k]), H).conditional_variance
            assert 0 <= cv <= top + 1e-10
            assert cv <= prev + 1e-9
            prev = cv


def test_quadratic_form_trivial(spec25):
    x = from_angles(0.9, 1.4)
    q = quadratic_form_truncated(Configuration(x), [], spec25, 200)
    assert q == pytest.approx(variogram_truncated(0.9, spec25, 200), abs=1e-12)
    y = from_angles(2.0, 0.1)
    q = quadratic_form_truncated(Configuration(x, (y, x)), [0.0, 1.0], spec25, 200)
    assert q == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(UsageError):
        quadratic_form_truncated(Configuration(x, (y,)), [0.1, 0.2], spec25, 10)


def test_quadratic_form_matches_truncated_regression(spec25):
    s = RandomStream(60)
    for i in range(5):
        pts = sample_uniform(s.child(i), 4)
        c = Configuration(pts[0], tuple(pts[1:]))
        tr = conditional_variance_truncated(c, spec25, 128)
        q = quadratic_form_truncated(c, tr.weights, spec25, 128)
        assert q == pytest.approx(tr.conditional_variance, abs=1e-9)


def test_optimal_weights_beat_random_search():
    pts = sample_uniform(RandomStream(70), 4)
    c = Configuration(pts[0], tuple(pts[1:]))
    H = 0.25
    from sfbm.field import covariance_matrix

    full = covariance_matrix([c.target, *c.points], H)
    w = optimal_weights(c, H)

    def q(g):
        return full[0, 0] - 2 * g @ full[0, 1:] + g @ full[1:, 1:] @ g

    best = q(w)
    trial = np.random.default_rng(0).normal(scale=0.5, size=(10**4, 3)) + w
    assert np.all(np.einsum("ij,jk,ik->i", trial, full[1:, 1:], trial) - 2 * trial @ full[0, 1:] + full[0, 0] >= best - 1e-9)
    assert best == pytest.approx(conditional_variance_exact(c, H).conditional_variance, abs=1e-12)
    with pytest.raises(UsageError):
        optimal_weights(Configuration(pts[0]), H)


def test_optimal_weights_approach_exact_at_large_L():
    spec = build_spectrum(0.5, 1024)
    c = Configuration(from_angles(1.2, 0.3), (from_angles(0.5, 1.0), from_angles(2.2, 4.0)))
    exact = conditional_variance_exact(c, 0.5)
    gaps = [abs(quadratic_form_truncated(c, exact.weights, spec, L) - exact.conditional_variance) for L in (64, 256, 1024)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] / exact.conditional_variance < 0.01


def test_estimate_K2_trivial_and_prefix():
    e = estimate_K2(0.3, 1, 0, (0.05, 0.5), RandomStream(1))
    assert e.min_ratio == pytest.approx(1.0, abs=1e-12)
    a = estimate_K2(0.5, 50, 6, (0.01, 1.0), RandomStream(9))
    b = estimate_K2(0.5, 100, 6, (0.01, 1.0), RandomStream(9))
    assert b.min_ratio <= a.min_ratio
    assert [r["ratio"] for r in b.records[:50]] == [r["ratio"] for r in a.records]
    par = estimate_K2(0.5, 50, 6, (0.01, 1.0), RandomStream(9), n_jobs=4)
    assert par.records == a.records
    assert set(a.as_dict()) == {"H", "trials", "n_max", "eps_range", "min_ratio", "quantiles", "worst_config", "seed"}


def test_estimate_K2_validation():
    with pytest.raises(UsageError):
        estimate_K2(0.3, 0, 3)
    with pytest.raises(UsageError):
        estimate_K2(0.3, 5, 3, (0.0, 1.0))


def test_random_configuration_epsilon_in_range():
    s = RandomStream(3)
    fams = set()
    for i in range(200):
        c, fam = random_configuration(s.child(i).generator(), 6, (0.01, 1.0))
        fams.add(fam)
        assert 0.01 * (1 - 1e-9) <= c.epsilon <= 1.0 * (1 + 1e-9)
    assert fams == {"uniform", "cluster", "great_circle", "near_pole"}


def test_lemma_bound(spec25):
    x = from_angles(1.0, 0.0)
    c = Configuration(x, (from_angles(2.5, 3.0),))
    rep = lemma_bound_check(c, spec25, 512)
    assert rep.lhs_min > 0 and not rep.degenerate
    assert rep.C2_estimate * rep.eps_2H <= rep.lhs_min
    assert rep.epsilon_with_pole == pytest.approx(1.0)
    deg = lemma_bound_check(Configuration(x, (x,)), spec25, 512)
    assert deg.degenerate and deg.lhs_min == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(UsageError):
        lemma_bound_check(Configuration(x), spec25, 512)
