import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfbm.errors import ConfigurationError, DomainError
from sfbm.harmonics import (
    addition_sum,
    assoc_legendre_norm,
    assoc_legendre_table,
    band_at,
    legendre_p,
    legendre_p_all,
    orthonormality_defect,
    sph_harm,
    ylm_table,
)
from sfbm.numerics import RandomStream
from sfbm.sphere import NORTH_POLE, from_angles, geodesic_distance, sample_uniform

FOUR_PI = 4 * math.pi
xs = np.linspace(-1, 1, 41)


def test_legendre_examples():
    assert legendre_p(0, 0.3) == 1.0
    assert legendre_p(2, 0.5) == pytest.approx(-0.125, abs=1e-16)
    for ell in (0, 1, 10, 100, 1000):
        assert legendre_p(ell, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_legendre_closed_forms():
    closed = [np.ones_like(xs), xs, (3 * xs**2 - 1) / 2, (5 * xs**3 - 3 * xs) / 2]
    for ell, ref in enumerate(closed):
        assert np.max(np.abs(legendre_p(ell, xs) - ref)) <= 1e-14


def test_legendre_bounded():
    for ell in (5, 50, 300):
        assert np.max(np.abs(legendre_p(ell, xs))) <= 1.0 + 1e-12


def test_legendre_all():
    assert np.all(legendre_p_all(20, 1.0) == 1.0)
    assert legendre_p_all(20, -1.0) == pytest.approx([(-1) ** k for k in range(21)])
    allv = legendre_p_all(10, 0.3)
    assert all(allv[k] == legendre_p(k, 0.3) for k in range(11))


def test_legendre_domain():
    with pytest.raises(DomainError):
        legendre_p(2, 1.5)
    with pytest.raises(DomainError):
        assoc_legendre_norm(2, 3, 0.1)


def test_assoc_legendre_examples():
    assert assoc_legendre_norm(0, 0, 0.4) == pytest.approx(1 / math.sqrt(FOUR_PI), abs=1e-16)
    c = math.cos(0.8)
    assert assoc_legendre_norm(1, 0, c) == pytest.approx(math.sqrt(3 / FOUR_PI) * c, abs=1e-15)
    v = assoc_legendre_norm(85, 85, 0.2)
    assert math.isfinite(v)


def _exact_norm_plm(ell, m, x):
    # direct formula: P_lm(x) = (-1)^m (1-x²)^{m/2} d^m/dx^m P_l(x), exact rational polynomial coefficients
    x = mpmath.mpf(x)
    coeffs = [Fraction(0)] * (ell + 1)
    # Rodrigues expansion: P_l(x) = 2^{-l} Σ_k (-1)^k C(l,k) C(2l-2k, l) x^{l-2k}
    for k in range(ell // 2 + 1):
        coeffs[ell - 2 * k] += Fraction((-1) ** k * math.comb(ell, k) * math.comb(2 * ell - 2 * k, ell), 2**ell)
    deriv = sum(
        mpmath.mpf(c.numerator) / c.denominator * math.perm(p, m) * x ** (p - m)
        for p, c in enumerate(coeffs)
        if p >= m and c
    )
    plm = (-1) ** m * (1 - x * x) ** (mpmath.mpf(m) / 2) * deriv
    norm = mpmath.sqrt(mpmath.mpf(2 * ell + 1) / (4 * mpmath.pi) * mpmath.mpf(math.factorial(ell - m)) / math.factorial(ell + m))
    return float(norm * plm)


@pytest.mark.parametrize("ell", [0, 1, 2, 5, 12, 20, 30])
def test_assoc_legendre_exact_oracle(ell):
    mpmath.mp.dps = 60
    for m in range(ell + 1):
        for x in (-0.93, -0.2, 0.0, 0.41, 0.88):
            assert assoc_legendre_norm(ell, m, x) == pytest.approx(_exact_norm_plm(ell, m, x), abs=1e-11)


def test_assoc_table_bit_identical():
    x = np.linspace(-0.99, 0.99, 7)
    tab = assoc_legendre_table(25, x)
    for ell in range(26):
        for m in range(ell + 1):
            assert np.array_equal(tab[ell, m], assoc_legendre_norm(ell, m, x))


def test_sph_harm_examples():
    p = from_angles(1.2, 0.7)
    assert sph_harm(0, 0, p) == pytest.approx(1 / math.sqrt(FOUR_PI))
    assert sph_harm(1, 0, p) == pytest.approx(math.sqrt(3 / FOUR_PI) * math.cos(1.2), abs=1e-15)
    for ell in (0, 3, 40):
        assert sph_harm(ell, 0, NORTH_POLE) == pytest.approx(math.sqrt((2 * ell + 1) / FOUR_PI), abs=1e-13)
    with pytest.raises(DomainError):
        sph_harm(2, -3, p)


def test_sph_harm_against_scipy():
    from scipy.special import sph_harm_y

    p = from_angles(0.9, 2.1)
    for ell in range(8):
        for m in range(-ell, ell + 1):
            assert sph_harm(ell, m, p) == pytest.approx(complex(sph_harm_y(ell, m, p.theta, p.phi)), abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 40), st.floats(0.0, math.pi), st.floats(0.0, 6.28))
def test_band_consistency_and_conjugation(ell, theta, phi):
    p = from_angles(theta, phi)
    band = band_at(ell, p)
    assert band.values.shape == (2 * ell + 1,)
    for m in range(-ell, ell + 1):
        assert band[m] == pytest.approx(sph_harm(ell, m, p), abs=1e-13)
        assert band[-m] == pytest.approx((-1) ** m * np.conj(band[m]), abs=1e-12)
    assert np.sum(np.abs(band.values) ** 2) == pytest.approx((2 * ell + 1) / FOUR_PI, abs=1e-12)


def test_ylm_table_matches_sph_harm():
    pts = sample_uniform(RandomStream(2), 5)
    tab = ylm_table(10, pts)
    for k, p in enumerate(pts):
        for ell in range(11):
            for m in range(ell + 1):
                assert tab[ell, m, k] == pytest.approx(sph_harm(ell, m, p), abs=1e-14)


def test_addition_examples():
    x = from_angles(1.0, 0.4)
    for ell in (0, 5, 30):
        assert addition_sum(ell, x, x) == pytest.approx((2 * ell + 1) / FOUR_PI, abs=1e-12)
    y = from_angles(0.6, 1.9)
    assert addition_sum(1, NORTH_POLE, y) == pytest.approx(3 / FOUR_PI * math.cos(0.6), abs=1e-15)


@pytest.mark.parametrize("ell", [1, 8, 64, 128])
def test_addition_theorem_random_pairs(ell):
    s = RandomStream(17)
    for x, y in zip(sample_uniform(s.child(0), 25), sample_uniform(s.child(1), 25)):
        val = addition_sum(ell, x, y)
        ref = (2 * ell + 1) / FOUR_PI * legendre_p(ell, math.cos(geodesic_distance(x, y)))
        assert abs(val.imag) <= 1e-12
        assert abs(val - ref) <= 1e-10


def test_orthonormality():
    assert orthonormality_defect(0, 1, 2) <= 1e-14
    assert orthonormality_defect(16, 32, 64) <= 1e-10
    with pytest.raises(ConfigurationError):
        orthonormality_defect(16, 10, 64)
    with pytest.raises(ConfigurationError):
        orthonormality_defect(16, 32, 20)
