"""Acceptance suite: the twelve primary criteria at their stated tolerances.

Criteria whose statement cannot be met are still asserted as stated; the
failures are genuine and are analysed in the project notes.
"""

import json
import math
import time

import numpy as np
import pytest

from sfbm.field import sample_field, variogram_truncated
from sfbm.harmonics import addition_sum, legendre_p, orthonormality_defect
from sfbm.numerics import RandomStream
from sfbm.slnd import estimate_K2
from sfbm.sphere import NORTH_POLE, from_angles, geodesic_distance, sample_uniform
from sfbm.spectrum import (
    HURST_TEST_SET,
    build_spectrum,
    closed_form_comparison,
    contour_imag,
    decay_check,
    dl_mehler,
    dl_quadrature,
    inner_integral,
    inner_integral_closed_form,
    oscillatory_I,
)
from sfbm.verify import (
    INNER_PHI_GRID,
    SLND_SEED,
    VARIOGRAM_LEVELS,
    min_eigen_ratio,
    monotonicity_violation,
    truncation_consistency,
    variogram_errors,
    variogram_rate_spread,
)

criterion = pytest.mark.criterion
_spectra: dict = {}


def spectrum(H, L):
    s = _spectra.get(H)
    if s is None or s.L < L:
        s = _spectra[H] = build_spectrum(H, L)
    return s


@criterion(1, "harmonic orthonormality defect <= 1e-9 at lmax=32 (64 x 128 grid), < 30 s")
def test_c01_orthonormality():
    t0 = time.perf_counter()
    defect = orthonormality_defect(32, 64, 128)
    assert defect <= 1e-9
    assert time.perf_counter() - t0 < 30


@criterion(2, "addition theorem within 1e-10 on 100 random pairs, l in {1, 8, 64, 128}")
@pytest.mark.parametrize("ell", [1, 8, 64, 128])
def test_c02_addition_theorem(ell):
    s = RandomStream(2)
    worst = 0.0
    for x, y in zip(sample_uniform(s.child(0), 100), sample_uniform(s.child(1), 100)):
        ref = (2 * ell + 1) / (4 * math.pi) * legendre_p(ell, math.cos(geodesic_distance(x, y)))
        worst = max(worst, abs(addition_sum(ell, x, y) - ref))
    assert worst <= 1e-10


@criterion(3, "spectrum oracles: d_0, d_1 at H=1/2 within 1e-8; I_l at H=1/2 within 1e-10 for l <= 32")
def test_c03_spectrum_oracles():
    assert abs(dl_quadrature(0, 0.5) - math.pi) <= 1e-8
    assert abs(dl_quadrature(1, 0.5) + math.pi / 4) <= 1e-8
    assert abs(oscillatory_I(0, 0.5) - 4 / 3) <= 1e-10
    for ell in range(33):
        a = ell + 0.5
        assert abs(oscillatory_I(ell, 0.5) + 1 / (2 * a * (a * a - 1))) <= 1e-10


@criterion(4, "contour identity |2 Im(contour) - I_l| <= 1e-6 for l <= 16, < 60 s")
@pytest.mark.parametrize("H", HURST_TEST_SET)
def test_c04_contour_identity(H):
    t0 = time.perf_counter()
    errors = [abs(contour_imag(ell, H) - oscillatory_I(ell, H)) for ell in range(17)]
    elapsed = time.perf_counter() - t0
    assert elapsed < 60 / len(HURST_TEST_SET)
    assert max(errors) <= 1e-6, f"largest deviation {max(errors):.3g} (l = {int(np.argmax(errors))})"


@criterion(5, "inner integral vs sqrt(2) B(H+1, 1/2) sin(phi/2)^(2H+1) within 1e-9")
@pytest.mark.parametrize("H", HURST_TEST_SET)
def test_c05_inner_integral(H):
    for phi in INNER_PHI_GRID:
        assert abs(inner_integral(phi, H) - inner_integral_closed_form(phi, H)) <= 1e-9


@criterion(6, "decay of |d_l| l^(2H+2) on [16, 512]: spread <= 2.0, top-octave drift <= 5%, < 5 min")
@pytest.mark.parametrize("H", HURST_TEST_SET)
def test_c06_decay(H):
    t0 = time.perf_counter()
    s = spectrum(H, 512)
    rep = decay_check(s, 16, 512)
    assert time.perf_counter() - t0 < 300
    assert rep.drift <= 0.05
    assert rep.spread <= 2.0, f"spread {rep.spread:.4g}"


@criterion(7, "|d~_0| <= 8 for every H in the test set")
@pytest.mark.parametrize("H", HURST_TEST_SET)
def test_c07_d0_tilde_bound(H):
    assert abs(dl_mehler(0, H)) <= 8


@criterion(8, "variogram truncation: error(L) L^(2H) constant within x2; <= 5% at L=1024 for H >= 0.4")
@pytest.mark.parametrize("H", HURST_TEST_SET)
def test_c08_variogram_reconstruction(H):
    s = spectrum(H, max(VARIOGRAM_LEVELS))
    assert variogram_rate_spread(s) <= 2.0
    if H >= 0.4:
        assert np.max(np.abs(variogram_errors(s)[-1])) <= 0.05


@criterion(9, "Monte Carlo: 2e4 realizations (L=128, H=0.25) within 4 SE of the truncated variogram; B(N)=0")
def test_c09_monte_carlo_law():
    H, L, n = 0.25, 128, 20_000
    s = spectrum(H, L)
    pairs = [
        (from_angles(0.3, 0.0), from_angles(0.5, 0.4)),
        (from_angles(1.0, 1.0), from_angles(1.2, 2.0)),
        (from_angles(1.5, 0.0), from_angles(1.5, math.pi)),
        (from_angles(2.5, 3.0), from_angles(0.7, 5.0)),
        (NORTH_POLE, from_angles(1.0, 0.5)),
    ]
    pts = [NORTH_POLE] + [p for pair in pairs for p in pair]
    t0 = time.perf_counter()
    vals = sample_field(s, L, pts, n, RandomStream(9))
    assert time.perf_counter() - t0 < 600
    assert np.max(np.abs(vals[:, 0])) <= 1e-10
    for k, (x, y) in enumerate(pairs):
        inc2 = (vals[:, 1 + 2 * k] - vals[:, 2 + 2 * k]) ** 2
        target = variogram_truncated(geodesic_distance(x, y), s, L)
        se = inc2.std(ddof=1) / math.sqrt(n)
        assert abs(inc2.mean() - target) <= 4 * se, f"pair {k}: {inc2.mean():.5g} vs {target:.5g} (SE {se:.2g})"
    means = vals[:, 1:].mean(axis=0)
    ses = vals[:, 1:].std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(means) <= 4 * ses)


@criterion(10, "analytic covariance PSD: lambda_min >= -1e-8 max diag over 50 random sets of size <= 40")
@pytest.mark.parametrize("H", HURST_TEST_SET)
def test_c10_psd(H):
    assert min_eigen_ratio(H, RandomStream(10).child(int(H * 100))) >= -1e-8


@criterion(11, "SLND: all ratios > 0 (200 configs); truncated form within 10% for eps >= 0.2; monotone cv")
@pytest.mark.parametrize("H", HURST_TEST_SET)
def test_c11_slnd_positivity(H):
    t0 = time.perf_counter()
    est = estimate_K2(H, 200, 6, (0.01, 1.0), RandomStream(SLND_SEED))
    assert est.all_positive and est.min_ratio > 0
    families = {r["family"] for r in est.records}
    assert {"cluster", "great_circle", "near_pole"} <= families
    assert monotonicity_violation(H, RandomStream(SLND_SEED)) <= 1e-9
    assert time.perf_counter() - t0 < 600


@criterion(11, "SLND: all ratios > 0 (200 configs); truncated form within 10% for eps >= 0.2; monotone cv")
@pytest.mark.parametrize("H", [0.25, 0.5])
def test_c11_slnd_truncation_consistency(H):
    worst, used = truncation_consistency(H, spectrum(H, 512), RandomStream(SLND_SEED))
    assert used > 0
    assert worst <= 0.10, f"largest relative gap {worst:.4f} over {used} configurations"


@criterion(12, "closed-form discrepancy ledger generated for the full H/l grid including H=1/2")
def test_c12_closed_form_ledger(tmp_path):
    records = closed_form_comparison(HURST_TEST_SET, range(1, 33))
    path = tmp_path / "closed_form_ledger.json"
    path.write_text(json.dumps(records, indent=1))
    back = json.loads(path.read_text())
    assert len(back) == len(HURST_TEST_SET) * 32
    half = [r for r in back if r["H"] == 0.5]
    assert all(r["closed_form"] == 0.0 for r in half)
    assert all(abs(r["mehler"]) > 0 for r in half if r["ell"] % 2 == 1)
    # the report records, it does not assert agreement
    assert all(set(r) >= {"closed_form", "mehler", "quadrature", "ratio", "sign_agrees"} for r in back)
