"""Second-order structure and Karhunen-Loève simulation of the field.

The field is centered Gaussian with ``B(N) = 0`` and variogram
``E[B(x) - B(y)]² = d(x, y)^{2H}``; by polarization its covariance is
``R(x, y) = ½ (d(x,N)^{2H} + d(y,N)^{2H} - d(x,y)^{2H})``.

Simulation truncates the harmonic expansion at degree ``L``:

    B_L(x) = Σ_{ℓ=1}^{L} sqrt(π |d_ℓ|) Σ_m ε_ℓm (Y_ℓm(x) - Y_ℓm(N))

with ``ε_ℓ,-m = (-1)^m conj(ε_ℓm)`` and ``ε_ℓ0`` real, so each term is real.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ConsistencyError, UsageError
from .harmonics import legendre_p_all, sph_harm, ylm_table
from .numerics import RandomStream, SymMatrix, cholesky_psd, gauss_legendre
from .sphere import NORTH_POLE, SpherePoint, as_vectors, distance_matrix, from_angles, geodesic_distance
from .spectrum import PowerSpectrum, check_hurst

__all__ = [
    "CovarianceModel",
    "covariance",
    "variogram",
    "covariance_matrix",
    "KLRealization",
    "draw_coefficients",
    "evaluate",
    "evaluate_many",
    "kl_basis",
    "sample_field",
    "variogram_truncated",
    "truncated_covariance",
    "kl_covariance",
    "exact_gaussian_oracle",
    "recover_coefficient",
    "write_realization_csv",
    "read_realization_csv",
]

IMAG_RESIDUE_TOL = 1e-10


# --------------------------------------------------------------------------
# analytic covariance
# --------------------------------------------------------------------------

def covariance(x: SpherePoint, y: SpherePoint, H: float) -> float:
    H2 = 2.0 * check_hurst(H)
    ax = geodesic_distance(x, NORTH_POLE) ** H2
    ay = geodesic_distance(y, NORTH_POLE) ** H2
    return 0.5 * (ax + ay - geodesic_distance(x, y) ** H2)


def variogram(x: SpherePoint, y: SpherePoint, H: float) -> float:
    return geodesic_distance(x, y) ** (2.0 * check_hurst(H))


def covariance_matrix(points: Sequence[SpherePoint], H: float, others: Sequence[SpherePoint] | None = None) -> np.ndarray:
    """``R(points[i], others[j])``; square and symmetric when ``others`` is None."""
    H2 = 2.0 * check_hurst(H)
    pts = list(points)
    oth = pts if others is None else list(others)
    a = distance_matrix(pts, [NORTH_POLE])[:, 0] ** H2
    b = a if others is None else distance_matrix(oth, [NORTH_POLE])[:, 0] ** H2
    d = distance_matrix(pts, None if others is None else oth) ** H2
    r = 0.5 * (a[:, None] + b[None, :] - d)
    if others is None:
        r = 0.5 * (r + r.T)
    return r


@dataclass(frozen=True)
class CovarianceModel:
    """Analytic second-order structure for one Hurst index."""

    H: float

    def __post_init__(self):
        object.__setattr__(self, "H", check_hurst(self.H))

    def covariance(self, x, y):
        return covariance(x, y, self.H)

    def variogram(self, x, y):
        return variogram(x, y, self.H)

    def matrix(self, points) -> SymMatrix:
        return SymMatrix(covariance_matrix(points, self.H))


# --------------------------------------------------------------------------
# Karhunen-Loève realizations
# --------------------------------------------------------------------------

def _amplitudes(spectrum: PowerSpectrum, L: int) -> np.ndarray:
    return np.sqrt(math.pi * spectrum.magnitudes[: L + 1])


def _check_spectrum(H, L, spectrum):
    H = check_hurst(H)
    if spectrum.method != "quadrature":
        raise UsageError(f"simulation needs a quadrature spectrum, got {spectrum.method!r}")
    if spectrum.H != H:
        raise UsageError(f"spectrum was built for H={spectrum.H}, not H={H}")
    if int(L) != L or L < 0 or spectrum.L < L:
        raise UsageError(f"truncation L={L} exceeds spectrum degree {spectrum.L}")
    return H, int(L)


@dataclass(frozen=True, eq=False)
class KLRealization:
    """One draw of the modal coefficients up to degree ``L``.

    ``coefficients[ℓ, m + L]`` holds ``ε_ℓm`` (zero where |m| > ℓ).
    """

    H: float
    L: int
    spectrum: PowerSpectrum
    coefficients: np.ndarray
    stream: RandomStream

    def coefficient(self, ell: int, m: int) -> complex:
        return complex(self.coefficients[ell, m + self.L])

    def __call__(self, x: SpherePoint) -> float:
        return evaluate(self, x)


def _coefficients_from_normals(z: np.ndarray, L: int) -> np.ndarray:
    # per degree: [eps_l0, u_1, v_1, ..., u_l, v_l], degree l starts at l**2
    coef = np.zeros((L + 1, 2 * L + 1), dtype=complex)
    for ell in range(L + 1):
        block = z[ell * ell : (ell + 1) * (ell + 1)]
        coef[ell, L] = block[0]
        if ell:
            pos = (block[1::2] + 1j * block[2::2]) / math.sqrt(2.0)
            m = np.arange(1, ell + 1)
            coef[ell, L + m] = pos
            coef[ell, L - m] = (-1.0) ** m * np.conj(pos)
    return coef


def draw_coefficients(H: float, L: int, spectrum: PowerSpectrum, stream: RandomStream) -> KLRealization:
    """Draw ``ε_ℓm`` with ``E|ε_ℓm|² = 1`` and the real-field symmetry."""
    H, L = _check_spectrum(H, L, spectrum)
    z = stream.generator().standard_normal((L + 1) ** 2)
    coef = _coefficients_from_normals(z, L)
    coef.setflags(write=False)
    return KLRealization(H, L, spectrum, coef, stream)


def _chunks(n, L):
    size = max(1, 2_000_000 // ((L + 1) ** 2))
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def _delta_ylm(L, points):
    """``Y_ℓm(x) - Y_ℓm(N)`` for m >= 0, shape ``(L+1, L+1, k)``."""
    y = ylm_table(L, points)
    ell = np.arange(L + 1)
    y[ell, 0, :] -= np.sqrt((2.0 * ell + 1.0) / (4.0 * math.pi))[:, None]
    # the pole itself: exact zero rather than roundoff
    at_pole = np.array([p.theta == 0.0 for p in points])
    y[:, :, at_pole] = 0.0
    return y


def evaluate_many(r: KLRealization, points: Sequence[SpherePoint]) -> np.ndarray:
    """Field values at many points (real part of the complex modal sum)."""
    pts = list(points)
    L = r.L
    amp = _amplitudes(r.spectrum, L)
    out = np.empty(len(pts))
    m = np.arange(L + 1)
    sign = (-1.0) ** m
    pos = r.coefficients[:, L:]  # (l, m>=0)
    neg = r.coefficients[:, L::-1] * sign[None, :]  # eps_{l,-m} (-1)^m
    neg[:, 0] = 0.0
    for sl in _chunks(len(pts), L):
        dy = _delta_ylm(L, pts[sl])
        total = np.einsum("l,lm,lmk->k", amp, pos, dy) + np.einsum("l,lm,lmk->k", amp, neg, np.conj(dy))
        resid = np.abs(total.imag)
        if np.any(resid > IMAG_RESIDUE_TOL * (1.0 + np.abs(total.real))):
            raise ConsistencyError(f"synthesized field has imaginary residue {resid.max():.3e}")
        out[sl] = total.real
    return out


def evaluate(r: KLRealization, x: SpherePoint) -> float:
    return float(evaluate_many(r, [x])[0])


def kl_basis(spectrum: PowerSpectrum, L: int, points: Sequence[SpherePoint]) -> np.ndarray:
    """Real design matrix mapping the normal draws to field values.

    Row ``k`` times the ``(L+1)²`` normals of a realization (in the order
    used by :func:`draw_coefficients`) gives the field at ``points[k]``.
    """
    pts = list(points)
    amp = _amplitudes(spectrum, L)
    basis = np.zeros((len(pts), (L + 1) ** 2))
    root2 = math.sqrt(2.0)
    dy = _delta_ylm(L, pts)
    for ell in range(L + 1):
        o = ell * ell
        basis[:, o] = amp[ell] * dy[ell, 0].real
        if ell:
            w = dy[ell, 1 : ell + 1]  # (m, k)
            basis[:, o + 1 : o + 2 * ell + 1 : 2] = (amp[ell] * root2 * w.real).T
            basis[:, o + 2 : o + 2 * ell + 1 : 2] = (-amp[ell] * root2 * w.imag).T
    return basis


def sample_field(
    spectrum: PowerSpectrum,
    L: int,
    points: Sequence[SpherePoint],
    n_samples: int,
    stream: RandomStream,
    first_index: int = 0,
    block: int = 256,
) -> np.ndarray:
    """Field values for realizations ``first_index .. first_index+n_samples-1``.

    Realization ``i`` uses ``stream.child(i)``, so row ``i`` equals
    ``evaluate_many(draw_coefficients(H, L, spectrum, stream.child(i)), points)``
    up to summation order, independent of batching.
    """
    _check_spectrum(spectrum.H, L, spectrum)
    basis = kl_basis(spectrum, L, points)
    n_coef = (L + 1) ** 2
    out = np.empty((int(n_samples), basis.shape[0]))
    for start in range(0, int(n_samples), block):
        stop = min(int(n_samples), start + block)
        z = np.empty((stop - start, n_coef))
        for i in range(start, stop):
            z[i - start] = stream.child(first_index + i).generator().standard_normal(n_coef)
        out[start:stop] = z @ basis.T
    return out


def variogram_truncated(gamma, spectrum: PowerSpectrum, L: int):
    """``Σ_{ℓ=1}^{L} (2ℓ+1)/2 · |d_ℓ| · (1 - P_ℓ(cos γ))`` (array-friendly in γ)."""
    if L > spectrum.L:
        raise UsageError(f"L={L} exceeds spectrum degree {spectrum.L}")
    g = np.asarray(gamma, dtype=float)
    p = legendre_p_all(L, np.clip(np.cos(g), -1.0, 1.0))
    ell = np.arange(L + 1)
    w = (2.0 * ell + 1.0) / 2.0 * spectrum.magnitudes[: L + 1]
    w[0] = 0.0
    val = np.tensordot(w, 1.0 - p, axes=(0, 0))
    return float(val) if g.ndim == 0 else val


def truncated_covariance(
    points: Sequence[SpherePoint], spectrum: PowerSpectrum, L: int, others: Sequence[SpherePoint] | None = None
) -> np.ndarray:
    """Covariance of the degree-``L`` truncation via the Legendre kernel.

    ``Σ_{ℓ=1}^{L} (2ℓ+1)/4 |d_ℓ| [P_ℓ(⟨x,y⟩) - P_ℓ(⟨x,N⟩) - P_ℓ(⟨y,N⟩) + 1]``.
    """
    if L > spectrum.L:
        raise UsageError(f"L={L} exceeds spectrum degree {spectrum.L}")
    a = as_vectors(points)
    b = a if others is None else as_vectors(others)
    ell = np.arange(L + 1)
    w = (2.0 * ell + 1.0) / 4.0 * spectrum.magnitudes[: L + 1]
    w[0] = 0.0
    pxy = legendre_p_all(L, np.clip(a @ b.T, -1.0, 1.0))
    pa = legendre_p_all(L, np.clip(a[:, 2], -1.0, 1.0))
    pb = legendre_p_all(L, np.clip(b[:, 2], -1.0, 1.0))
    k = pxy - pa[:, :, None] - pb[:, None, :] + 1.0
    out = np.tensordot(w, k, axes=(0, 0))
    if others is None:
        out = 0.5 * (out + out.T)
    # B(N) = 0: rows and columns at the pole are exact zeros, not roundoff
    out[[p.theta == 0.0 for p in points], :] = 0.0
    out[:, [p.theta == 0.0 for p in (points if others is None else others)]] = 0.0
    return out


def kl_covariance(points: Sequence[SpherePoint], spectrum: PowerSpectrum, L: int) -> np.ndarray:
    """Truncated covariance from explicit harmonics:
    ``π Σ_{ℓ≤L} |d_ℓ| Σ_m ΔY_ℓm(x) conj(ΔY_ℓm(y))``."""
    pts = list(points)
    amp2 = math.pi * spectrum.magnitudes[: L + 1]
    dy = _delta_ylm(L, pts)  # m >= 0
    # m and -m contribute complex-conjugate terms, so Σ_m = m0 + 2 Re Σ_{m>0}
    mult = np.full(L + 1, 2.0)
    mult[0] = 1.0
    c = np.einsum("l,m,lmi,lmj->ij", amp2, mult, dy, np.conj(dy))
    return c.real


def exact_gaussian_oracle(
    points: Sequence[SpherePoint], H: float, stream: RandomStream, n_samples: int
) -> np.ndarray:
    """Joint samples ``(n_samples, n_points)`` from ``N(0, R(points))``.

    Columns at the North pole are exactly zero; the remaining block is
    sampled through :func:`cholesky_psd`.
    """
    H = check_hurst(H)
    pts = list(points)
    if len({(p.theta, p.phi) for p in pts}) != len(pts):
        raise UsageError("exact_gaussian_oracle needs distinct points")
    live = [i for i, p in enumerate(pts) if p.theta != 0.0]
    out = np.zeros((int(n_samples), len(pts)))
    if live:
        cov = covariance_matrix([pts[i] for i in live], H)
        factor, _ = cholesky_psd(cov)
        z = stream.generator().standard_normal((int(n_samples), len(live)))
        out[:, live] = z @ factor.T
    return out


def recover_coefficient(
    r: KLRealization, ell: int, m: int, theta_order: int | None = None, phi_count: int | None = None
) -> complex | None:
    """Project the synthesized field back onto ``Y_ℓm``.

    Returns ``∫ B conj(Y_ℓm) dσ / sqrt(π |d_ℓ|)``, which reproduces the stored
    ``ε_ℓm`` (convention factor 1). ``None`` flags ℓ = 0, whose modal
    amplitude is absent from the field.
    """
    if abs(m) > ell:
        raise UsageError(f"|m| must be <= l, got l={ell}, m={m}")
    if ell == 0:
        return None
    if ell > r.spectrum.L:
        raise UsageError(f"spectrum has no amplitude for degree {ell}")
    need_theta = (r.L + ell + 2) // 2
    need_phi = r.L + abs(m) + 1
    theta_order = need_theta + 1 if theta_order is None else int(theta_order)
    phi_count = 2 * (r.L + abs(m)) + 2 if phi_count is None else int(phi_count)
    if theta_order < need_theta or phi_count < need_phi:
        raise ConfigurationError(
            f"under-resolved projection: need theta_order >= {need_theta}, phi_count >= {need_phi}"
        )
    rule = gauss_legendre(theta_order)
    thetas = np.arccos(rule.nodes)
    phis = 2.0 * math.pi * np.arange(phi_count) / phi_count
    grid = [from_angles(t, p) for t in thetas for p in phis]
    values = evaluate_many(r, grid).reshape(theta_order, phi_count)
    ylm = np.array([sph_harm(ell, m, q) for q in grid]).reshape(theta_order, phi_count)
    integral = (2.0 * math.pi / phi_count) * np.einsum("t,tp,tp->", rule.weights, values, np.conj(ylm))
    amp = math.sqrt(math.pi * r.spectrum.magnitude(ell))
    return complex(integral / amp)


def write_realization_csv(path, points: Sequence[SpherePoint], values) -> None:
    """``theta,phi,value`` rows at 17 significant digits."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "phi", "value"])
        for p, v in zip(points, values):
            w.writerow([f"{p.theta:.17g}", f"{p.phi:.17g}", f"{float(v):.17g}"])


def read_realization_csv(path):
    """Inverse of :func:`write_realization_csv`: ``(points, values)``."""
    pts, vals = [], []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            pts.append(from_angles(float(row["theta"]), float(row["phi"])))
            vals.append(float(row["value"]))
    return pts, np.array(vals)
