"""Legendre polynomials, normalized associated Legendre functions and
complex spherical harmonics (Condon-Shortley phase included).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .numerics import gauss_legendre
from .sphere import SpherePoint

__all__ = [
    "HarmonicBand",
    "legendre_p",
    "legendre_p_all",
    "assoc_legendre_norm",
    "assoc_legendre_table",
    "sph_harm",
    "ylm_table",
    "band_at",
    "addition_sum",
    "orthonormality_defect",
]

_INV_SQRT_4PI = 1.0 / math.sqrt(4.0 * math.pi)


def _check_x(x):
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0) or np.any(np.isnan(xa)):
        raise DomainError("Legendre argument must satisfy |x| <= 1")
    return xa


def _check_degree(ell):
    if int(ell) != ell or ell < 0:
        raise DomainError(f"degree must be a nonnegative integer, got {ell!r}")
    return int(ell)


def legendre_p(ell: int, x):
    """P_ℓ(x) from the three-term recurrence; ``x`` may be an array."""
    ell = _check_degree(ell)
    xa = _check_x(x)
    p0 = np.ones_like(xa)
    if ell == 0:
        return p0 if xa.ndim else float(p0)
    p1 = xa.copy()
    for k in range(1, ell):
        p0, p1 = p1, ((2 * k + 1) * xa * p1 - k * p0) / (k + 1)
    return p1 if xa.ndim else float(p1)


def legendre_p_all(lmax: int, x) -> np.ndarray:
    """``[P_0(x), ..., P_lmax(x)]`` stacked along a new leading axis."""
    lmax = _check_degree(lmax)
    xa = _check_x(x)
    out = np.empty((lmax + 1,) + xa.shape)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = xa
    for k in range(1, lmax):
        out[k + 1] = ((2 * k + 1) * xa * out[k] - k * out[k - 1]) / (k + 1)
    return out


# Coefficients of the normalized column recurrence
#   Pbar[l, m] = a * (x Pbar[l-1, m] - b Pbar[l-2, m]),   l >= m + 2
def _rec_a(ell, m):
    return np.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))


def _rec_b(ell, m):
    return np.sqrt(((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0))


def assoc_legendre_norm(ell: int, m: int, x):
    """Fully normalized associated Legendre function of ``x = cos θ``.

    Equals sqrt((2ℓ+1)/(4π)·(ℓ-m)!/(ℓ+m)!)·P_ℓm(x), so that
    ``Y_ℓm = assoc_legendre_norm(ℓ, m, cos θ)·e^{imφ}``.
    """
    ell = _check_degree(ell)
    if int(m) != m or not 0 <= m <= ell:
        raise DomainError(f"order must satisfy 0 <= m <= l, got l={ell}, m={m}")
    m = int(m)
    xa = _check_x(x)
    s = np.sqrt((1.0 - xa) * (1.0 + xa))
    pmm = np.full_like(xa, _INV_SQRT_4PI)
    for k in range(1, m + 1):
        pmm = -np.sqrt((2.0 * k + 1.0) / (2.0 * k)) * s * pmm
    if ell == m:
        out = pmm
    else:
        p_prev, p_cur = pmm, np.sqrt(2.0 * m + 3.0) * xa * pmm
        for k in range(m + 2, ell + 1):
            p_prev, p_cur = p_cur, _rec_a(k, m) * (xa * p_cur - _rec_b(k, m) * p_prev)
        out = p_cur
    return out if xa.ndim else float(out)


def assoc_legendre_table(lmax: int, x) -> np.ndarray:
    """All normalized values ``Pbar[ℓ, m]`` for 0 <= m <= ℓ <= lmax.

    Output shape is ``(lmax+1, lmax+1) + x.shape``; entries with m > ℓ are 0.
    Uses the same floating-point operations as :func:`assoc_legendre_norm`.
    """
    lmax = _check_degree(lmax)
    xa = _check_x(x)
    s = np.sqrt((1.0 - xa) * (1.0 + xa))
    out = np.zeros((lmax + 1, lmax + 1) + xa.shape)
    pmm = np.full_like(xa, _INV_SQRT_4PI)
    out[0, 0] = pmm
    for k in range(1, lmax + 1):
        pmm = -np.sqrt((2.0 * k + 1.0) / (2.0 * k)) * s * pmm
        out[k, k] = pmm
    for m in range(lmax):
        out[m + 1, m] = np.sqrt(2.0 * m + 3.0) * xa * out[m, m]
    extra = (slice(None),) + (None,) * xa.ndim
    for ell in range(2, lmax + 1):
        m = np.arange(ell - 1)
        a = _rec_a(ell, m.astype(float))[extra]
        b = _rec_b(ell, m.astype(float))[extra]
        out[ell, : ell - 1] = a * (xa * out[ell - 1, : ell - 1] - b * out[ell - 2, : ell - 1])
    return out


def ylm_table(lmax: int, points: Sequence[SpherePoint]) -> np.ndarray:
    """Complex ``Y[ℓ, m, k] = Y_ℓm(points[k])`` for 0 <= m <= ℓ <= lmax.

    Negative orders follow from ``Y_ℓ,-m = (-1)^m conj(Y_ℓm)``.
    """
    theta = np.array([p.theta for p in points], dtype=float)
    phi = np.array([p.phi for p in points], dtype=float)
    plm = assoc_legendre_table(lmax, np.cos(theta))
    m = np.arange(lmax + 1)
    phase = np.exp(1j * m[:, None] * phi[None, :])
    return plm * phase[None, :, :]


def sph_harm(ell: int, m: int, point: SpherePoint) -> complex:
    """Complex spherical harmonic Y_ℓm at ``point``."""
    ell = _check_degree(ell)
    if int(m) != m or abs(m) > ell:
        raise DomainError(f"order must satisfy |m| <= l, got l={ell}, m={m}")
    m = int(m)
    am = abs(m)
    val = assoc_legendre_norm(ell, am, math.cos(point.theta)) * complex(
        math.cos(am * point.phi), math.sin(am * point.phi)
    )
    if m < 0:
        val = (-1) ** am * val.conjugate()
    return val


@dataclass(frozen=True, eq=False)
class HarmonicBand:
    """All 2ℓ+1 harmonics of degree ℓ at one point, ordered m = -ℓ..ℓ."""

    ell: int
    values: np.ndarray

    def __getitem__(self, m: int) -> complex:
        if abs(m) > self.ell:
            raise DomainError(f"|m| must be <= {self.ell}")
        return self.values[m + self.ell]


def band_at(ell: int, point: SpherePoint) -> HarmonicBand:
    ell = _check_degree(ell)
    row = assoc_legendre_table(ell, math.cos(point.theta))[ell]
    m = np.arange(ell + 1)
    pos = row * np.exp(1j * m * point.phi)
    neg = ((-1.0) ** m[1:] * np.conj(pos[1:]))[::-1]
    values = np.concatenate([neg, pos])
    values.setflags(write=False)
    return HarmonicBand(ell, values)


def addition_sum(ell: int, x: SpherePoint, y: SpherePoint) -> complex:
    """``Σ_m Y_ℓm(x) conj(Y_ℓm(y))``, summed from the explicit harmonics."""
    bx = band_at(ell, x).values
    by = band_at(ell, y).values
    return complex(np.sum(bx * np.conj(by)))


def orthonormality_defect(lmax: int, theta_order: int, phi_count: int) -> float:
    """Largest deviation of the harmonic Gram matrix from the identity.

    Integrates with Gauss-Legendre in cos θ and the trapezoid rule in φ,
    which is exact for products of harmonics of degree <= lmax once
    ``theta_order >= lmax + 1`` and ``phi_count >= 2 lmax + 2``.
    """
    lmax = _check_degree(lmax)
    if theta_order < lmax + 1 or phi_count < 2 * lmax + 2:
        raise ConfigurationError(
            f"under-resolved quadrature: need theta_order >= {lmax + 1} and "
            f"phi_count >= {2 * lmax + 2}, got {theta_order} and {phi_count}"
        )
    rule = gauss_legendre(theta_order)
    plm = assoc_legendre_table(lmax, rule.nodes)  # (l, m, k)
    phi = 2.0 * math.pi * np.arange(phi_count) / phi_count
    idx = []
    for ell in range(lmax + 1):
        for m in range(-ell, ell + 1):
            idx.append((ell, m))
    idx_arr = np.array(idx).reshape(-1, 2)
    # Y_lm(theta_k, phi_j) = c_m * Pbar[l,|m|](x_k) * exp(i m phi_j), c_m = (-1)^m for m<0
    ell_i, m_i = idx_arr[:, 0], idx_arr[:, 1]
    am = np.abs(m_i)
    sign = np.where(m_i < 0, (-1.0) ** am, 1.0)
    radial = sign[:, None] * plm[ell_i, am, :]  # (n, k)
    fourier = np.exp(1j * np.outer(m_i, phi))  # (n, j)
    # Gram = Σ_k w_k Σ_j (2π/J) radial_a radial_b e^{i(m_a - m_b) φ_j}
    fw = fourier * (2.0 * math.pi / phi_count)
    phi_gram = fw @ np.conj(fourier).T  # (n, n)
    theta_gram = (radial * rule.weights[None, :]) @ radial.T
    gram = theta_gram * phi_gram
    return float(np.max(np.abs(gram - np.eye(len(idx)))))
