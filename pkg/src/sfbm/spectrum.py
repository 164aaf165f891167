"""Angular power spectrum of spherical fractional Brownian motion.

``d_ℓ = ∫_0^π θ^{2H} P_ℓ(cos θ) sin θ dθ`` is computed three ways:

* ``quadrature``  -- the defining integral, directly;
* ``mehler``      -- the Dirichlet-Mehler comparison value
  ``d̃_ℓ = 2^{2H+1}/π · B(H+1, 1/2) · ∫_0^π sin((ℓ+½)φ) sin(φ/2)^{2H+1} dφ``;
* ``closed_form`` -- the Beta-function formula
  ``(2/π) B(H+1, ½) B(2H+2, ℓ-H+½) sin((H+½)π)``.

Signs: the defining integral is negative for ℓ >= 1 (and identically zero
for even ℓ >= 2 when H = 1/2), while the closed form is nonnegative. Values
are stored signed; downstream code uses magnitudes ``|d_ℓ|``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    BranchCutError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    IntegrityError,
    UsageError,
)
from .harmonics import legendre_p
from .numerics import (
    GAUSS7_WEIGHTS,
    KRONROD_WEIGHTS,
    beta,
    gauss_legendre,
    integrate_adaptive,
    integrate_panels,
    kronrod_nodes,
    log_gamma,
)

__all__ = [
    "HURST_TEST_SET",
    "METHODS",
    "FORMAT_VERSION",
    "check_hurst",
    "PowerSpectrum",
    "dl_quadrature",
    "oscillatory_I",
    "inner_integral",
    "inner_integral_closed_form",
    "mehler_prefactor",
    "dl_mehler",
    "dl_closed_form",
    "contour_integral",
    "contour_imag",
    "contour_oscillatory",
    "SandwichReport",
    "sandwich_report",
    "build_spectrum",
    "DecayReport",
    "decay_check",
    "asymptotic_constant",
    "closed_form_comparison",
    "save_spectrum",
    "load_spectrum",
    "write_spectrum_csv",
]

HURST_TEST_SET = (0.1, 0.25, 0.4, 0.5)
METHODS = ("quadrature", "mehler", "closed_form")
FORMAT_VERSION = 1
DEFAULT_TOL = 1e-12
MIN_TOL = 1e-13


def check_hurst(H) -> float:
    """Validate a Hurst index; the field exists only for 0 < H <= 1/2."""
    try:
        H = float(H)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"Hurst index must be a real number, got {H!r}") from exc
    if not (0.0 < H <= 0.5):
        raise DomainError(
            f"Hurst index {H!r} outside (0, 1/2]: spherical fBm exists only for 0 < H <= 1/2"
        )
    return H


def _check_tol(tol):
    tol = float(tol)
    if not tol >= MIN_TOL:
        raise ConfigurationError(f"tolerance must be >= {MIN_TOL:g}, got {tol:g}")
    return tol


def _check_degree(ell):
    if isinstance(ell, bool) or int(ell) != ell or ell < 0:
        raise DomainError(f"degree must be a nonnegative integer, got {ell!r}")
    return int(ell)


def _cos_pi_h(H):
    # sin((H + 1/2)π) written so that H = 1/2 gives exactly 0
    return math.sin(math.pi * (0.5 - H))


# --------------------------------------------------------------------------
# spectrum container
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    """Signed values ``d_0..d_L`` for one Hurst index plus their provenance."""

    H: float
    L: int
    values: np.ndarray
    method: str = "quadrature"
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        H = check_hurst(self.H)
        vals = np.array(self.values, dtype=float)
        if self.method not in METHODS:
            raise UsageError(f"unknown spectrum method {self.method!r}")
        if int(self.L) != self.L or self.L < 0 or vals.shape != (int(self.L) + 1,):
            raise UsageError(f"need L + 1 values for L = {self.L}, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise IntegrityError("spectrum contains non-finite values")
        if self.method == "quadrature":
            if not vals[0] > 0:
                raise IntegrityError("quadrature spectrum must have d_0 > 0")
            # strictly negative for l >= 1, up to the quadrature tolerance
            # (the even degrees vanish exactly when H = 1/2)
            if np.any(vals[1:] > self.tol):
                bad = int(np.argmax(vals[1:] > self.tol)) + 1
                raise IntegrityError(f"quadrature spectrum has d_{bad} = {vals[bad]:.3e} > 0")
        vals.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "values", vals)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.values)

    def magnitude(self, ell: int) -> float:
        return float(abs(self.values[ell]))

    def truncated(self, L: int) -> "PowerSpectrum":
        if L > self.L:
            raise UsageError(f"cannot extend a spectrum of degree {self.L} to {L}")
        return PowerSpectrum(self.H, L, self.values[: L + 1], self.method, self.tol)


# --------------------------------------------------------------------------
# single-degree integrals
# --------------------------------------------------------------------------

def _oscillation_panels(ell):
    # at least four panels per oscillation of P_l(cos θ) or sin((l+1/2)φ)
    return 4 * (ell + 1)


def _integrate(f, a, b, tol, panels, what):
    try:
        return integrate_adaptive(f, a, b, abs_tol=tol, max_depth=60, initial_panels=panels)
    except ConvergenceError as exc:
        raise ConvergenceError(f"{what}: {exc}", exc.best_estimate, exc.err_estimate) from exc


def dl_quadrature(ell: int, H: float, tol: float = DEFAULT_TOL) -> float:
    """Signed ``d_ℓ = ∫_0^π θ^{2H} P_ℓ(cos θ) sin θ dθ`` by adaptive quadrature."""
    ell = _check_degree(ell)
    H = check_hurst(H)
    tol = _check_tol(tol)

    def f(theta):
        return theta ** (2 * H) * legendre_p(ell, np.cos(theta)) * np.sin(theta)

    value, _ = _integrate(f, 0.0, math.pi, tol, _oscillation_panels(ell), f"d_{ell} (H={H})")
    return value


def oscillatory_I(ell: int, H: float, tol: float = DEFAULT_TOL) -> float:
    """``∫_0^π sin((ℓ+½)φ) sin(φ/2)^{2H+1} dφ`` with oscillation-resolving panels."""
    ell = _check_degree(ell)
    H = check_hurst(H)
    tol = _check_tol(tol)
    a = ell + 0.5

    def f(phi):
        return np.sin(a * phi) * np.sin(0.5 * phi) ** (2 * H + 1)

    value, _ = _integrate(f, 0.0, math.pi, tol, _oscillation_panels(ell), f"I_{ell} (H={H})")
    return value


def inner_integral(phi: float, H: float, tol: float = 1e-13) -> float:
    """``∫_0^φ sin(θ/2)^{2H} sin θ / sqrt(cos θ - cos φ) dθ`` by quadrature.

    With ``u = sin(θ/2)`` the integral becomes
    ``2^{3/2} ∫_0^s u^{2H+1} / sqrt(s² - u²) du`` (``s = sin(φ/2)``); the
    remaining inverse-square-root endpoint is removed by ``u = s(1 - w²)``,
    leaving the smooth ``2^{5/2} ∫_0^1 u^{2H+1} / sqrt(2 - w²) dw``.
    """
    phi = float(phi)
    H = check_hurst(H)
    if not 0.0 < phi <= math.pi:
        raise DomainError(f"phi must lie in (0, pi], got {phi!r}")
    s = math.sin(0.5 * phi)

    def f(w):
        u = s * (1.0 - w * w)
        return u ** (2 * H + 1) / np.sqrt(2.0 - w * w)

    value, _ = _integrate(f, 0.0, 1.0, tol, 8, f"inner integral (phi={phi}, H={H})")
    return 2.0 ** 2.5 * value


def inner_integral_closed_form(phi: float, H: float) -> float:
    """``√2 · B(H+1, ½) · sin(φ/2)^{2H+1}``."""
    H = check_hurst(H)
    return math.sqrt(2.0) * beta(H + 1.0, 0.5) * math.sin(0.5 * float(phi)) ** (2 * H + 1)


def mehler_prefactor(H: float) -> float:
    """``2^{2H+1}/π · B(H+1, ½)``."""
    H = check_hurst(H)
    return 2.0 ** (2 * H + 1) / math.pi * beta(H + 1.0, 0.5)


def dl_mehler(ell: int, H: float, tol: float = DEFAULT_TOL) -> float:
    """Signed comparison value ``d̃_ℓ`` (Dirichlet-Mehler route)."""
    return mehler_prefactor(H) * oscillatory_I(ell, H, tol)


def dl_closed_form(ell: int, H: float) -> float:
    """The Beta-function formula for ``d̃_ℓ``, ℓ >= 1.

    Nonnegative on (0, 1/2] and exactly zero at H = 1/2. Kept for
    comparison only: it does not reproduce the integral it claims to equal.
    """
    ell = _check_degree(ell)
    H = check_hurst(H)
    if ell == 0:
        raise UsageError("closed form is defined for l >= 1 only; use dl_mehler(0, H)")
    return (2.0 / math.pi) * beta(H + 1.0, 0.5) * beta(2 * H + 2.0, ell - H + 0.5) * _cos_pi_h(H)


def asymptotic_constant(H: float) -> float:
    """``(2/π) B(H+1, ½) Γ(2H+2) sin((H+½)π)``, the limit of ``dl_closed_form·ℓ^{2H+2}``."""
    H = check_hurst(H)
    return (2.0 / math.pi) * beta(H + 1.0, 0.5) * math.exp(log_gamma(2 * H + 2.0)) * _cos_pi_h(H)


# --------------------------------------------------------------------------
# contour route
# --------------------------------------------------------------------------

_CONTOUR_ORDER = 16


def contour_integral(ell: int, H: float, panels: int | None = None) -> complex:
    """``∫_C f_ℓ(z) dz`` along ``z = e^{it}``, ``t ∈ [0, π/2]``.

    ``f_ℓ(z) = z^{2ℓ} (z - 1/z)^{2H+1} / (2^{2H} i^{2H+1})`` with principal
    powers. Integrated by ``panels`` uniform panels of 16-point
    Gauss-Legendre in ``t``. Raises :class:`BranchCutError` if the argument
    of ``z - 1/z`` jumps between consecutive nodes.
    """
    ell = _check_degree(ell)
    H = check_hurst(H)
    min_panels = 64 * (ell + 1)
    if panels is None:
        panels = min_panels
    if panels < min_panels:
        raise ConfigurationError(f"contour quadrature needs >= {min_panels} panels, got {panels}")
    rule = gauss_legendre(_CONTOUR_ORDER)
    edges = np.linspace(0.0, 0.5 * math.pi, panels + 1)
    half = 0.5 * np.diff(edges)
    t = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * rule.nodes[None, :]
    t = t.ravel()
    z = np.exp(1j * t)
    w = z - 1.0 / z
    arg = np.angle(w)
    if np.any(np.abs(np.diff(arg)) > 0.5 * math.pi):
        k = int(np.argmax(np.abs(np.diff(arg)) > 0.5 * math.pi))
        raise BranchCutError(f"arg(z - 1/z) jumps across the branch cut near t = {t[k]:.6g}")
    p = 2 * H + 1
    f = z ** (2 * ell) * np.exp(p * np.log(w)) / (2.0 ** (2 * H) * (1j) ** p)
    integrand = f * 1j * z  # dz = i z dt
    weights = (half[:, None] * rule.weights[None, :]).ravel()
    return complex(np.dot(weights, integrand))


def contour_imag(ell: int, H: float, panels: int | None = None) -> float:
    """``2 · Im ∫_C f_ℓ(z) dz`` -- the contour expression as written.

    For ℓ >= 1 this does not equal :func:`oscillatory_I`; see
    :func:`contour_oscillatory` for the component that does.
    """
    return 2.0 * contour_integral(ell, H, panels).imag


def contour_oscillatory(ell: int, H: float, panels: int | None = None) -> float:
    """``-Re ∫_C f_ℓ(z) dz``, equal to ``oscillatory_I(ℓ, H)``.

    Substituting ``z = e^{iφ/2}`` gives ``dφ = 2 dz / (iz)``, so the
    oscillatory integral is ``Im ∫_C f_ℓ(z) dz / i = -Re ∫_C f_ℓ(z) dz``.
    """
    return -contour_integral(ell, H, panels).real


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SandwichReport:
    """Comparison of ``d_ℓ`` against ``d̃_ℓ ≤ d_ℓ ≤ 2^{2H} d̃_ℓ``."""

    ell: int
    H: float
    d: float
    d_tilde: float
    factor: float
    signed_holds: bool
    magnitude_holds: bool

    def as_dict(self):
        return dict(self.__dict__)


def sandwich_report(ell: int, H: float, tol: float = DEFAULT_TOL) -> SandwichReport:
    """Evaluate the sandwich inequality both sign-wise and on magnitudes.

    Comparisons allow a slack of ``10·tol`` for quadrature error. Never raises
    on a violated inequality; the verdicts are data.
    """
    H = check_hurst(H)
    d = dl_quadrature(ell, H, tol)
    dt = dl_mehler(ell, H, tol)
    c = 2.0 ** (2 * H)
    slack = 10.0 * tol
    signed = dt <= d + slack and d <= c * dt + slack
    mag = abs(dt) <= abs(d) + slack and abs(d) <= c * abs(dt) + slack
    return SandwichReport(int(ell), H, d, dt, c, bool(signed), bool(mag))


# --------------------------------------------------------------------------
# batched spectra
# --------------------------------------------------------------------------

_CHUNK_NODES = 4096


def _legendre_rows(L, x):
    out = np.empty((L + 1,) + x.shape)
    out[0] = 1.0
    if L >= 1:
        out[1] = x
    for k in range(1, L):
        out[k + 1] = ((2 * k + 1) * x * out[k] - k * out[k - 1]) / (k + 1)
    return out


def _sine_rows(L, phi):
    ell = np.arange(L + 1)[:, None]
    return np.sin((ell + 0.5) * phi[None, :])


def _batched_rule(L, weight_fn, rows_fn):
    """Kronrod/Gauss panel estimates of ``∫ weight(x) row_ℓ(x) dx`` for all ℓ."""

    def rule(left, right):
        n = left.size
        fine = np.empty((L + 1, n))
        coarse = np.empty((L + 1, n))
        step = max(1, _CHUNK_NODES // 15)
        for start in range(0, n, step):
            sl = slice(start, min(n, start + step))
            x, half = kronrod_nodes(left[sl], right[sl])
            g = weight_fn(x)  # (p, 15)
            rows = rows_fn(L, x.ravel()).reshape((L + 1,) + x.shape) * g[None]
            fine[:, sl] = (rows @ KRONROD_WEIGHTS) * half
            coarse[:, sl] = (rows @ GAUSS7_WEIGHTS) * half
        return fine, coarse

    return rule


def _run_batched(rule, a, b, tol, panels, what):
    try:
        value, err = integrate_panels(rule, a, b, tol, max_depth=60, initial_panels=panels)
    except ConvergenceError as exc:
        bad = np.flatnonzero(np.asarray(exc.err_estimate) > tol)
        first = int(bad[0]) if bad.size else -1
        raise ConvergenceError(
            f"{what}: degree l = {first} did not converge ({exc})",
            exc.best_estimate,
            exc.err_estimate,
        ) from exc
    return value


def _quadrature_values(H, L, tol):
    rule = _batched_rule(
        L,
        lambda th: th ** (2 * H) * np.sin(th),
        lambda L_, th: _legendre_rows(L_, np.cos(th)),
    )
    return _run_batched(rule, 0.0, math.pi, tol, _oscillation_panels(L), f"spectrum (H={H})")


def _mehler_values(H, L, tol):
    rule = _batched_rule(L, lambda ph: np.sin(0.5 * ph) ** (2 * H + 1), _sine_rows)
    vals = _run_batched(rule, 0.0, math.pi, tol, _oscillation_panels(L), f"Mehler spectrum (H={H})")
    return mehler_prefactor(H) * vals


def build_spectrum(H: float, L: int, tol: float = DEFAULT_TOL, method: str = "quadrature") -> PowerSpectrum:
    """All degrees ``0..L`` at once by the chosen method.

    Degrees share one adaptive panel set; a panel is refined until every
    degree meets its share of ``tol``, so each entry carries error <= ``tol``.
    The result depends only on the arguments (bit-for-bit reproducible).
    """
    H = check_hurst(H)
    L = _check_degree(L)
    tol = _check_tol(tol)
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "quadrature":
        if L < 1:
            raise UsageError("build_spectrum needs L >= 1")
        vals = _quadrature_values(H, L, tol)
    elif method == "mehler":
        vals = _mehler_values(H, L, tol)
    else:
        vals = np.empty(L + 1)
        vals[0] = dl_mehler(0, H, tol)
        for ell in range(1, L + 1):
            vals[ell] = dl_closed_form(ell, H)
    return PowerSpectrum(H, L, vals, method, tol)


@dataclass(frozen=True)
class DecayReport:
    """Spread of ``|d_ℓ|·ℓ^{2H+2}`` over a degree window.

    ``drift`` compares the mean of the scaled values over the two halves of
    the top octave ``[ℓ_max/2, ℓ_max]``, relative to the octave mean.
    """

    H: float
    ell_min: int
    ell_max: int
    min_ratio: float
    max_ratio: float
    drift: float

    @property
    def spread(self) -> float:
        return self.max_ratio / self.min_ratio if self.min_ratio > 0 else math.inf


def decay_check(s: PowerSpectrum, ell_min: int, ell_max: int) -> DecayReport:
    if ell_min < 8 or ell_max > s.L or ell_max <= ell_min:
        raise UsageError(f"need 8 <= ell_min < ell_max <= {s.L}, got [{ell_min}, {ell_max}]")
    ell = np.arange(ell_min, ell_max + 1)
    scaled = s.magnitudes[ell] * ell.astype(float) ** (2 * s.H + 2)
    lo = ell_max // 2
    mid = (lo + ell_max) // 2
    octave = s.magnitudes[lo : ell_max + 1] * np.arange(lo, ell_max + 1.0) ** (2 * s.H + 2)
    lower = octave[: mid - lo].mean()
    upper = octave[mid - lo :].mean()
    drift = abs(upper - lower) / octave.mean() if octave.mean() > 0 else math.inf
    return DecayReport(s.H, int(ell_min), int(ell_max), float(scaled.min()), float(scaled.max()), float(drift))


def closed_form_comparison(
    hurst_set: Iterable[float] = HURST_TEST_SET,
    ells: Iterable[int] = range(1, 33),
    tol: float = DEFAULT_TOL,
) -> list[dict]:
    """Side-by-side closed form, Dirichlet-Mehler and quadrature values.

    One record per (H, ℓ); nothing is asserted. ``ratio`` is
    closed_form / |mehler| (0 wherever the closed form vanishes).
    """
    records = []
    ells = list(ells)
    for H in hurst_set:
        H = check_hurst(H)
        L = max(ells)
        quad = build_spectrum(H, L, tol, "quadrature")
        mehl = build_spectrum(H, L, tol, "mehler")
        for ell in ells:
            cf = dl_closed_form(ell, H)
            records.append(
                {
                    "H": H,
                    "ell": int(ell),
                    "closed_form": cf,
                    "mehler": float(mehl.values[ell]),
                    "quadrature": float(quad.values[ell]),
                    "ratio": cf / abs(mehl.values[ell]) if mehl.values[ell] != 0 else math.nan,
                    "sign_agrees": bool(np.sign(cf) == np.sign(mehl.values[ell])),
                }
            )
    return records


# --------------------------------------------------------------------------
# cache files
# --------------------------------------------------------------------------

_CACHE_KEYS = ("format_version", "H", "L", "method", "tol", "values", "build_timestamp")


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_spectrum(path, s: PowerSpectrum, timestamp: str | None = None) -> None:
    """Write the versioned JSON cache record (float repr round-trips exactly)."""
    record = {
        "format_version": FORMAT_VERSION,
        "H": s.H,
        "L": s.L,
        "method": s.method,
        "tol": s.tol,
        "values": [float(v) for v in s.values],
        "build_timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _atomic_write_text(Path(path), json.dumps(record, indent=1) + "\n")


def load_spectrum(path) -> PowerSpectrum:
    """Read and validate a cache record; any defect raises :class:`IntegrityError`."""
    path = Path(path)
    try:
        record = json.loads(path.read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: unreadable spectrum cache ({exc})") from exc
    if not isinstance(record, dict) or any(k not in record for k in _CACHE_KEYS):
        raise IntegrityError(f"{path}: spectrum cache is missing required fields")
    if record["format_version"] != FORMAT_VERSION:
        raise IntegrityError(
            f"{path}: cache format_version {record['format_version']!r} != {FORMAT_VERSION} (stale cache)"
        )
    values = record["values"]
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise IntegrityError(f"{path}: values must be a list of numbers")
    try:
        return PowerSpectrum(
            H=record["H"], L=record["L"], values=values, method=record["method"], tol=record["tol"]
        )
    except (UsageError, IntegrityError, TypeError, ValueError) as exc:
        raise IntegrityError(f"{path}: invalid spectrum cache ({exc})") from exc


def write_spectrum_csv(path, s: PowerSpectrum) -> None:
    """CSV with columns ``ell,d_ell,abs_d_ell,ell_scaled`` (17 significant digits)."""
    lines = ["ell,d_ell,abs_d_ell,ell_scaled"]
    for ell, v in enumerate(s.values):
        scaled = abs(v) * float(ell) ** (2 * s.H + 2)
        lines.append(f"{ell},{v:.17g},{abs(v):.17g},{scaled:.17g}")
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")
