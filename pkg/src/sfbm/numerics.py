"""Numerical kernel: special functions, quadrature, dense SPD algebra, RNG.

Everything here is pure: functions depend only on their arguments and the
value types are immutable, so they can be shared across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import roots_legendre

from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    NotPSDError,
    UsageError,
)

__all__ = [
    "log_gamma",
    "beta",
    "QuadratureRule",
    "gauss_legendre",
    "integrate_adaptive",
    "integrate_panels",
    "SymMatrix",
    "CholeskyResult",
    "cholesky_psd",
    "RegressionResult",
    "regression_residual",
    "RandomStream",
    "draw_standard_normal",
]

MAX_GL_ORDER = 4096


# --------------------------------------------------------------------------
# special functions
# --------------------------------------------------------------------------

def log_gamma(y: float) -> float:
    """Natural log of the Gamma function for ``y > 0``."""
    y = float(y)
    if not y > 0 or not math.isfinite(y):
        raise DomainError(f"log_gamma requires a positive finite argument, got {y!r}")
    return math.lgamma(y)


def beta(a: float, b: float) -> float:
    """Euler Beta function ``B(a, b) = Γ(a)Γ(b)/Γ(a+b)`` for positive ``a, b``."""
    a, b = float(a), float(b)
    if not (a > 0 and b > 0):
        raise DomainError(f"beta requires positive arguments, got ({a!r}, {b!r})")
    return math.exp(log_gamma(a) + log_gamma(b) - log_gamma(a + b))


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre nodes and weights on [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, f: Callable[[np.ndarray], np.ndarray], a: float = -1.0, b: float = 1.0):
        half = 0.5 * (b - a)
        x = half * self.nodes + 0.5 * (a + b)
        return half * np.dot(self.weights, f(x))


def gauss_legendre(order: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` nodes, symmetrized to machine precision."""
    if isinstance(order, bool) or int(order) != order or not 1 <= order <= MAX_GL_ORDER:
        raise ConfigurationError(f"Gauss-Legendre order must be in [1, {MAX_GL_ORDER}], got {order!r}")
    order = int(order)
    x, w = roots_legendre(order)
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w, order=order)


# Gauss-Kronrod 7/15 pair (QUADPACK constants); K15 is exact to degree 22,
# the embedded G7 to degree 13.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# G7 nodes are the odd-indexed Kronrod nodes
GAUSS7_WEIGHTS = np.zeros(15)
GAUSS7_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS7_WEIGHTS[[13, 11, 9]] = _WG[:3]
GAUSS7_WEIGHTS[7] = _WG[3]


def kronrod_nodes(left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map the 15 Kronrod nodes onto each panel.

    Returns ``(x, half)`` with ``x`` of shape ``(n_panels, 15)`` and the
    panel half-widths of shape ``(n_panels,)``.
    """
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    return mid[:, None] + half[:, None] * KRONROD_NODES[None, :], half


def integrate_panels(
    rule: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    a: float,
    b: float,
    abs_tol: float,
    max_depth: int = 50,
    initial_panels: int = 1,
):
    """Breadth-first adaptive bisection driven by a nested pair of rules.

    ``rule(left, right)`` returns ``(fine, coarse)`` estimates of the integral
    over each panel, shaped ``(..., n_panels)``; leading axes hold components
    of a vector-valued integrand. A panel is accepted when its discrepancy is
    below its width-proportional share of ``abs_tol``, so the accepted
    discrepancies sum to at most ``abs_tol``.

    Returns ``(value, err_estimate)`` with the leading component shape.
    """
    if not a < b:
        raise UsageError(f"integration interval must satisfy a < b, got [{a}, {b}]")
    if not abs_tol > 0:
        raise UsageError("abs_tol must be positive")
    edges = np.linspace(a, b, int(initial_panels) + 1)
    left, right = edges[:-1], edges[1:]
    density = abs_tol / (b - a)
    value = None
    err = None
    for depth in range(max_depth + 1):
        fine, coarse = rule(left, right)
        fine = np.asarray(fine)
        coarse = np.asarray(coarse)
        diff = np.abs(fine - coarse)
        panel_err = diff.reshape(-1, diff.shape[-1]).max(axis=0)
        ok = panel_err <= density * (right - left)
        if value is None:
            value = np.zeros(fine.shape[:-1], dtype=fine.dtype)
            err = np.zeros(fine.shape[:-1])
        value = value + fine[..., ok].sum(axis=-1)
        err = err + diff[..., ok].sum(axis=-1)
        if ok.all():
            return value, err
        bad_l, bad_r = left[~ok], right[~ok]
        if depth == max_depth:
            best = value + fine[..., ~ok].sum(axis=-1)
            total_err = err + diff[..., ~ok].sum(axis=-1)
            raise ConvergenceError(
                f"adaptive quadrature on [{a}, {b}] did not reach tol {abs_tol:g} "
                f"at depth {max_depth} ({bad_l.size} unresolved panels)",
                best_estimate=best,
                err_estimate=total_err,
            )
        mid = 0.5 * (bad_l + bad_r)
        left = np.concatenate([bad_l, mid])
        right = np.concatenate([mid, bad_r])
        order = np.argsort(left, kind="stable")
        left, right = left[order], right[order]
    raise AssertionError("unreachable")


def integrate_adaptive(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    abs_tol: float = 1e-10,
    max_depth: int = 50,
    initial_panels: int = 1,
) -> tuple[float, float]:
    """Adaptive Gauss-Kronrod (G7/K15) integration of a vectorized ``f``.

    ``f`` receives a 1-D array of abscissae and must return values of the
    same length (or shape ``(len(x), k)`` for a vector-valued integrand).
    Raises :class:`ConvergenceError` carrying the best estimate when the
    tolerance is not met at ``max_depth``.
    """

    def rule(left, right):
        x, half = kronrod_nodes(left, right)
        y = np.asarray(f(x.ravel()))
        y = y.reshape(x.shape + y.shape[1:])
        # move component axes in front of the panel axis
        y = np.moveaxis(y, (0, 1), (-2, -1))
        fine = (y @ KRONROD_WEIGHTS) * half
        coarse = (y @ GAUSS7_WEIGHTS) * half
        return fine, coarse

    value, err = integrate_panels(rule, a, b, abs_tol, max_depth, initial_panels)
    if np.ndim(value) == 0:
        return float(value), float(err)
    return value, err


# --------------------------------------------------------------------------
# dense symmetric linear algebra
# --------------------------------------------------------------------------

class SymMatrix:
    """Dense symmetric matrix stored as a single (lower) triangle."""

    __slots__ = ("_lower",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise UsageError(f"SymMatrix needs a square 2-D array, got shape {a.shape}")
        self._lower = np.tril(a)
        self._lower.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self._lower.shape[0]

    @property
    def array(self) -> np.ndarray:
        low = self._lower
        return low + np.tril(low, -1).T

    def max_abs_diagonal(self) -> float:
        d = np.abs(np.diag(self._lower))
        return float(d.max()) if d.size else 0.0

    def __repr__(self):
        return f"SymMatrix(dimension={self.dimension})"


class CholeskyResult(NamedTuple):
    factor: np.ndarray
    jitter: float


def _as_sym(m) -> SymMatrix:
    return m if isinstance(m, SymMatrix) else SymMatrix(m)


def cholesky_psd(
    m,
    jitter_start: float = 0.0,
    growth: float = 10.0,
    rel_floor: float = 1e-14,
    rel_cap: float = 1e-6,
) -> CholeskyResult:
    """Cholesky factor of a PSD matrix with geometric jitter escalation.

    Tries ``jitter_start`` first; on failure jitter restarts at
    ``rel_floor * max|diag|`` (or ``growth * jitter_start`` if larger) and is
    multiplied by ``growth`` until the factorization succeeds. Exceeding
    ``rel_cap * max|diag|`` raises :class:`NotPSDError`.
    """
    sym = _as_sym(m)
    a = sym.array
    n = sym.dimension
    if n == 0:
        return CholeskyResult(np.zeros((0, 0)), 0.0)
    scale = sym.max_abs_diagonal()
    cap = rel_cap * scale
    jitter = float(jitter_start)
    if jitter < 0:
        raise UsageError("jitter_start must be nonnegative")
    eye = np.eye(n)
    while True:
        try:
            factor = np.linalg.cholesky(a + jitter * eye if jitter else a)
        except np.linalg.LinAlgError:
            pass
        else:
            if np.all(np.isfinite(factor)):
                return CholeskyResult(factor, jitter)
        if jitter == 0.0:
            jitter = max(rel_floor * scale, growth * float(jitter_start))
            if jitter == 0.0:
                raise NotPSDError("zero matrix scale: cannot regularize")
        else:
            jitter *= growth
        if jitter > cap:
            raise NotPSDError(
                f"matrix is not PSD: jitter would exceed {rel_cap:g} x max diagonal ({cap:.3e})"
            )


class RegressionResult(NamedTuple):
    residual: float
    weights: np.ndarray
    clamp: float
    jitter: float


def regression_residual(cov, cross, var_target: float, jitter_start: float = 0.0) -> RegressionResult:
    """Best linear prediction error ``var_target - crossᵀ cov⁻¹ cross``.

    Computed through the Cholesky factor of ``cov``. A negative residual
    (roundoff at near-duplicate points) is clamped to zero and the clamped
    amount is reported in ``clamp``.
    """
    cross = np.asarray(cross, dtype=float).ravel()
    sym = _as_sym(cov) if np.size(cross) else None
    n = cross.size
    if n == 0:
        return RegressionResult(float(var_target), np.zeros(0), 0.0, 0.0)
    if sym.dimension != n:
        raise UsageError(f"cov is {sym.dimension}x{sym.dimension} but cross has length {n}")
    factor, jitter = cholesky_psd(sym, jitter_start)
    y = solve_triangular(factor, cross, lower=True)
    weights = solve_triangular(factor.T, y, lower=False)
    residual = float(var_target) - float(y @ y)
    clamp = 0.0
    if residual < 0:
        clamp, residual = -residual, 0.0
    return RegressionResult(residual, weights, clamp, jitter)


# --------------------------------------------------------------------------
# random numbers
# --------------------------------------------------------------------------

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    """A reproducible, splittable source of random draws.

    A stream is a value: every generator built from the same
    ``(seed, stream_id)`` yields the same sequence. Independent streams for
    parallel tasks come from :meth:`child`, whose ids are hashed from the
    parent id and the task index through numpy's ``SeedSequence``.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or not 0 <= int(v) <= _U64:
                raise UsageError(f"{name} must be an integer in [0, 2**64), got {v!r}")
            object.__setattr__(self, name, int(v))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RandomStream":
        ss = np.random.SeedSequence(entropy=[self.stream_id, int(index)], spawn_key=(0x5F8B,))
        child_id = int(ss.generate_state(1, dtype=np.uint64)[0])
        return RandomStream(self.seed, child_id)


def draw_standard_normal(stream: RandomStream, n: int) -> np.ndarray:
    """``n`` i.i.d. N(0, 1) variates, determined entirely by ``stream``."""
    if int(n) < 0:
        raise UsageError("n must be nonnegative")
    return stream.generator().standard_normal(int(n))
