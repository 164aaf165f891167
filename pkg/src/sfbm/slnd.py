"""Numerical checks of strong local nondeterminism.

For a target ``x`` and conditioning points ``x_1..x_n`` the conditional
variance ``Var(B(x) | B(x_1), ..., B(x_n))`` is compared with
``ε^{2H}``, where ``ε = min_{0<=k<=n} d(x, x_k)`` and ``x_0 = N`` (the field
is pinned there, so N always counts as observed).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .field import covariance_matrix, truncated_covariance
from .harmonics import legendre_p_all, ylm_table
from .numerics import RandomStream, regression_residual
from .sphere import (
    NORTH_POLE,
    SpherePoint,
    as_vectors,
    from_angles,
    geodesic_distance,
    offset_point,
)
from .spectrum import PowerSpectrum, check_hurst

__all__ = [
    "Configuration",
    "SLNDReport",
    "conditional_variance_exact",
    "conditional_variance_truncated",
    "optimal_weights",
    "quadratic_form_truncated",
    "slnd_ratio",
    "K2Estimate",
    "random_configuration",
    "estimate_K2",
    "HarmonicBoundReport",
    "lemma_bound_check",
    "FAMILIES",
]


@dataclass(frozen=True, eq=False)
class Configuration:
    """A prediction target and the points it is conditioned on."""

    target: SpherePoint
    points: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def epsilon(self) -> float:
        """Distance to the nearest of ``N, x_1, ..., x_n``."""
        d = [geodesic_distance(self.target, NORTH_POLE)]
        d += [geodesic_distance(self.target, p) for p in self.points]
        return min(d)

    @property
    def epsilon_without_pole(self) -> float:
        """Distance to the nearest of ``x_1, ..., x_n`` (N excluded)."""
        if not self.points:
            return math.nan
        return min(geodesic_distance(self.target, p) for p in self.points)

    def as_dict(self) -> dict:
        return {
            "target": [self.target.theta, self.target.phi],
            "points": [[p.theta, p.phi] for p in self.points],
        }


@dataclass(frozen=True, eq=False)
class SLNDReport:
    conditional_variance: float
    epsilon: float
    ratio: float
    weights: np.ndarray
    method: str
    H: float
    degenerate: bool = False
    jitter: float = 0.0
    clamp: float = 0.0


def _effective_indices(c: Configuration) -> list[int]:
    # drop conditioning points at N (B(N) = 0 carries no information) and
    # exact duplicates (keep the first occurrence)
    seen = set()
    keep = []
    for i, p in enumerate(c.points):
        key = p.unit_vector
        if p.theta == 0.0 or key in seen:
            continue
        seen.add(key)
        keep.append(i)
    return keep


def _regress(c: Configuration, cov_fn, var_target: float):
    keep = _effective_indices(c)
    weights = np.zeros(c.n)
    if not keep:
        return var_target, weights, 0.0, 0.0
    pts = [c.points[i] for i in keep]
    full = cov_fn([c.target] + pts)
    res = regression_residual(full[1:, 1:], full[0, 1:], full[0, 0])
    weights[keep] = res.weights
    return res.residual, weights, res.jitter, res.clamp


def _ratio(cv, eps, H):
    if eps == 0.0:
        return math.nan, True
    return cv / eps ** (2.0 * H), False


def conditional_variance_exact(c: Configuration, H: float) -> SLNDReport:
    """Exact ``Var(B(x) | B(x_1..x_n))`` from the analytic covariance."""
    H = check_hurst(H)
    var_target = geodesic_distance(c.target, NORTH_POLE) ** (2.0 * H)
    cv, w, jitter, clamp = _regress(c, lambda pts: covariance_matrix(pts, H), var_target)
    eps = c.epsilon
    ratio, degenerate = _ratio(cv, eps, H)
    return SLNDReport(cv, eps, ratio, w, "exact", H, degenerate, jitter, clamp)


def conditional_variance_truncated(c: Configuration, spectrum: PowerSpectrum, L: int) -> SLNDReport:
    """Same regression on the covariance of the degree-``L`` truncation.

    Equals the quadratic form of :func:`quadratic_form_truncated` minimized
    over the weights.
    """
    cov_fn = lambda pts: truncated_covariance(pts, spectrum, L)  # noqa: E731
    var_target = float(cov_fn([c.target])[0, 0])
    cv, w, jitter, clamp = _regress(c, cov_fn, var_target)
    eps = c.epsilon
    ratio, degenerate = _ratio(cv, eps, spectrum.H)
    return SLNDReport(cv, eps, ratio, w, f"truncated({L})", spectrum.H, degenerate, jitter, clamp)


def optimal_weights(c: Configuration, H: float) -> np.ndarray:
    """Minimizer of ``E[(B(x) - Σ γ_j B(x_j))²]`` (normal equations)."""
    if c.n < 1:
        raise UsageError("optimal_weights needs at least one conditioning point")
    return conditional_variance_exact(c, H).weights


def quadratic_form_truncated(c: Configuration, weights, spectrum: PowerSpectrum, L: int) -> float:
    """``π Σ_{ℓ<=L} |d_ℓ| Σ_m |Y_ℓm(x) - Σ_{j=0}^{n} γ_j Y_ℓm(x_j)|²``.

    ``x_0 = N`` and ``γ_0 = 1 - Σ_{j>=1} γ_j``. Evaluated from explicit
    harmonics, independently of the Legendre-kernel covariance.
    """
    gamma = np.asarray(weights, dtype=float).ravel()
    if gamma.size != c.n:
        raise UsageError(f"need {c.n} weights, got {gamma.size}")
    if L > spectrum.L:
        raise UsageError(f"L={L} exceeds spectrum degree {spectrum.L}")
    y = ylm_table(L, [c.target, NORTH_POLE, *c.points])  # (l, m>=0, k)
    coeff = np.concatenate([[1.0, -(1.0 - gamma.sum())], -gamma])
    comb = y @ coeff  # (l, m)
    mult = np.full(L + 1, 2.0)
    mult[0] = 1.0
    per_degree = (np.abs(comb) ** 2) @ mult
    return float(math.pi * spectrum.magnitudes[: L + 1] @ per_degree)


def slnd_ratio(c: Configuration, H: float) -> SLNDReport:
    """Conditional variance over ``ε^{2H}``; ``degenerate`` when ε = 0."""
    return conditional_variance_exact(c, H)


# --------------------------------------------------------------------------
# K2 experiment
# --------------------------------------------------------------------------

FAMILIES = ("uniform", "cluster", "great_circle", "near_pole")


def _uniform_point(rng):
    return from_angles(math.acos(rng.uniform(-1.0, 1.0)), rng.uniform(0.0, 2.0 * math.pi))


def random_configuration(rng: np.random.Generator, n_max: int, eps_range) -> tuple[Configuration, str]:
    """Draw one configuration whose ε lies in ``eps_range``.

    The nearest point (N included) sits at a log-uniform scale ``s`` drawn
    from ``eps_range``; all other points are at distance >= s. Families:

    * ``uniform``: remaining points uniform on the sphere;
    * ``cluster``: shells at dyadic distances ``s·2^k`` around the target;
    * ``great_circle``: near-collinear points along one great circle;
    * ``near_pole``: target within ``2s`` of N, clustered points around it.
    """
    lo, hi = eps_range
    n = int(rng.integers(0, n_max + 1))
    family = FAMILIES[int(rng.integers(0, len(FAMILIES)))]
    s = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    if n == 0:
        # only the pole constrains ε
        return Configuration(from_angles(s, rng.uniform(0.0, 2.0 * math.pi))), family

    if family == "near_pole":
        target = from_angles(min(math.pi, s * (1.0 + rng.uniform())), rng.uniform(0.0, 2.0 * math.pi))
    else:
        target = _uniform_point(rng)
        while geodesic_distance(target, NORTH_POLE) < s:
            target = _uniform_point(rng)

    pts = [offset_point(target, s, rng.uniform(0.0, 2.0 * math.pi))]
    if family == "uniform":
        while len(pts) < n:
            p = _uniform_point(rng)
            if geodesic_distance(target, p) >= s:
                pts.append(p)
    elif family in ("cluster", "near_pole"):
        for k in range(1, n):
            dist = min(s * 2.0 ** (k * rng.uniform(0.5, 1.0)), 0.99 * math.pi)
            pts.append(offset_point(target, dist, rng.uniform(0.0, 2.0 * math.pi)))
    else:  # great_circle
        bearing = rng.uniform(0.0, 2.0 * math.pi)
        for k in range(1, n):
            side = math.pi if k % 2 else 0.0
            dist = min(s * (1.0 + k * rng.uniform(0.5, 1.5)), 0.99 * math.pi)
            wobble = 0.01 * rng.standard_normal()
            pts.append(offset_point(target, dist, bearing + side + wobble))
    return Configuration(target, tuple(pts)), family


@dataclass(frozen=True, eq=False)
class K2Estimate:
    """Empirical lower envelope of the SLND ratio."""

    H: float
    trials: int
    n_max: int
    eps_range: tuple
    seed: int
    min_ratio: float
    quantiles: dict
    worst_config: Configuration
    records: list = field(repr=False)

    @property
    def all_positive(self) -> bool:
        return all(r["ratio"] > 0 for r in self.records)

    def as_dict(self) -> dict:
        return {
            "H": self.H,
            "trials": self.trials,
            "n_max": self.n_max,
            "eps_range": list(self.eps_range),
            "min_ratio": self.min_ratio,
            "quantiles": self.quantiles,
            "worst_config": self.worst_config.as_dict(),
            "seed": self.seed,
        }


def _trial(H, n_max, eps_range, stream, index):
    rng = stream.child(index).generator()
    config, family = random_configuration(rng, n_max, eps_range)
    rep = slnd_ratio(config, H)
    return config, {
        "trial": index,
        "family": family,
        "n": config.n,
        "epsilon": rep.epsilon,
        "cv": rep.conditional_variance,
        "ratio": rep.ratio,
    }


def estimate_K2(
    H: float,
    trials: int,
    n_max: int,
    eps_range=(0.01, 1.0),
    stream: RandomStream | None = None,
    n_jobs: int = 1,
) -> K2Estimate:
    """Sample configurations and record the smallest SLND ratio.

    Trial ``i`` draws from ``stream.child(i)``, so the first ``k`` trials of
    a longer run coincide with a shorter run on the same stream.
    """
    H = check_hurst(H)
    if int(trials) < 1:
        raise UsageError("trials must be >= 1")
    if int(n_max) < 0:
        raise UsageError("n_max must be >= 0")
    lo, hi = map(float, eps_range)
    if not 0.0 < lo <= hi:
        raise UsageError(f"eps_range must satisfy 0 < min <= max, got {eps_range}")
    stream = stream or RandomStream(0)
    run = lambda i: _trial(H, int(n_max), (lo, hi), stream, i)  # noqa: E731
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, range(int(trials))))
    else:
        results = [run(i) for i in range(int(trials))]
    ratios = np.array([rec["ratio"] for _, rec in results])
    worst = int(np.argmin(ratios))
    quantiles = {f"p{q}": float(np.quantile(ratios, q / 100.0)) for q in (1, 5, 50)}
    return K2Estimate(
        H=H,
        trials=int(trials),
        n_max=int(n_max),
        eps_range=(lo, hi),
        seed=stream.seed,
        min_ratio=float(ratios[worst]),
        quantiles=quantiles,
        worst_config=results[worst][0],
        records=[rec for _, rec in results],
    )


# --------------------------------------------------------------------------
# harmonic lower bound
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HarmonicBoundReport:
    """Minimum of ``Σ_ℓ |d_ℓ| Σ_m |Y_ℓm(x) - Σ_j γ_j Y_ℓm(x_j)|²`` over γ.

    ``epsilon`` excludes the pole; ``epsilon_with_pole`` includes it.
    ``C2_estimate`` is ``lhs_min / epsilon^{2H}`` rounded down so that
    ``C2_estimate * epsilon^{2H} <= lhs_min`` holds in floating point.
    """

    lhs_min: float
    epsilon: float
    epsilon_with_pole: float
    eps_2H: float
    C2_estimate: float
    C2_with_pole: float
    weights: np.ndarray
    degenerate: bool


def lemma_bound_check(c: Configuration, spectrum: PowerSpectrum, L: int) -> HarmonicBoundReport:
    if c.n == 0:
        raise UsageError("the harmonic bound needs n >= 1 (its ε is a minimum over x_1..x_n)")
    if L > spectrum.L:
        raise UsageError(f"L={L} exceeds spectrum degree {spectrum.L}")
    H = spectrum.H
    vec = as_vectors([c.target, *c.points])
    ell = np.arange(L + 1)
    w = (2.0 * ell + 1.0) / (4.0 * math.pi) * spectrum.magnitudes[: L + 1]
    gram = np.tensordot(w, legendre_p_all(L, np.clip(vec @ vec.T, -1.0, 1.0)), axes=(0, 0))
    gram = 0.5 * (gram + gram.T)
    res = regression_residual(gram[1:, 1:], gram[0, 1:], gram[0, 0])
    eps = c.epsilon_without_pole
    eps_pole = c.epsilon
    e2h = eps ** (2.0 * H)
    if eps == 0.0:
        return HarmonicBoundReport(res.residual, eps, eps_pole, e2h, math.nan, math.nan, res.weights, True)
    c2 = res.residual / e2h
    while c2 * e2h > res.residual:
        c2 = math.nextafter(c2, 0.0)
    c2_pole = res.residual / eps_pole ** (2.0 * H) if eps_pole > 0 else math.nan
    return HarmonicBoundReport(res.residual, eps, eps_pole, e2h, c2, c2_pole, res.weights, False)
