"""Points on the unit sphere, geodesic distance and point-set generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, UsageError
from .numerics import RandomStream

__all__ = [
    "SpherePoint",
    "NORTH_POLE",
    "SOUTH_POLE",
    "from_angles",
    "from_vector",
    "geodesic_distance",
    "distance_matrix",
    "as_vectors",
    "sample_uniform",
    "fibonacci_grid",
    "read_points_csv",
    "write_points_csv",
    "TEST_ROTATION",
    "offset_point",
]

TWO_PI = 2.0 * math.pi
_POLE_TOL = 1e-15


@dataclass(frozen=True, eq=False)
class SpherePoint:
    """A point of S² held in both angular and Cartesian form.

    Build instances with :func:`from_angles` or :func:`from_vector`; they
    keep the two representations consistent and put the longitude of the
    poles at 0.
    """

    theta: float
    phi: float
    unit_vector: tuple

    def __eq__(self, other):
        if not isinstance(other, SpherePoint):
            return NotImplemented
        return self.theta == other.theta and self.phi == other.phi

    def __hash__(self):
        return hash((self.theta, self.phi))

    def __repr__(self):
        return f"SpherePoint(theta={self.theta!r}, phi={self.phi!r})"

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.unit_vector)

    @property
    def is_pole(self) -> bool:
        return self.theta == 0.0 or self.theta == math.pi

    def antipode(self) -> "SpherePoint":
        return from_angles(math.pi - self.theta, self.phi + math.pi)


def from_angles(theta: float, phi: float) -> SpherePoint:
    """Point with colatitude ``theta`` in [0, π] and longitude ``phi`` (mod 2π)."""
    theta = float(theta)
    phi = float(phi)
    if not (0.0 <= theta <= math.pi) or not math.isfinite(phi):
        raise DomainError(f"colatitude must lie in [0, pi], got {theta!r}")
    phi = phi % TWO_PI
    if phi == TWO_PI:  # -tiny % 2pi rounds up to 2pi
        phi = 0.0
    if theta == 0.0 or theta == math.pi:
        phi = 0.0
    st = math.sin(theta)
    vec = (st * math.cos(phi), st * math.sin(phi), math.cos(theta))
    return SpherePoint(theta, phi, vec)


def from_vector(v) -> SpherePoint:
    """Point along the direction of a nonzero 3-vector."""
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if v.shape != (3,) or not norm > 0:
        raise DomainError("from_vector needs a nonzero 3-vector")
    x, y, z = v / norm
    theta = math.atan2(math.hypot(x, y), z)
    phi = math.atan2(y, x) if math.hypot(x, y) > _POLE_TOL else 0.0
    return from_angles(theta, phi)


NORTH_POLE = from_angles(0.0, 0.0)
SOUTH_POLE = from_angles(math.pi, 0.0)


def geodesic_distance(x: SpherePoint, y: SpherePoint) -> float:
    """Great-circle distance ``arccos⟨x, y⟩`` in [0, π].

    Evaluated as ``2·atan2(|x - y|, |x + y|)``, which equals the arccos form
    but keeps full relative accuracy for nearly coincident or antipodal
    points (arccos of a rounded inner product returns ~1e-8 for x = y).
    """
    a, b = x.unit_vector, y.unit_vector
    diff = math.hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2])
    summ = math.hypot(a[0] + b[0], a[1] + b[1], a[2] + b[2])
    return 2.0 * math.atan2(diff, summ)


def as_vectors(points: Iterable[SpherePoint]) -> np.ndarray:
    """Stack unit vectors into an ``(n, 3)`` array."""
    vecs = [p.unit_vector for p in points]
    return np.array(vecs, dtype=float).reshape(len(vecs), 3)


def distance_matrix(xs: Sequence[SpherePoint], ys: Sequence[SpherePoint] | None = None) -> np.ndarray:
    """Pairwise geodesic distances between two point lists."""
    a = as_vectors(xs)
    b = a if ys is None else as_vectors(ys)
    diff = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    summ = np.linalg.norm(a[:, None, :] + b[None, :, :], axis=-1)
    return 2.0 * np.arctan2(diff, summ)


def sample_uniform(stream: RandomStream, n: int) -> list[SpherePoint]:
    """``n`` i.i.d. uniform points: z uniform on [-1, 1], longitude uniform."""
    rng = stream.generator()
    z = rng.uniform(-1.0, 1.0, int(n))
    phi = rng.uniform(0.0, TWO_PI, int(n))
    return [from_angles(math.acos(zi), pi) for zi, pi in zip(z, phi)]


_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def fibonacci_grid(n: int) -> list[SpherePoint]:
    """Deterministic quasi-uniform spiral of ``n`` points."""
    n = int(n)
    if n < 1:
        raise UsageError("fibonacci_grid needs n >= 1")
    if n == 1:
        return [NORTH_POLE]
    pts = []
    for k in range(n):
        z = 1.0 - (2.0 * k + 1.0) / n
        pts.append(from_angles(math.acos(z), k * _GOLDEN_ANGLE))
    return pts


def read_points_csv(path) -> list[SpherePoint]:
    """Read a ``theta,phi`` CSV (radians, one point per row)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["theta", "phi"]:
            raise UsageError(f"{path}: expected header 'theta,phi'")
        try:
            return [from_angles(float(row["theta"]), float(row["phi"])) for row in reader]
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{path}: malformed point row ({exc})") from exc


def write_points_csv(path, points: Iterable[SpherePoint]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "phi"])
        for p in points:
            w.writerow([f"{p.theta:.17g}", f"{p.phi:.17g}"])


def _rotation(axis, angle):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


# fixed rotation used by the distance-invariance property test
TEST_ROTATION = _rotation([1.0, 2.0, 3.0], 0.7)


def offset_point(x: SpherePoint, distance: float, bearing: float) -> SpherePoint:
    """Point at geodesic ``distance`` from ``x`` in direction ``bearing``.

    The bearing is measured in the tangent plane at ``x`` from an arbitrary
    but fixed reference direction.
    """
    v = x.vector
    ref = np.array([0.0, 0.0, 1.0]) if abs(v[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = ref - (ref @ v) * v
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    d = float(distance)
    u = math.cos(d) * v + math.sin(d) * (math.cos(bearing) * e1 + math.sin(bearing) * e2)
    return from_vector(u)
