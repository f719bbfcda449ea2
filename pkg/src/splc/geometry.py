"""Exact 2D primitives: oriented lines and convex polygons.

Everything downstream works in the 2D slice coordinate system, so this
module is deliberately small and double-precision-exact where possible:

* ``Line2`` is an oriented line ``{u : w . u + b = 0}`` stored with a unit
  normal, so signed evaluations are Euclidean distances and tolerances
  compose across modules.
* ``ConvexPoly2`` is a counter-clockwise convex polygon. Area is the
  shoelace sum; the centroid is the arithmetic mean of the vertices, which
  is guaranteed interior for convex polygons and cheap to compute.
* ``clip_line`` intersects a line with a convex polygon and returns the
  chord, snapping near-vertex crossings onto the vertex and treating
  grazing contacts (chord shorter than the incidence tolerance) as misses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .errors import GeometryError

__all__ = [
    "Line2",
    "ConvexPoly2",
    "PolygonMetrics",
    "clip_line",
    "polygon_metrics",
]


@dataclass(frozen=True, eq=False)
class Line2:
    """Oriented line ``w . u + b = 0`` with ``|w| = 1``.

    ``provenance`` records where the line came from, as tuples of
    ``(layer, unit, breakpoint)``; merged duplicates concatenate theirs.
    """

    w: np.ndarray
    b: float
    provenance: tuple = ()

    @staticmethod
    def from_coefficients(
        w, b: float, provenance: tuple = (), eps_line: float = DEFAULT_TOL.eps_line
    ) -> "Line2 | None":
        """Normalize ``(w, b)`` to a unit normal. Returns None when the
        gradient is numerically zero (a constant unit, not a line)."""
        w = np.asarray(w, dtype=np.float64)
        norm = math.hypot(w[0], w[1])
        if norm <= eps_line:
            return None
        return Line2(w / norm, float(b) / norm, provenance)

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Signed distance of one point (2,) or a batch (n, 2)."""
        return np.asarray(points, dtype=np.float64) @ self.w + self.b

    @property
    def direction(self) -> np.ndarray:
        """Unit tangent, the normal rotated +90 degrees."""
        return np.array([-self.w[1], self.w[0]])


@dataclass(frozen=True)
class PolygonMetrics:
    area: float
    centroid: np.ndarray
    degenerate: bool


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class ConvexPoly2:
    """Convex polygon with counter-clockwise vertices.

    The constructor reorients clockwise input, rejects polygons with a
    reflex corner beyond tolerance, and drops consecutive duplicate
    vertices. Collinear vertices are allowed: faces of an arrangement
    legitimately contain nodes that subdivide a straight boundary edge.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices, tol: Tolerances = DEFAULT_TOL):
        v = np.asarray(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise GeometryError(f"polygon needs >= 3 vertices of dim 2, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon has non-finite vertices")
        # drop consecutive (cyclic) duplicates within tolerance
        keep = np.max(np.abs(v - np.roll(v, -1, axis=0)), axis=1) > tol.eps_geom
        if np.count_nonzero(keep) < 3:
            raise GeometryError("polygon degenerates to fewer than 3 distinct vertices")
        v = v[keep]
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        # convexity: every corner turn must be non-reflex up to slack
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        scale = float(np.max(np.abs(e))) or 1.0
        if np.any(cross < -tol.eps_geom * scale):
            raise GeometryError("polygon is not convex within tolerance")
        self.vertices = v

    def __len__(self) -> int:
        return len(self.vertices)

    def __repr__(self) -> str:
        return f"ConvexPoly2({len(self.vertices)} vertices, area={self.area:.6g})"

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def contains(self, point, tol: float = DEFAULT_TOL.eps_geom) -> bool:
        """True when ``point`` lies inside or within ``tol`` of the boundary."""
        p = np.asarray(point, dtype=np.float64)
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        r = p - v
        cross = e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0]
        return bool(np.all(cross >= -tol * (np.linalg.norm(e, axis=1) + 1.0)))


def polygon_metrics(poly: ConvexPoly2, tol: Tolerances = DEFAULT_TOL) -> PolygonMetrics:
    """Positive shoelace area and vertex-mean centroid; flags slivers."""
    area = poly.area
    return PolygonMetrics(area=area, centroid=poly.centroid, degenerate=area <= tol.eps_area)


def clip_line(
    line: Line2, poly: ConvexPoly2, tol: Tolerances = DEFAULT_TOL
) -> tuple[np.ndarray, np.ndarray] | None:
    """Chord of ``line`` through ``poly``, or None when the line misses.

    A line that only touches the polygon (chord length within eps_geom,
    including passes through a single vertex) counts as a miss. Crossings
    within eps_geom of a vertex are snapped onto the vertex.
    """
    chord = _clip_line_ex(line, poly, tol)
    if chord is None:
        return None
    return chord.p0, chord.p1


@dataclass(frozen=True)
class ClippedChord:
    """Internal clip result: endpoints ordered by the line parameter,
    with the polygon edge index each endpoint lies on."""

    p0: np.ndarray
    p1: np.ndarray
    t0: float
    t1: float
    edge0: int
    edge1: int


def _clip_line_ex(
    line: Line2, poly: ConvexPoly2, tol: Tolerances = DEFAULT_TOL
) -> ClippedChord | None:
    v = poly.vertices
    n = len(v)
    d = line.eval(v)
    d = np.where(np.abs(d) <= tol.eps_geom, 0.0, d)
    if not (np.any(d > 0) and np.any(d < 0)):
        # entirely on one side, or at most grazing the boundary
        return None

    crossings = []  # (point, edge index)
    for i in range(n):
        j = (i + 1) % n
        di, dj = d[i], d[j]
        if di == 0.0:
            crossings.append((v[i], i))
        elif di * dj < 0.0:
            s = di / (di - dj)
            crossings.append((v[i] + s * (v[j] - v[i]), i))

    if len(crossings) < 2:
        return None
    direction = line.direction
    ts = [float(p @ direction) for p, _ in crossings]
    order = sorted(range(len(ts)), key=ts.__getitem__)
    lo, hi = order[0], order[-1]
    if ts[hi] - ts[lo] <= tol.eps_geom:
        return None
    return ClippedChord(
        p0=np.asarray(crossings[lo][0], dtype=np.float64),
        p1=np.asarray(crossings[hi][0], dtype=np.float64),
        t0=ts[lo],
        t1=ts[hi],
        edge0=crossings[lo][1],
        edge1=crossings[hi][1],
    )
