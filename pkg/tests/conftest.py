"""Shared fixtures and generators for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from splc.geometry import ConvexPoly2, Line2


@pytest.fixture
def unit_square() -> ConvexPoly2:
    """The square [-1, 1]^2, CCW."""
    return ConvexPoly2([(-1, -1), (1, -1), (1, 1), (-1, 1)])


def random_convex_polygon(rng: np.random.Generator, n_points: int = 20, scale: float = 1.0) -> ConvexPoly2:
    """Convex hull of random points in a disk, as a CCW polygon."""
    while True:
        pts = rng.normal(size=(n_points, 2)) * scale
        hull = ConvexHull(pts)
        if len(hull.vertices) >= 3:
            return ConvexPoly2(pts[hull.vertices])


def random_line(rng: np.random.Generator, through_box: float = 0.6) -> Line2:
    """Random line passing through a point inside the centered box of the
    given half-extent, at a random angle."""
    angle = rng.uniform(0.0, np.pi)
    w = np.array([np.sin(angle), -np.cos(angle)])
    point = rng.uniform(-through_box, through_box, size=2)
    line = Line2.from_coefficients(w, -float(w @ point))
    assert line is not None
    return line


def general_position_lines(seed: int, n: int, box: float = 0.85) -> list:
    """n random lines whose pairwise intersections all fall strictly inside
    the centered square of half-extent ``box``, pairwise well separated.

    Retries seeds deterministically until the configuration is generic, so
    callers get reproducible general-position inputs.
    """
    attempt = 0
    while True:
        rng = np.random.default_rng(seed * 1000 + attempt)
        lines = [random_line(rng) for _ in range(n)]
        pts = []
        ok = True
        for i in range(n):
            for j in range(i + 1, n):
                wi, bi = lines[i].w, lines[i].b
                wj, bj = lines[j].w, lines[j].b
                det = wi[0] * wj[1] - wi[1] * wj[0]
                if abs(det) < 1e-3:
                    ok = False
                    break
                x = (-bi * wj[1] + bj * wi[1]) / det
                y = (-wi[0] * bj + wj[0] * bi) / det
                if abs(x) > box or abs(y) > box:
                    ok = False
                    break
                pts.append((x, y))
            if not ok:
                break
        if ok and len(pts) >= 2:
            arr = np.asarray(pts)
            d = arr[:, None, :] - arr[None, :, :]
            dist = np.sqrt((d ** 2).sum(-1))
            np.fill_diagonal(dist, np.inf)
            if dist.min() < 0.02:
                ok = False
        if ok:
            return lines
        attempt += 1
