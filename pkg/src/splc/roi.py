"""Region of interest: a 2D affine slice of the input space.

The slice is parametrized as x(u) = T u + c with an orthonormal frame T
(S x 2), so distances and angles in slice coordinates match the ambient
input space. The working domain is a convex polygon in u, by default the
centered square [-h, h]^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RoiError
from .geometry import ConvexPoly2

__all__ = ["Roi", "make_roi"]

# minimum angle between spanning directions before they count as collinear
MIN_ANGLE_RAD = 1e-8


@dataclass(frozen=True, eq=False)
class Roi:
    T: np.ndarray
    c: np.ndarray
    domain: ConvexPoly2

    def __post_init__(self):
        T, c = self.T, self.c
        if T.ndim != 2 or T.shape[1] != 2 or c.shape != (T.shape[0],):
            raise RoiError(f"frame shape {T.shape} and offset shape {c.shape} are inconsistent")
        gram = T.T @ T
        if np.max(np.abs(gram - np.eye(2))) > 1e-12:
            raise RoiError("frame columns are not orthonormal within 1e-12")

    @property
    def input_dim(self) -> int:
        return self.T.shape[0]

    def lift(self, u) -> np.ndarray:
        """Map slice coordinates to input space, x = T u + c."""
        u = np.asarray(u, dtype=np.float64)
        if u.ndim == 1:
            return self.T @ u + self.c
        return u @ self.T.T + self.c


def _square_domain(half_extent: float) -> ConvexPoly2:
    h = float(half_extent)
    if not (np.isfinite(h) and h > 0):
        raise RoiError(f"half extent must be positive and finite, got {h}")
    return ConvexPoly2([(-h, -h), (h, -h), (h, h), (-h, h)])


def _orthonormalize(d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    n1 = np.linalg.norm(d1)
    n2 = np.linalg.norm(d2)
    if n1 == 0 or n2 == 0:
        raise RoiError("spanning directions must be nonzero")
    u1 = d1 / n1
    r = d2 - (u1 @ d2) * u1
    rn = np.linalg.norm(r)
    # sin of the angle between the directions
    if rn / n2 < MIN_ANGLE_RAD:
        raise RoiError("spanning directions are collinear within 1e-8 rad")
    return np.stack([u1, r / rn], axis=1)


def make_roi(
    anchors=None,
    center=None,
    directions=None,
    half_extent: float = 1.0,
    domain: ConvexPoly2 | None = None,
) -> Roi:
    """Build an ROI from three anchor points, or a center plus two
    direction vectors. Frame via Gram-Schmidt on the spanning directions;
    the domain defaults to the square [-h, h]^2 in slice coordinates."""
    if anchors is not None:
        if center is not None or directions is not None:
            raise RoiError("give either anchors or center+directions, not both")
        pts = [np.asarray(p, dtype=np.float64) for p in anchors]
        if len(pts) != 3:
            raise RoiError(f"anchor mode needs exactly 3 points, got {len(pts)}")
        c = pts[0]
        T = _orthonormalize(pts[1] - pts[0], pts[2] - pts[0])
    elif center is not None and directions is not None:
        c = np.asarray(center, dtype=np.float64)
        d = [np.asarray(v, dtype=np.float64) for v in directions]
        if len(d) != 2:
            raise RoiError(f"direction mode needs exactly 2 vectors, got {len(d)}")
        T = _orthonormalize(d[0], d[1])
    else:
        raise RoiError("ROI needs anchors, or center and directions")
    return Roi(T=T, c=c, domain=domain if domain is not None else _square_domain(half_extent))
