"""Per-region and aggregate partition statistics.

Two eccentricity measures are computed side by side because both appear
in practice: ecc_vertex is the ratio of the maximum to minimum pairwise
vertex distance, ecc_edge the ratio of the longest to shortest edge.
Both are scale-free and >= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .errors import GeometryError
from .geometry import ConvexPoly2

__all__ = ["RegionStats", "PartitionStats", "region_stats", "aggregate_stats"]

HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class RegionStats:
    area: float
    n_vertices: int
    ecc_vertex: float
    ecc_edge: float


@dataclass(frozen=True)
class PartitionStats:
    region_count: int
    avg_region_volume: float
    avg_n_vertices: float
    ecc_vertex_mean: float
    ecc_vertex_median: float
    ecc_vertex_max: float
    ecc_edge_mean: float
    ecc_edge_median: float
    ecc_edge_max: float
    area_histogram_edges: np.ndarray
    area_histogram_counts: np.ndarray
    degenerate_count: int
    dropped_area: float


def region_stats(region, tol: Tolerances = DEFAULT_TOL) -> RegionStats:
    """Area, vertex count, and both eccentricities of one region."""
    poly = region if isinstance(region, ConvexPoly2) else region.poly
    area = poly.area
    if area <= tol.eps_area:
        raise GeometryError(f"degenerate region (area {area!r}) has no stats")
    v = poly.vertices
    diff = v[:, None, :] - v[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    off_diag = dist[~np.eye(len(v), dtype=bool)]
    ecc_vertex = float(off_diag.max() / off_diag.min())
    edge_len = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    ecc_edge = float(edge_len.max() / edge_len.min())
    return RegionStats(
        area=area, n_vertices=len(v), ecc_vertex=ecc_vertex, ecc_edge=ecc_edge
    )


def aggregate_stats(partition, tol: Tolerances = DEFAULT_TOL) -> PartitionStats:
    """Aggregates over all non-degenerate regions of a partition.

    Degenerate regions are excluded from every average but counted; the
    area histogram uses log-spaced bins.
    """
    per_region = []
    degenerate = 0
    for region in partition.regions:
        if region.poly.area <= tol.eps_area:
            degenerate += 1
            continue
        per_region.append(region_stats(region, tol))
    if not per_region:
        raise GeometryError("partition has no non-degenerate regions")

    areas = np.array([r.area for r in per_region])
    ecc_v = np.array([r.ecc_vertex for r in per_region])
    ecc_e = np.array([r.ecc_edge for r in per_region])
    lo, hi = areas.min(), areas.max()
    if hi <= lo:
        hi = lo * (1 + 1e-9)
    edges = np.geomspace(lo, hi, HISTOGRAM_BINS + 1)
    counts, _ = np.histogram(areas, bins=edges)

    return PartitionStats(
        region_count=len(per_region),
        avg_region_volume=float(areas.mean()),
        avg_n_vertices=float(np.mean([r.n_vertices for r in per_region])),
        ecc_vertex_mean=float(ecc_v.mean()),
        ecc_vertex_median=float(np.median(ecc_v)),
        ecc_vertex_max=float(ecc_v.max()),
        ecc_edge_mean=float(ecc_e.mean()),
        ecc_edge_median=float(np.median(ecc_e)),
        ecc_edge_max=float(ecc_e.max()),
        area_histogram_edges=edges,
        area_histogram_counts=counts,
        degenerate_count=degenerate,
        dropped_area=partition.report.dropped_area,
    )
