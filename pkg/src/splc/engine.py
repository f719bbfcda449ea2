"""Layer-by-layer partition of an ROI into linear regions.

The engine walks the network one layer at a time. Every region carries
the affine map of the deepest processed layer restricted to the slice,
z(u) = A_hat u + b_hat, seeded at the root with the identity on slice
coordinates (the lift x = T u + c is folded into the first layer's
projection, so per-region matrices are always layer_width x 2 and the
ambient input dimension never appears in per-region state).

Per region and layer:

1. back-project the layer's unit hyperplanes through the region's affine
   map: unit i with breakpoint t becomes the line
   (W A_hat)_i . u + (W b_hat + b)_i - t = 0 in slice coordinates;
   constant units (zero gradient row) and lines missing the region
   polygon are dropped and counted;
2. subdivide the region polygon by the surviving lines (arrangement +
   face enumeration);
3. for each face, read the layer's activation segments at the face
   centroid from the same pre-activation affine, and advance the affine
   map with the selected (slope, offset).

Results from parallel workers are merged in canonical (parent id, then
child centroid) order, so output is identical for any worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .arrangement import build_arrangement, find_cycles
from .config import DEFAULT_TOL, MAX_DROPPED_AREA_FRACTION, Tolerances
from .errors import ModelError, PartitionError
from .geometry import ConvexPoly2, Line2, clip_line
from .network import ActivationState, CpwlNetwork, SliceAffine, _advance_from_preact
from .roi import Roi

logger = logging.getLogger(__name__)

__all__ = [
    "Region",
    "Partition",
    "BoundarySegment",
    "project_hyperplanes",
    "subdivide",
    "compute_partition",
    "decision_boundary",
    "sample_boundary",
    "adjacent_region_pairs",
]


@dataclass
class Region:
    """One linear region: polygon, activation state through the deepest
    processed layer, and that layer's slice-restricted affine map."""

    id: int
    parent: int
    poly: ConvexPoly2
    state: ActivationState
    affine: SliceAffine


@dataclass(frozen=True)
class BoundarySegment:
    region_id: int
    p0: np.ndarray
    p1: np.ndarray


@dataclass
class PartitionReport:
    """Bookkeeping accumulated over a partition run."""

    dropped_area: float = 0.0
    dropped_faces: int = 0
    duplicate_lines: int = 0
    constant_units: int = 0
    layer_line_counts: list = field(default_factory=list)


@dataclass
class Partition:
    regions: list
    boundary: list
    layer_counts: list
    roi: Roi
    report: PartitionReport
    # segment count of each processed layer's activation, so downstream
    # serializers can format activation codes without the network
    layer_segment_counts: list = field(default_factory=list)


def _preact_affine(net: CpwlNetwork, layer_idx: int, affine: SliceAffine, roi: Roi):
    """Pre-activation affine (G, g) of a layer over a region.

    Layer 0 folds in the slice lift: G = W T, g = W c + b. The root
    region's affine is the identity on u, so it never materializes an
    input-dimension-sized matrix per region.
    """
    mat, bias = net.lowered[layer_idx]
    if layer_idx == 0:
        A_in = roi.T @ affine.A
        b_in = roi.T @ affine.b + roi.c
    else:
        A_in, b_in = affine.A, affine.b
    G = mat @ A_in
    g = mat @ b_in + bias
    return G, g


def _lines_from_preact(
    G: np.ndarray, g: np.ndarray, layer_idx: int, descriptor, poly: ConvexPoly2, tol: Tolerances
) -> tuple[list, int]:
    """Back-projected breakpoint lines that actually cross the polygon.

    Returns (lines, constant_unit_count). Lines are emitted in (unit,
    breakpoint) order, which keeps downstream node ids deterministic.
    """
    breakpoints = descriptor.breakpoints
    if len(breakpoints) == 0:
        return [], 0
    norms = np.hypot(G[:, 0], G[:, 1])
    constant = int(np.sum(norms <= tol.eps_line))
    lines = []
    for i in np.nonzero(norms > tol.eps_line)[0]:
        for k, t in enumerate(breakpoints):
            line = Line2.from_coefficients(
                G[i], g[i] - t, provenance=((layer_idx, int(i), k),), eps_line=tol.eps_line
            )
            if line is not None and clip_line(line, poly, tol) is not None:
                lines.append(line)
    return lines, constant


def project_hyperplanes(
    net: CpwlNetwork, layer_idx: int, region: Region, roi: Roi, tol: Tolerances = DEFAULT_TOL
) -> list:
    """Layer hyperplanes back-projected into slice coordinates, restricted
    to the ones crossing the region polygon."""
    G, g = _preact_affine(net, layer_idx, region.affine, roi)
    lines, _ = _lines_from_preact(
        G, g, layer_idx, net.layers[layer_idx].activation, region.poly, tol
    )
    return lines


@dataclass
class SubdivideStats:
    dropped_area: float = 0.0
    dropped_faces: int = 0
    duplicate_lines: int = 0
    constant_units: int = 0
    n_lines: int = 0


def _make_children(
    region: Region,
    net: CpwlNetwork,
    layer_idx: int,
    G: np.ndarray,
    g: np.ndarray,
    lines: list,
    tol: Tolerances,
) -> tuple[list, SubdivideStats]:
    """Subdivide one region by the given lines and advance each child."""
    layer = net.layers[layer_idx]
    stats = SubdivideStats(n_lines=len(lines))
    children = []

    if lines:
        graph = build_arrangement(region.poly, lines, tol)
        stats.duplicate_lines = graph.duplicate_count
        faces = find_cycles(graph, tol)
        polys = []
        for face in faces:
            if face.poly is None:
                stats.dropped_area += face.area
                stats.dropped_faces += 1
            else:
                polys.append(face.poly)
    else:
        polys = [region.poly]

    for poly in polys:
        pre = G @ poly.centroid + g
        segments = layer.activation.segment_of(pre).astype(np.int16)
        affine = _advance_from_preact(layer, G, g, segments)
        children.append(
            Region(
                id=-1,
                parent=region.id,
                poly=poly,
                state=ActivationState(segments=region.state.segments + (segments,)),
                affine=affine,
            )
        )
    children.sort(key=lambda r: (r.poly.centroid[0], r.poly.centroid[1]))
    return children, stats


def subdivide(
    region: Region,
    lines: list,
    net: CpwlNetwork,
    layer_idx: int,
    roi: Roi,
    tol: Tolerances = DEFAULT_TOL,
) -> tuple[list, SubdivideStats]:
    """Split a region by the given lines and advance affine and state
    through the layer. Children come back in canonical centroid order
    with ids unassigned (the partition driver numbers them)."""
    G, g = _preact_affine(net, layer_idx, region.affine, roi)
    return _make_children(region, net, layer_idx, G, g, lines, tol)


def compute_partition(
    net: CpwlNetwork,
    roi: Roi,
    up_to_layer: int | None = None,
    threads: int = 1,
    tol: Tolerances = DEFAULT_TOL,
) -> Partition:
    """Partition the ROI into the network's linear regions, layer by layer."""
    n_layers = len(net) if up_to_layer is None else int(up_to_layer)
    if not 1 <= n_layers <= len(net):
        raise ModelError(f"up_to_layer must be in 1..{len(net)}, got {n_layers}")
    if threads < 1:
        raise ModelError(f"thread count must be >= 1, got {threads}")

    root = Region(
        id=0,
        parent=-1,
        poly=roi.domain,
        state=ActivationState(segments=()),
        affine=SliceAffine(A=np.eye(2), b=np.zeros(2)),
    )
    roi_area = roi.domain.area
    report = PartitionReport()
    current = [root]
    layer_counts = []
    seg_counts = [net.layers[i].activation.n_segments for i in range(n_layers)]

    def process(region: Region, layer_idx: int):
        G, g = _preact_affine(net, layer_idx, region.affine, roi)
        layer = net.layers[layer_idx]
        lines, constant = _lines_from_preact(G, g, layer_idx, layer.activation, region.poly, tol)
        children, stats = _make_children(region, net, layer_idx, G, g, lines, tol)
        stats.constant_units = constant
        return children, stats

    for layer_idx in range(n_layers):
        try:
            if threads == 1:
                results = [process(r, layer_idx) for r in current]
            else:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    results = list(pool.map(lambda r: process(r, layer_idx), current))
        except Exception as exc:
            partial = Partition(
                regions=current, boundary=[], layer_counts=layer_counts, roi=roi, report=report, layer_segment_counts=seg_counts
            )
            raise PartitionError(
                f"subdivision failed at layer {layer_idx}: {exc}", partial=partial
            ) from exc

        next_regions = []
        line_total = 0
        for children, stats in results:
            report.dropped_area += stats.dropped_area
            report.dropped_faces += stats.dropped_faces
            report.duplicate_lines += stats.duplicate_lines
            report.constant_units += stats.constant_units
            line_total += stats.n_lines
            for child in children:
                child.id = len(next_regions)
                next_regions.append(child)
        report.layer_line_counts.append(line_total)
        current = next_regions
        layer_counts.append(len(current))
        logger.info("layer %d: %d regions (%d lines)", layer_idx + 1, len(current), line_total)

        partial = Partition(
            regions=current, boundary=[], layer_counts=layer_counts, roi=roi, report=report, layer_segment_counts=seg_counts
        )
        if report.dropped_area > MAX_DROPPED_AREA_FRACTION * roi_area:
            raise PartitionError(
                f"dropped sliver area {report.dropped_area:.3e} exceeds "
                f"{MAX_DROPPED_AREA_FRACTION:.0e} of ROI area {roi_area:.6g}",
                partial=partial,
            )
        total = sum(r.poly.area for r in current)
        if abs(total + report.dropped_area - roi_area) > 1e-9 * roi_area:
            raise PartitionError(
                f"tiling violated at layer {layer_idx + 1}: region areas sum to {total!r}, "
                f"ROI area is {roi_area!r}",
                partial=partial,
            )

    return Partition(
        regions=current, boundary=[], layer_counts=layer_counts, roi=roi, report=report, layer_segment_counts=seg_counts
    )


def decision_boundary(
    partition: Partition,
    net: CpwlNetwork,
    classes: tuple | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> list:
    """Zero-level set of the output head, as one chord per crossed region.

    Single-output heads use the output directly; multi-output heads need a
    class pair (i, j) and use the difference of the two output rows.
    """
    if net.output_dim == 1:
        i, j = 0, None
    else:
        if classes is None:
            raise ModelError(
                f"network has {net.output_dim} outputs; a class pair (i, j) is required"
            )
        i, j = int(classes[0]), int(classes[1])
        for idx in (i, j):
            if not 0 <= idx < net.output_dim:
                raise ModelError(f"class index {idx} out of range for {net.output_dim} outputs")
        if i == j:
            raise ModelError("class pair must name two distinct classes")

    segments = []
    for region in partition.regions:
        A, b = region.affine.A, region.affine.b
        if j is None:
            w, beta = A[0], b[0]
        else:
            w, beta = A[i] - A[j], b[i] - b[j]
        line = Line2.from_coefficients(w, beta, eps_line=tol.eps_line)
        if line is None:
            continue  # constant over the region: no crossing
        seg = clip_line(line, region.poly, tol)
        if seg is not None:
            segments.append(BoundarySegment(region_id=region.id, p0=seg[0], p1=seg[1]))
    return segments


def sample_boundary(segments: list, k: int, seed: int, roi: Roi) -> np.ndarray:
    """k input-space points on the boundary: segments chosen by length,
    positions uniform along the chosen segment. Reproducible per seed."""
    if not segments:
        raise PartitionError("cannot sample: decision boundary is empty")
    if k < 1:
        raise PartitionError(f"sample count must be >= 1, got {k}")
    p0 = np.stack([s.p0 for s in segments])
    p1 = np.stack([s.p1 for s in segments])
    lengths = np.linalg.norm(p1 - p0, axis=1)
    total = lengths.sum()
    if total <= 0:
        raise PartitionError("cannot sample: boundary segments have zero total length")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(segments), size=k, p=lengths / total)
    t = rng.uniform(size=k)
    u = p0[idx] + t[:, None] * (p1[idx] - p0[idx])
    return roi.lift(u)


def adjacent_region_pairs(partition: Partition, tol: Tolerances = DEFAULT_TOL) -> list:
    """Pairs of regions sharing a boundary segment, with the shared
    segment endpoints: (region a, region b, p0, p1).

    Regions from different parents share no arrangement node ids, so
    adjacency is recovered geometrically: polygon edges are bucketed by a
    canonical line key (normal direction and offset), and overlapping
    collinear intervals from different regions are reported.
    """
    key_scale = 1e-9
    buckets: dict = {}
    for region in partition.regions:
        v = region.poly.vertices
        n = len(v)
        for e in range(n):
            a, b = v[e], v[(e + 1) % n]
            d = b - a
            norm = np.hypot(d[0], d[1])
            if norm <= tol.eps_geom:
                continue
            w = np.array([-d[1], d[0]]) / norm
            if w[0] < -tol.eps_line or (abs(w[0]) <= tol.eps_line and w[1] < 0):
                w = -w
            offset = -float(w @ a)
            direction = np.array([-w[1], w[0]])
            t0, t1 = float(a @ direction), float(b @ direction)
            if t0 > t1:
                t0, t1 = t1, t0
            key = (round(w[0] / key_scale), round(w[1] / key_scale), round(offset / key_scale))
            buckets.setdefault(key, []).append((region.id, w, offset, t0, t1, direction))

    pairs = []
    seen = set()
    for key, entries in buckets.items():
        # probe the 26 neighboring key cells too: keys straddling a
        # rounding boundary must still meet
        neighborhood = list(entries)
        kx, ky, kb = key
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for db in (-1, 0, 1):
                    if (dx, dy, db) == (0, 0, 0):
                        continue
                    neighborhood.extend(buckets.get((kx + dx, ky + dy, kb + db), ()))
        for i in range(len(entries)):
            ra, wa, oa, a0, a1, da = entries[i]
            for rb, wb, ob, b0, b1, _ in neighborhood:
                if rb <= ra:
                    continue
                if abs(wa[0] * wb[1] - wa[1] * wb[0]) > 1e-8 or abs(oa - ob) > 1e-8:
                    continue
                lo, hi = max(a0, b0), min(a1, b1)
                if hi - lo <= tol.eps_geom:
                    continue
                if (ra, rb, round(lo, 9), round(hi, 9)) in seen:
                    continue
                seen.add((ra, rb, round(lo, 9), round(hi, 9)))
                base = wa * -oa
                pairs.append((ra, rb, base + lo * da, base + hi * da))
    return pairs
