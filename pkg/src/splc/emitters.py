"""Artifact writers: regions JSON, SVG rendering, stats CSV.

All three are deterministic: the same partition produces the same bytes,
independent of thread count or wall clock. Floats are serialized with
``repr``, the shortest decimal string that round-trips binary64 (at most
17 significant digits), so a reader recovers bit-identical values.
"""

from __future__ import annotations

import csv
import hashlib
import json

import numpy as np

from . import __version__
from .config import Tolerances, DEFAULT_TOL
from .engine import Partition
from .stats import PartitionStats

__all__ = ["write_regions_json", "write_svg", "write_stats_csv", "activation_code"]

SCHEMA = "regions/1"

# above this many segments a single digit can be ambiguous, so codes
# switch from digit strings to comma-joined integers
DIGIT_CODE_MAX_SEGMENTS = 10


def _f(x: float) -> float:
    return float(x)


def _vec(v) -> list:
    return [float(t) for t in np.asarray(v, dtype=np.float64)]


def _mat(m) -> list:
    return [[float(t) for t in row] for row in np.asarray(m, dtype=np.float64)]


def activation_code(state, layer_segment_counts: list) -> list[str]:
    """Per-layer code strings for a region's activation state.

    Layers whose activation has at most 10 segments join selectors as
    digits ("0110"); wider activations fall back to comma-joined
    integers ("0,12,3") to keep the code parseable.
    """
    codes = []
    for seg, count in zip(state.segments, layer_segment_counts):
        if count <= DIGIT_CODE_MAX_SEGMENTS:
            codes.append("".join(str(int(s)) for s in seg))
        else:
            codes.append(",".join(str(int(s)) for s in seg))
    return codes


def write_regions_json(
    partition: Partition,
    roi=None,
    path: str = None,
    tol: Tolerances = DEFAULT_TOL,
    timings: dict | None = None,
    error: str | None = None,
) -> None:
    """Full partition document, schema ``regions/1``.

    ``timings`` is only embedded when given; default output carries no
    wall-clock data so reruns are byte-identical. ``error`` marks a
    partial document written after a failed run.
    """
    if path is None:
        raise ValueError("an output path is required")
    roi = roi if roi is not None else partition.roi
    doc = {
        "schema": SCHEMA,
        "roi": {
            "T": _mat(roi.T),
            "c": _vec(roi.c),
            "domain": _mat(roi.domain.vertices),
        },
        "regions": [
            {
                "id": r.id,
                "parent": r.parent,
                "vertices_2d": _mat(r.poly.vertices),
                "activation_code": activation_code(r.state, partition.layer_segment_counts),
                "affine": {"A_hat": _mat(r.affine.A), "b_hat": _vec(r.affine.b)},
            }
            for r in partition.regions
        ],
        "boundary": [
            {"region_id": s.region_id, "p0": _vec(s.p0), "p1": _vec(s.p1)}
            for s in partition.boundary
        ],
        "meta": {
            "tool": "splc",
            "tool_version": __version__,
            "region_count": len(partition.regions),
            "layer_counts": [int(n) for n in partition.layer_counts],
            "tolerances": {
                "eps_line": _f(tol.eps_line),
                "eps_geom": _f(tol.eps_geom),
                "eps_area": _f(tol.eps_area),
            },
            "dropped_area": _f(partition.report.dropped_area),
            "dropped_faces": int(partition.report.dropped_faces),
            "duplicate_lines": int(partition.report.duplicate_lines),
            "constant_units": int(partition.report.constant_units),
        },
    }
    if timings is not None:
        doc["meta"]["timings"] = {k: _f(v) for k, v in timings.items()}
    if error is not None:
        doc["meta"]["error"] = str(error)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _region_fill(codes: list[str]) -> str:
    """Stable fill color hashed from the activation code."""
    digest = hashlib.sha256("|".join(codes).encode("ascii")).digest()
    hue = int.from_bytes(digest[:4], "big") % 360
    light = 62 + digest[4] % 25
    return f"hsl({hue},62%,{light}%)"


DEFAULT_STYLE = {
    "width_px": 900.0,
    "edge_color": "#000000",
    "edge_width": 1.0,
    "boundary_color": "#8b0000",
    "boundary_width": 2.5,
    "background": "#ffffff",
}


def write_svg(partition: Partition, roi=None, path: str = None, style: dict | None = None) -> None:
    """Render regions (hashed fills, black edges) and, when present, the
    decision boundary in dark red on top. Slice y axis points up."""
    st = dict(DEFAULT_STYLE)
    if style:
        unknown = set(style) - set(DEFAULT_STYLE)
        if unknown:
            raise ValueError(f"unknown style keys: {sorted(unknown)}")
        st.update(style)

    if path is None:
        raise ValueError("an output path is required")
    roi = roi if roi is not None else partition.roi
    dom = roi.domain.vertices
    x0, y0 = dom.min(axis=0)
    x1, y1 = dom.max(axis=0)
    scale = st["width_px"] / (x1 - x0)
    height = (y1 - y0) * scale

    def fmt(p) -> str:
        return f"{(p[0] - x0) * scale:.3f},{(y1 - p[1]) * scale:.3f}"

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{st["width_px"]:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {st["width_px"]:.3f} {height:.3f}">',
        f'<rect width="100%" height="100%" fill="{st["background"]}"/>',
        f'<g stroke="{st["edge_color"]}" stroke-width="{st["edge_width"]}" '
        'stroke-linejoin="round">',
    ]
    for r in partition.regions:
        codes = activation_code(r.state, partition.layer_segment_counts)
        pts = " ".join(fmt(p) for p in r.poly.vertices)
        lines.append(f'<polygon points="{pts}" fill="{_region_fill(codes)}"/>')
    lines.append("</g>")
    if partition.boundary:
        lines.append(
            f'<g stroke="{st["boundary_color"]}" stroke-width="{st["boundary_width"]}" '
            'stroke-linecap="round">'
        )
        for s in partition.boundary:
            a, b = fmt(s.p0).split(","), fmt(s.p1).split(",")
            lines.append(f'<line x1="{a[0]}" y1="{a[1]}" x2="{b[0]}" y2="{b[1]}"/>')
        lines.append("</g>")
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


CSV_COLUMNS = ["region_count", "arv", "avg_vertices", "ecc_vertex_mean", "ecc_edge_mean", "dropped_area"]


def write_stats_csv(stats: PartitionStats, path: str) -> None:
    """Single summary row; column order is part of the format contract."""
    row = {
        "region_count": stats.region_count,
        "arv": repr(float(stats.avg_region_volume)),
        "avg_vertices": repr(float(stats.avg_n_vertices)),
        "ecc_vertex_mean": repr(float(stats.ecc_vertex_mean)),
        "ecc_edge_mean": repr(float(stats.ecc_edge_mean)),
        "dropped_area": repr(float(stats.dropped_area)),
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerow(row)
