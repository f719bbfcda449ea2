"""Line arrangements inside a convex polygon and face enumeration.

``build_arrangement`` turns a convex polygon and a set of lines into a
planar graph:

1. deduplicate coincident lines (both orientations), merging provenance;
2. clip every line to the polygon, keeping the surviving chords;
3. create nodes: polygon corners, chord endpoints on the boundary, and
   pairwise chord intersections, merged through a spatial hash so nearby
   events collapse onto one node;
4. per line, sort its nodes by the signed parameter along the line
   direction and connect consecutive nodes into edges labeled with the
   line index; per polygon edge, sort the nodes lying on it and connect
   them into boundary edges labeled -1.

``find_cycles`` enumerates the bounded faces with a FIFO queue of directed
edges. Popping a live directed edge (t, h) consumes both of its directions
and walks the face by a breadth-first shortest path from h back to t over
the remaining live directions (neighbors visited in ascending node id, so
the result is deterministic). Every traversed path edge loses its walked
direction; boundary edges lose both directions and are never enqueued;
interior path edges enqueue their reverse, which later closes the face on
their other side. When the queue drains, every interior direction must
have been consumed exactly once and every boundary edge once in total;
leftovers mean the arrangement graph was inconsistent and raise. The face
count is checked against the Euler relation faces = edges - nodes + 1.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .errors import GeometryError
from .geometry import ConvexPoly2, Line2, _clip_line_ex, _signed_area

__all__ = ["ArrangementGraph", "Face", "build_arrangement", "find_cycles"]


@dataclass
class ArrangementGraph:
    """Planar graph of a clipped line arrangement.

    ``edges`` holds ``(u, v, label)`` with node indices into ``points``;
    label -1 marks polygon-boundary edges, any other value indexes into
    ``lines``. ``duplicate_count`` counts input lines merged away as
    coincident with an earlier one.
    """

    points: np.ndarray
    edges: list
    lines: list
    duplicate_count: int

    @property
    def node_count(self) -> int:
        return len(self.points)

    @property
    def edge_count(self) -> int:
        return len(self.edges)


@dataclass
class Face:
    """One bounded face: the node cycle that walks it and its polygon.

    ``poly`` is None for degenerate slivers (area at or below eps_area, or
    fewer than 3 distinct vertices); ``area`` is still reported so callers
    can account for dropped area.
    """

    cycle: list
    poly: ConvexPoly2 | None
    area: float


class _NodePool:
    """Spatial hash that merges points within a Chebyshev tolerance."""

    def __init__(self, eps: float):
        self.eps = eps
        self.cell = max(eps, 1e-13)
        self.coords: list = []
        self.grid: dict = {}

    def add(self, x: float, y: float) -> int:
        cx = math.floor(x / self.cell)
        cy = math.floor(y / self.cell)
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for idx in self.grid.get((gx, gy), ()):
                    px, py = self.coords[idx]
                    if abs(px - x) <= self.eps and abs(py - y) <= self.eps:
                        return idx
        idx = len(self.coords)
        self.coords.append((x, y))
        self.grid.setdefault((cx, cy), []).append(idx)
        return idx


def _dedupe_lines(lines: list, eps_line: float) -> tuple[list, int]:
    """Merge coincident lines (either orientation), concatenating their
    provenance onto the first occurrence. Order-preserving."""
    kept: list = []
    merged_prov: list = []
    duplicates = 0
    for line in lines:
        w, b = line.w, line.b
        target = -1
        for k, other in enumerate(kept):
            ow, ob = other.w, other.b
            cross = abs(w[0] * ow[1] - w[1] * ow[0])
            if cross > eps_line:
                continue
            sign = 1.0 if (w @ ow) > 0 else -1.0
            if abs(b - sign * ob) <= eps_line:
                target = k
                break
        if target >= 0:
            duplicates += 1
            merged_prov[target] = merged_prov[target] + list(line.provenance)
        else:
            kept.append(line)
            merged_prov.append(list(line.provenance))
    out = [
        Line2(line.w, line.b, tuple(prov))
        for line, prov in zip(kept, merged_prov)
    ]
    return out, duplicates


def build_arrangement(
    poly: ConvexPoly2, lines: list, tol: Tolerances = DEFAULT_TOL
) -> ArrangementGraph:
    """Build the arrangement graph of ``lines`` clipped to ``poly``."""
    lines, duplicates = _dedupe_lines(list(lines), tol.eps_line)

    chords = []  # (line index, ClippedChord)
    for i, line in enumerate(lines):
        chord = _clip_line_ex(line, poly, tol)
        if chord is not None:
            chords.append((i, chord))

    pool = _NodePool(tol.eps_geom)
    verts = poly.vertices
    n_poly = len(verts)
    corner_ids = [pool.add(float(p[0]), float(p[1])) for p in verts]

    # events along each chord: (t parameter, node id)
    line_events: dict = {}
    # events along each polygon edge: (s parameter, node id)
    boundary_events: dict = {k: [] for k in range(n_poly)}

    for i, chord in chords:
        n0 = pool.add(float(chord.p0[0]), float(chord.p0[1]))
        n1 = pool.add(float(chord.p1[0]), float(chord.p1[1]))
        line_events[i] = [(chord.t0, n0), (chord.t1, n1)]
        for node, edge_idx, point in ((n0, chord.edge0, chord.p0), (n1, chord.edge1, chord.p1)):
            base = verts[edge_idx]
            evec = verts[(edge_idx + 1) % n_poly] - base
            s = float((point - base) @ evec) / float(evec @ evec)
            boundary_events[edge_idx].append((s, node))

    # pairwise chord intersections, in (i, j) lexicographic order
    active = [i for i, _ in chords]
    chord_by_line = {i: c for i, c in chords}
    for a in range(len(active)):
        i = active[a]
        ci = chord_by_line[i]
        wi, bi = lines[i].w, lines[i].b
        di = lines[i].direction
        for j in active[a + 1 :]:
            cj = chord_by_line[j]
            wj, bj = lines[j].w, lines[j].b
            det = wi[0] * wj[1] - wi[1] * wj[0]
            if abs(det) <= tol.eps_line:
                continue  # parallel
            x = (-bi * wj[1] + bj * wi[1]) / det
            y = (-wi[0] * bj + wj[0] * bi) / det
            ti = x * di[0] + y * di[1]
            if ti < ci.t0 - tol.eps_geom or ti > ci.t1 + tol.eps_geom:
                continue
            dj = lines[j].direction
            tj = x * dj[0] + y * dj[1]
            if tj < cj.t0 - tol.eps_geom or tj > cj.t1 + tol.eps_geom:
                continue
            node = pool.add(x, y)
            line_events[i].append((ti, node))
            line_events[j].append((tj, node))

    points = np.asarray(pool.coords, dtype=np.float64)
    edges: list = []

    for i, _ in chords:
        events = sorted(line_events[i])
        seen: set = set()
        ordered = []
        for _, node in events:
            if node not in seen:
                seen.add(node)
                ordered.append(node)
        for u, v in zip(ordered, ordered[1:]):
            edges.append((u, v, i))

    for k in range(n_poly):
        events = [(0.0, corner_ids[k])] + boundary_events[k] + [
            (1.0, corner_ids[(k + 1) % n_poly])
        ]
        events.sort()
        seen = set()
        ordered = []
        for _, node in events:
            if node not in seen:
                seen.add(node)
                ordered.append(node)
        for u, v in zip(ordered, ordered[1:]):
            edges.append((u, v, -1))

    return ArrangementGraph(points=points, edges=edges, lines=lines, duplicate_count=duplicates)


def _bfs_path(src: int, dst: int, live: list) -> list:
    """Shortest hop path src -> dst over live directed edges, neighbors in
    ascending node id. Returns the node list including both ends."""
    parent = {src: -1}
    queue = deque((src,))
    while queue:
        u = queue.popleft()
        if u == dst:
            path = [u]
            while parent[path[-1]] != -1:
                path.append(parent[path[-1]])
            path.reverse()
            return path
        for v in sorted(live[u]):
            if v not in parent:
                parent[v] = u
                queue.append(v)
    raise GeometryError("face walk failed: target unreachable over live edges")


def find_cycles(graph: ArrangementGraph, tol: Tolerances = DEFAULT_TOL) -> list:
    """Enumerate every bounded face of the arrangement graph."""
    n = graph.node_count
    live: list = [set() for _ in range(n)]
    label: dict = {}
    for u, v, lab in graph.edges:
        if u == v:
            raise GeometryError(f"arrangement has a self-loop at node {u}")
        live[u].add(v)
        live[v].add(u)
        label[(u, v)] = lab
        label[(v, u)] = lab

    boundary_edges = [(u, v) for u, v, lab in graph.edges if lab == -1]
    if not boundary_edges:
        raise GeometryError("arrangement has no boundary edges to seed from")

    queue = deque((boundary_edges[0],))
    cycles: list = []
    while queue:
        t, h = queue.popleft()
        if h not in live[t]:
            continue  # this face was already closed from another side
        live[t].discard(h)
        live[h].discard(t)
        path = _bfs_path(h, t, live)
        cycles.append([t] + path[:-1])
        for u, v in zip(path, path[1:]):
            live[u].discard(v)
            if label[(u, v)] == -1:
                live[v].discard(u)
            else:
                queue.append((v, u))

    leftovers = sum(len(s) for s in live)
    if leftovers:
        raise GeometryError(
            f"face enumeration incomplete: {leftovers} directed edges never traversed"
        )
    expected = graph.edge_count - graph.node_count + 1
    if len(cycles) != expected:
        raise GeometryError(
            f"Euler check failed: {len(cycles)} faces vs edges-nodes+1 = {expected}"
        )

    faces = []
    for cycle in cycles:
        coords = graph.points[cycle]
        area = abs(_signed_area(coords))
        distinct = np.count_nonzero(
            np.max(np.abs(coords - np.roll(coords, -1, axis=0)), axis=1) > tol.eps_geom
        )
        if area <= tol.eps_area or distinct < 3:
            # degenerate sliver; caller accounts for the dropped area
            faces.append(Face(cycle=cycle, poly=None, area=area))
            continue
        poly = ConvexPoly2(coords, tol)
        faces.append(Face(cycle=cycle, poly=poly, area=poly.area))
    return faces
