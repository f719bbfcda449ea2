"""Acceptance gate: one test per shipped guarantee, each printing a
single PASS/FAIL line (run with -s or read captured output).

Criteria 1-10 exercise the core engine; criterion 11 exercises the
exporter round trip and is skipped when torch or the exporter package is
not installed. Tolerances are pinned in the asserts, not configurable.
"""

import contextlib
import json
import pathlib
import shutil
import subprocess
import time

import numpy as np
import pytest

from splc.activations import relu
from splc.arrangement import build_arrangement, find_cycles
from splc.container import load_model
from splc.engine import (
    adjacent_region_pairs,
    compute_partition,
    decision_boundary,
    sample_boundary,
)
from splc.geometry import Line2
from splc.network import CpwlNetwork, activation_patterns, dense_layer, forward, forward_batch
from splc.roi import make_roi

from conftest import general_position_lines

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@contextlib.contextmanager
def criterion(number: int, name: str):
    info = {}
    try:
        yield info
    except BaseException:
        print(f"[criterion {number:02d}] FAIL {name}")
        raise
    detail = f": {info['detail']}" if "detail" in info else ""
    print(f"[criterion {number:02d}] PASS {name}{detail}")


def square_roi(half=1.0):
    return make_roi(center=[0.0, 0.0], directions=[[1.0, 0.0], [0.0, 1.0]], half_extent=half)


# -- shared heavyweight fixtures ---------------------------------------------


def deep_mlp(seed: int) -> CpwlNetwork:
    """Depth-3 relu MLP, width 16, input dim 10."""
    rng = np.random.default_rng(seed)
    dims = [10, 16, 16, 1]
    layers = []
    for i in range(3):
        w = rng.normal(size=(dims[i + 1], dims[i])) / np.sqrt(dims[i])
        b = rng.normal(size=dims[i + 1]) * 0.2
        layers.append(dense_layer(w, b, relu() if i < 2 else None))
    return CpwlNetwork(layers)


@pytest.fixture(scope="module")
def deep_runs():
    """20 (net, roi, per-layer partitions) triples on random 2D slices of
    a 10-dimensional input space."""
    runs = []
    for i in range(20):
        rng = np.random.default_rng(5000 + i)
        net = deep_mlp(1000 + i)
        d = rng.normal(size=(10, 2))
        c = rng.normal(size=10) * 0.2
        roi = make_roi(center=c, directions=[d[:, 0], d[:, 1]], half_extent=1.0)
        parts = [compute_partition(net, roi, up_to_layer=layer) for layer in (1, 2, 3)]
        runs.append((net, roi, parts))
    return runs


@pytest.fixture(scope="module")
def moons():
    net = load_model(str(FIXTURES / "two_moons.splc"))
    roi = make_roi(center=[0.5, 0.25], directions=[[1.0, 0.0], [0.0, 1.0]], half_extent=1.75)
    partition = compute_partition(net, roi)
    partition.boundary = decision_boundary(partition, net)
    return net, roi, partition


# -- criteria -----------------------------------------------------------------


def test_criterion_01_arrangement_counting_law():
    """n general-position lines cut a convex region into
    1 + n + n(n-1)/2 faces; each case must finish fast."""
    with criterion(1, "arrangement counting law") as info:
        counts = []
        for n in range(1, 9):
            lines = general_position_lines(seed=n, n=n)
            W = np.stack([ln.w for ln in lines])
            b = np.array([ln.b for ln in lines])
            net = CpwlNetwork([dense_layer(W, b, relu())])
            t0 = time.perf_counter()
            partition = compute_partition(net, square_roi())
            elapsed = time.perf_counter() - t0
            expected = 1 + n + n * (n - 1) // 2
            assert len(partition.regions) == expected, (
                f"n={n}: got {len(partition.regions)}, expected {expected}"
            )
            assert elapsed < 1.0, f"n={n} took {elapsed:.2f}s"
            counts.append(len(partition.regions))
        info["detail"] = f"counts {counts}"


def test_criterion_02_tiling(deep_runs):
    """Region areas sum to the ROI area at every layer, 1e-9 relative."""
    with criterion(2, "tiling at every layer") as info:
        worst = 0.0
        for net, roi, parts in deep_runs:
            roi_area = roi.domain.area
            for part in parts:
                total = sum(r.poly.area for r in part.regions) + part.report.dropped_area
                rel = abs(total - roi_area) / roi_area
                assert rel <= 1e-9, f"tiling error {rel:.3e}"
                worst = max(worst, rel)
        info["detail"] = f"20 nets x 3 layers, worst relative error {worst:.2e}"


def test_criterion_03_affine_oracle(deep_runs):
    """Per-region affine map equals the network forward at the centroid
    and 5 random interior points, 1e-8 absolute."""
    with criterion(3, "per-region affine oracle") as info:
        rng = np.random.default_rng(99)
        worst = 0.0
        regions_checked = 0
        for net, roi, parts in deep_runs:
            for region in parts[-1].regions:
                v = region.poly.vertices
                weights = rng.dirichlet(np.ones(len(v)), size=5)
                pts = np.vstack([region.poly.centroid, weights @ v])
                lifted = roi.lift(pts)
                net_out = forward_batch(net, lifted)
                affine_out = pts @ region.affine.A.T + region.affine.b
                err = float(np.max(np.abs(net_out - affine_out)))
                assert err <= 1e-8, f"affine mismatch {err:.3e}"
                worst = max(worst, err)
                regions_checked += 1
        info["detail"] = f"{regions_checked} regions, worst error {worst:.2e}"


def test_criterion_04_grid_pattern_oracle(moons):
    """On a 500x500 grid, stored region activation patterns match the
    forward pass at >= 99.9% of off-edge points, and every observed
    pattern is realized by some region."""
    with criterion(4, "grid activation-pattern oracle") as info:
        net, roi, partition = moons
        x0, y0 = roi.domain.vertices.min(axis=0)
        x1, y1 = roi.domain.vertices.max(axis=0)
        xs = np.linspace(x0, x1, 500)
        ys = np.linspace(y0, y1, 500)
        gx, gy = np.meshgrid(xs, ys)
        grid = np.column_stack([gx.ravel(), gy.ravel()])

        # forward patterns for all grid points
        pats = activation_patterns(net, roi.lift(grid))
        grid_pat = np.hstack(pats)

        assigned = np.full(len(grid), -1)
        margin = np.full(len(grid), -np.inf)
        for idx, region in enumerate(partition.regions):
            v = region.poly.vertices
            bb0 = v.min(axis=0) - 1e-6
            bb1 = v.max(axis=0) + 1e-6
            cand = np.nonzero(
                (grid[:, 0] >= bb0[0]) & (grid[:, 0] <= bb1[0])
                & (grid[:, 1] >= bb0[1]) & (grid[:, 1] <= bb1[1])
            )[0]
            if not len(cand):
                continue
            pts = grid[cand]
            # signed distance to each edge; inside = all nonnegative
            m = np.full(len(cand), np.inf)
            n = len(v)
            for e in range(n):
                a, b = v[e], v[(e + 1) % n]
                d = b - a
                nrm = np.hypot(d[0], d[1])
                inward = np.array([-d[1], d[0]]) / nrm
                m = np.minimum(m, (pts - a) @ inward)
            take = m > margin[cand]
            assigned[cand[take]] = idx
            margin[cand[take]] = m[take]

        assert (assigned >= 0).all(), "grid points outside every region"
        off_edge = margin > 1e-7
        region_pat = {
            idx: np.concatenate([seg for seg in partition.regions[idx].state.segments])
            for idx in range(len(partition.regions))
        }
        stored = np.stack([region_pat[idx] for idx in assigned])
        matches = (stored == grid_pat).all(axis=1)
        rate = matches[off_edge].mean()
        assert rate >= 0.999, f"pattern agreement {rate:.5f} < 0.999"

        observed = {grid_pat[i].tobytes() for i in np.nonzero(off_edge)[0]}
        realized = {p.astype(grid_pat.dtype).tobytes() for p in region_pat.values()}
        missing = observed - realized
        assert not missing, f"{len(missing)} grid patterns not realized by any region"
        info["detail"] = (
            f"{off_edge.sum()} off-edge points, agreement {rate:.6f}, "
            f"{len(observed)} observed patterns all realized"
        )


def test_criterion_05_boundary_residual(moons):
    """|forward| <= 1e-6 at every boundary segment endpoint and every
    sampled boundary point, on a trained two-cluster classifier."""
    with criterion(5, "decision-boundary residual") as info:
        net, roi, partition = moons
        assert partition.boundary, "expected a nonempty decision boundary"
        endpoints = np.vstack([[s.p0, s.p1] for s in partition.boundary]).reshape(-1, 2)
        vals = np.abs(forward_batch(net, roi.lift(endpoints)))
        assert vals.max() <= 1e-6, f"endpoint residual {vals.max():.3e}"

        samples = sample_boundary(partition.boundary, k=200, seed=17, roi=roi)
        sval = np.abs(forward_batch(net, samples))
        assert sval.max() <= 1e-6, f"sample residual {sval.max():.3e}"
        info["detail"] = (
            f"{len(partition.boundary)} segments, 200 samples, "
            f"max residual {max(vals.max(), sval.max()):.2e}"
        )


def test_criterion_06_continuity(deep_runs):
    """Adjacent regions' final affine maps agree at shared-edge
    endpoints within 1e-8."""
    with criterion(6, "continuity across shared edges") as info:
        worst = 0.0
        pairs_checked = 0
        for net, roi, parts in deep_runs:
            part = parts[-1]
            for ra, rb, p0, p1 in adjacent_region_pairs(part):
                a, b = part.regions[ra].affine, part.regions[rb].affine
                for u in (p0, p1):
                    fa = a.A @ u + a.b
                    fb = b.A @ u + b.b
                    err = float(np.max(np.abs(fa - fb)))
                    assert err <= 1e-8, f"continuity break {err:.3e}"
                    worst = max(worst, err)
                pairs_checked += 1
        assert pairs_checked > 0
        info["detail"] = f"{pairs_checked} adjacent pairs, worst gap {worst:.2e}"


def test_criterion_07_euler_topology():
    """faces = edges - nodes + 1 and interior edges border exactly two
    faces, checked over arrangements of growing size (the same checks
    also run inside every face enumeration)."""
    with criterion(7, "arrangement topology") as info:
        checked = []
        for n in (2, 4, 6, 8):
            lines = general_position_lines(seed=40 + n, n=n)
            roi = square_roi()
            graph = build_arrangement(roi.domain, lines)
            faces = find_cycles(graph)
            assert len(faces) == len(graph.edges) - len(graph.points) + 1

            edge_faces = {}
            for face in faces:
                cyc = face.cycle
                for k in range(len(cyc)):
                    key = frozenset((cyc[k], cyc[(k + 1) % len(cyc)]))
                    edge_faces[key] = edge_faces.get(key, 0) + 1
            for u, v, label in graph.edges:
                count = edge_faces.get(frozenset((u, v)), 0)
                if label == -1:
                    assert count == 1, f"boundary edge on {count} faces"
                else:
                    assert count == 2, f"interior edge on {count} faces"
            checked.append((n, len(faces)))
        info["detail"] = f"(lines, faces) = {checked}"


def test_criterion_08_thread_determinism(moons, tmp_path):
    """Regions JSON is byte-identical for --threads 1 vs --threads 8."""
    with criterion(8, "thread-count determinism") as info:
        from splc.cli import run_cli

        roi_file = tmp_path / "roi.json"
        roi_file.write_text(
            json.dumps(
                {"center": [0.5, 0.25], "directions": [[1.0, 0.0], [0.0, 1.0]], "half_extent": 1.75}
            )
        )
        outputs = []
        for threads in (1, 8):
            out = tmp_path / f"t{threads}.json"
            code = run_cli(
                [
                    "partition",
                    "--model", str(FIXTURES / "two_moons.splc"),
                    "--roi", str(roi_file),
                    "--out", str(out),
                    "--threads", str(threads),
                ]
            )
            assert code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1], "thread count changed the output bytes"
        info["detail"] = f"{len(outputs[0])} bytes identical"


def test_criterion_09_scaling_sanity():
    """Width 200, one relu layer, ROI area 4: done in <= 30 s and the
    region count equals the bare arrangement face count."""
    with criterion(9, "width-200 scaling") as info:
        rng = np.random.default_rng(42)
        W = rng.normal(size=(200, 2))
        b = rng.normal(size=200) * 0.5
        net = CpwlNetwork([dense_layer(W, b, relu())])
        roi = square_roi(half=1.0)  # area 4

        t0 = time.perf_counter()
        partition = compute_partition(net, roi)
        elapsed = time.perf_counter() - t0
        assert elapsed <= 30.0, f"took {elapsed:.1f}s"

        lines = [
            ln
            for i in range(200)
            if (ln := Line2.from_coefficients(W[i], b[i])) is not None
        ]
        faces = find_cycles(build_arrangement(roi.domain, lines))
        n_faces = sum(1 for f in faces if f.poly is not None)
        assert len(partition.regions) == n_faces, (
            f"partition {len(partition.regions)} vs arrangement {n_faces}"
        )
        info["detail"] = f"{len(partition.regions)} regions in {elapsed:.2f}s"


def test_criterion_10_refinement(deep_runs):
    """Every region at layer L sits inside its parent at layer L-1
    (vertex containment, 1e-9)."""
    with criterion(10, "layerwise refinement") as info:
        children_checked = 0
        for net, roi, parts in deep_runs:
            for level in (1, 2):
                parents, children = parts[level - 1], parts[level]
                for child in children.regions:
                    parent = parents.regions[child.parent]
                    assert parent.id == child.parent
                    for v in child.poly.vertices:
                        assert parent.poly.contains(v, tol=1e-9), (
                            f"vertex {v} escapes parent {parent.id}"
                        )
                    children_checked += 1
        info["detail"] = f"{children_checked} parent links verified"


def test_criterion_11_exporter_roundtrip(tmp_path):
    """Exporter -> container -> core forward matches the framework
    forward within 1e-10 on 16 inputs, for an MLP, a batch-norm MLP
    (folded), and a small conv net; conv lowering matches direct
    convolution within 1e-10."""
    torch = pytest.importorskip("torch")
    splc_exporter = pytest.importorskip("splc_exporter")
    if shutil.which("splc") is None:
        pytest.skip("core CLI not on PATH")
    from torch import nn

    with criterion(11, "exporter round trip") as info:
        torch.manual_seed(7)
        mlp = nn.Sequential(
            nn.Linear(2, 24), nn.ReLU(), nn.Linear(24, 24), nn.ReLU(), nn.Linear(24, 3)
        )
        bn = nn.Sequential(
            nn.Linear(2, 24), nn.BatchNorm1d(24), nn.ReLU(),
            nn.Linear(24, 24), nn.BatchNorm1d(24), nn.ReLU(), nn.Linear(24, 1),
        )
        bn.eval()
        with torch.no_grad():
            bn[1].running_mean.normal_()
            bn[1].running_var.uniform_(0.5, 2.0)
            bn[4].running_mean.normal_()
            bn[4].running_var.uniform_(0.5, 2.0)
        cnn = nn.Sequential(
            nn.Conv2d(1, 8, 3, padding=1), nn.ReLU(), nn.AvgPool2d(2),
            nn.Conv2d(8, 8, 3, padding=1), nn.ReLU(), nn.AvgPool2d(2),
            nn.Flatten(), nn.Linear(8 * 7 * 7, 96), nn.ReLU(), nn.Linear(96, 10),
        )
        cases = [
            ("mlp", mlp, None),
            ("bn_mlp", bn, None),
            ("cnn", cnn, (1, 28, 28)),
        ]
        details = []
        for name, model, shape in cases:
            model.eval()
            path = tmp_path / f"{name}.splc"
            disc = splc_exporter.verify_roundtrip(model, str(path), n=16, input_shape=shape)
            assert disc <= 1e-10, f"{name} round trip {disc:.3e}"
            details.append(f"{name} {disc:.1e}")

        # folded batch-norm container must carry only dense layers
        report = splc_exporter.export_model(bn, str(tmp_path / "bn2.splc"))
        assert all(action != "dense (diagonal)" for _, _, action in report.layer_mapping)
        assert len(report.folded) == 2

        # conv lowering vs direct convolution, 16 fresh inputs
        net = load_model(str(tmp_path / "cnn.splc"))
        from splc.network import structured_forward

        rng = np.random.default_rng(123)
        worst = 0.0
        for x in rng.normal(size=(16, net.input_dim)):
            a = structured_forward(net, x)
            bvec = forward(net, x)[-1]
            worst = max(worst, float(np.max(np.abs(a - bvec))))
        assert worst <= 1e-10, f"conv lowering mismatch {worst:.3e}"
        info["detail"] = ", ".join(details) + f"; conv lowering {worst:.1e}"
