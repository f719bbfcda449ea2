"""Command-line frontend: load, partition, stats, emit.

One JSON summary line goes to stdout per invocation; human-readable logs
go to stderr. Exit codes: 0 success, 1 usage error, 2 model or ROI parse
error, 3 geometry failure (partial outputs are written when possible).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import __version__
from .config import DEFAULT_TOL, FORWARD_CHECK_TOL, Tolerances
from .container import (
    forward_equivalence_check,
    load_model,
    load_roi,
    read_header,
    reference_discrepancies,
)
from .emitters import write_regions_json, write_stats_csv, write_svg
from .engine import compute_partition, decision_boundary, sample_boundary
from .errors import ContainerError, GeometryError, ModelError, PartitionError, RoiError
from .stats import aggregate_stats

logger = logging.getLogger("splc")

USAGE_EXIT = 1
PARSE_EXIT = 2
GEOMETRY_EXIT = 3

THREADS_ENV = "SPLINECAM_THREADS"


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here reserves 2 for
    # parse failures, so usage problems exit 1 instead
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _classes(text: str) -> tuple:
    try:
        i, j = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated class indices, got {text!r}")
    return (i, j)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splc", description="Exact linear-region partitions of networks on 2D input slices.")
    parser.add_argument("--version", action="version", version=f"splc {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")

    def common(p, roi=True):
        p.add_argument("--model", required=True, help="SPLC v1 container file")
        if roi:
            p.add_argument("--roi", required=True, help="ROI spec JSON (anchors or center+directions)")
            p.add_argument("--layer", type=int, default=None, help="stop after this many layers")
            p.add_argument(
                "--threads",
                type=int,
                default=None,
                help=f"worker threads (default: ${THREADS_ENV} or 1)",
            )
            p.add_argument("--tol-geom", type=float, default=DEFAULT_TOL.eps_geom, help="vertex merge tolerance")
            p.add_argument("--tol-line", type=float, default=DEFAULT_TOL.eps_line, help="line dedupe tolerance")
            p.add_argument("--tol-area", type=float, default=DEFAULT_TOL.eps_area, help="degenerate area cutoff")
        p.add_argument("--log-level", default="warning", choices=["debug", "info", "warning", "error"])

    p = sub.add_parser("partition", help="compute the region partition and emit artifacts")
    common(p)
    p.add_argument("--out", help="regions JSON output path")
    p.add_argument("--svg", help="SVG rendering output path")
    p.add_argument("--csv", help="stats CSV output path")
    p.add_argument("--classes", type=_classes, default=None, help="class pair i,j for the decision boundary")
    p.add_argument("--timings", action="store_true", help="embed wall-clock timings in the regions JSON")

    p = sub.add_parser("boundary-sample", help="sample points on the decision boundary")
    common(p)
    p.add_argument("--samples", type=int, required=True, help="number of points")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--classes", type=_classes, default=None)
    p.add_argument("--out", required=True, help="points JSON output path")

    p = sub.add_parser("stats", help="partition statistics")
    common(p)
    p.add_argument("--csv", help="stats CSV output path")

    p = sub.add_parser("render", help="render the partition to SVG")
    common(p)
    p.add_argument("--svg", required=True, help="SVG output path")
    p.add_argument("--classes", type=_classes, default=None)

    p = sub.add_parser("verify", help="container self-checks: forward equivalence and recorded reference outputs")
    common(p, roi=False)

    return parser


def _resolve_threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ModelError(f"{THREADS_ENV} must be an integer, got {env!r}")
    return 1


def _tolerances(args) -> Tolerances:
    return Tolerances(
        eps_line=args.tol_line,
        eps_geom=args.tol_geom,
        eps_area=args.tol_area,
        dense_limit=DEFAULT_TOL.dense_limit,
    )


def _load(args):
    net = load_model(args.model)
    roi = load_roi(args.roi)
    return net, roi


def _full_depth(args, net) -> bool:
    return args.layer is None or args.layer == len(net.layers)


def _compute(args, net, roi, want_boundary: bool):
    tol = _tolerances(args)
    if want_boundary and not _full_depth(args, net):
        raise ModelError("the decision boundary needs the full network; drop --layer")
    t0 = time.perf_counter()
    partition = compute_partition(
        net, roi, up_to_layer=args.layer, threads=_resolve_threads(args), tol=tol
    )
    t1 = time.perf_counter()
    timings = {"partition_s": t1 - t0}
    if want_boundary:
        partition.boundary = decision_boundary(
            partition, net, classes=getattr(args, "classes", None), tol=tol
        )
        timings["boundary_s"] = time.perf_counter() - t1
    return partition, tol, timings


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def _cmd_partition(args) -> int:
    net, roi = _load(args)
    want_boundary = _full_depth(args, net) and (net.output_dim == 1 or args.classes is not None)
    try:
        partition, tol, timings = _compute(args, net, roi, want_boundary)
    except PartitionError as exc:
        if exc.partial is not None and args.out:
            write_regions_json(exc.partial, path=args.out, error=str(exc))
            logger.error("partition failed; partial document written to %s", args.out)
        raise
    if args.out:
        write_regions_json(
            partition, path=args.out, tol=tol, timings=timings if args.timings else None
        )
    if args.svg:
        write_svg(partition, path=args.svg)
    if args.csv:
        write_stats_csv(aggregate_stats(partition, tol), args.csv)
    _emit(
        {
            "subcommand": "partition",
            "regions": len(partition.regions),
            "layer_counts": partition.layer_counts,
            "boundary_segments": len(partition.boundary),
            "dropped_area": partition.report.dropped_area,
            "duplicate_lines": partition.report.duplicate_lines,
            "constant_units": partition.report.constant_units,
            "elapsed_s": sum(timings.values()),
            "out": args.out,
            "svg": args.svg,
            "csv": args.csv,
        }
    )
    return 0


def _cmd_boundary_sample(args) -> int:
    net, roi = _load(args)
    partition, tol, timings = _compute(args, net, roi, want_boundary=True)
    points = sample_boundary(partition.boundary, args.samples, args.seed, roi)
    doc = {
        "schema": "boundary-sample/1",
        "seed": args.seed,
        "count": int(points.shape[0]),
        "points": [[float(v) for v in p] for p in points],
    }
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    _emit(
        {
            "subcommand": "boundary-sample",
            "samples": int(points.shape[0]),
            "boundary_segments": len(partition.boundary),
            "seed": args.seed,
            "elapsed_s": sum(timings.values()),
            "out": args.out,
        }
    )
    return 0


def _cmd_stats(args) -> int:
    net, roi = _load(args)
    partition, tol, timings = _compute(args, net, roi, want_boundary=False)
    stats = aggregate_stats(partition, tol)
    if args.csv:
        write_stats_csv(stats, args.csv)
    _emit(
        {
            "subcommand": "stats",
            "region_count": stats.region_count,
            "arv": stats.avg_region_volume,
            "avg_vertices": stats.avg_n_vertices,
            "ecc_vertex_mean": stats.ecc_vertex_mean,
            "ecc_edge_mean": stats.ecc_edge_mean,
            "degenerate_count": stats.degenerate_count,
            "dropped_area": stats.dropped_area,
            "elapsed_s": sum(timings.values()),
            "csv": args.csv,
        }
    )
    return 0


def _cmd_render(args) -> int:
    net, roi = _load(args)
    want_boundary = _full_depth(args, net) and (net.output_dim == 1 or args.classes is not None)
    partition, tol, timings = _compute(args, net, roi, want_boundary)
    write_svg(partition, path=args.svg)
    _emit(
        {
            "subcommand": "render",
            "regions": len(partition.regions),
            "boundary_segments": len(partition.boundary),
            "elapsed_s": sum(timings.values()),
            "svg": args.svg,
        }
    )
    return 0


def _cmd_verify(args) -> int:
    net = load_model(args.model, self_check=False)
    tol = FORWARD_CHECK_TOL
    d = forward_equivalence_check(net, tol=float("inf"))
    summary = {
        "subcommand": "verify",
        "model": args.model,
        "tolerance": tol,
        "equivalence_pass": d <= tol,
        "max_discrepancy": d,
        "reference_io_pass": None,
        "max_reference_discrepancy": None,
    }
    ref = read_header(args.model).get("reference_io")
    if ref is not None:
        d_ref = reference_discrepancies(net, ref)
        summary["reference_io_pass"] = bool(d_ref.max() <= tol)
        summary["max_reference_discrepancy"] = float(d_ref.max())
        summary["worst_reference_index"] = int(d_ref.argmax())
    ok = summary["equivalence_pass"] and summary["reference_io_pass"] is not False
    level = logging.INFO if ok else logging.ERROR
    logger.log(level, "verification %s (max discrepancy %.3e)", "passed" if ok else "FAILED", d)
    _emit(summary)
    return 0 if ok else PARSE_EXIT


_COMMANDS = {
    "partition": _cmd_partition,
    "boundary-sample": _cmd_boundary_sample,
    "stats": _cmd_stats,
    "render": _cmd_render,
    "verify": _cmd_verify,
}


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.subcommand](args)
    except (ContainerError, ModelError, RoiError) as exc:
        logger.error("%s", exc)
        _emit({"subcommand": args.subcommand, "error": str(exc)})
        return PARSE_EXIT
    except (GeometryError, PartitionError) as exc:
        logger.error("%s", exc)
        _emit({"subcommand": args.subcommand, "error": str(exc)})
        return GEOMETRY_EXIT
    except OSError as exc:
        logger.error("%s", exc)
        _emit({"subcommand": args.subcommand, "error": str(exc)})
        return PARSE_EXIT


def main(argv=None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
