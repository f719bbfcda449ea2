"""`splc-export <checkpoint> <out.splc> [--verify n]`

The checkpoint must be a pickled torch Sequential module (saved with
torch.save(model, path)), not a bare state_dict.
"""

from __future__ import annotations

import argparse
import sys

import torch
from torch import nn

from .export import ExportError, RoundTripError, export_model, verify_roundtrip


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _shape(text: str) -> tuple:
    try:
        c, h, w = (int(v) for v in text.split(","))
        return (c, h, w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected c,h,w integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splc-export", description="Export a torch Sequential model to an SPLC v1 container.")
    parser.add_argument("checkpoint", help="torch.save'd Sequential module")
    parser.add_argument("out", help="output .splc path")
    parser.add_argument("--verify", type=int, metavar="N", default=0,
                        help="after export, replay N random inputs through the core engine")
    parser.add_argument("--input-shape", type=_shape, default=None, metavar="C,H,W",
                        help="input image shape, required for conv models")
    parser.add_argument("--reference", type=int, default=5, metavar="N",
                        help="seeded reference pairs to embed (default 5)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = torch.load(args.checkpoint, map_location="cpu", weights_only=False)
    except Exception as exc:
        sys.stderr.write(f"cannot load checkpoint: {exc}\n")
        return 2
    if not isinstance(model, nn.Module):
        sys.stderr.write(
            f"checkpoint holds {type(model).__name__}, not a module; save the full "
            "Sequential with torch.save(model, path)\n"
        )
        return 2
    try:
        report = export_model(model, args.out, input_shape=args.input_shape, reference_n=args.reference)
        print(report)
        if args.verify > 0:
            # re-exports with N reference pairs and replays them in the core
            disc = verify_roundtrip(model, args.out, n=args.verify, input_shape=args.input_shape)
            print(f"round trip verified on {args.verify} inputs (max discrepancy {disc:.3e})")
    except (ExportError, RoundTripError) as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
