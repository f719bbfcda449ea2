"""Standalone SPLC v1 writer.

Deliberately self-contained: the exporter talks to the core engine only
through the file format and the `splc` CLI, never through its Python
API. Layout contract:

    bytes 0..3    magic "SPLC"
    bytes 4..7    version u32 LE = 1
    bytes 8..15   header length u64 LE
    next          UTF-8 JSON header (canonical: sorted keys, no spaces)
    rest          payload, float64 LE row-major tensors back to back;
                  conv kernels in (out_ch, in_ch, kh, kw) order

Header keys per layer: kind ("dense" | "conv2d" | "avgpool2d" |
"flatten"), tensor refs {offset, length, shape} for weight/bias/kernel,
shape fields (input_shape, stride, padding, kernel_size), and an
activation descriptor {kind, ...}. Top level carries input_dim,
output_dim, payload_length, payload_crc32, and optionally reference_io
{inputs, outputs} for round-trip verification.
"""

from __future__ import annotations

import json
import zlib

import numpy as np

MAGIC = b"SPLC"
VERSION = 1
TENSOR_LAYOUT = "float64 little-endian row-major; conv kernels (out_ch, in_ch, kh, kw)"


class _Payload:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def add(self, arr: np.ndarray) -> dict:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        ref = {"offset": self.offset, "length": len(data), "shape": list(arr.shape)}
        self.chunks.append(data)
        self.offset += len(data)
        return ref


def write_container(
    entries: list[dict],
    input_dim: int,
    output_dim: int,
    path: str,
    reference_io: dict | None = None,
) -> int:
    """Serialize export entries to an SPLC v1 file; returns bytes written.

    Each entry is a dict with "kind", an "activation" descriptor, numpy
    tensors under "weight"/"bias"/"kernel", and plain shape fields. The
    same entries always produce identical bytes.
    """
    payload = _Payload()
    layers = []
    for entry in entries:
        out = {"kind": entry["kind"], "activation": entry["activation"]}
        for key in ("input_shape", "stride", "padding", "kernel_size"):
            if key in entry:
                out[key] = [int(v) for v in entry[key]]
        for key in ("weight", "bias", "kernel"):
            if key in entry:
                out[key] = payload.add(entry[key])
        layers.append(out)

    body = b"".join(payload.chunks)
    header = {
        "format": "SPLC",
        "version": VERSION,
        "input_dim": int(input_dim),
        "output_dim": int(output_dim),
        "tensor_layout": TENSOR_LAYOUT,
        "payload_length": len(body),
        "payload_crc32": zlib.crc32(body) & 0xFFFFFFFF,
        "layers": layers,
    }
    if reference_io is not None:
        header["reference_io"] = reference_io
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = MAGIC + VERSION.to_bytes(4, "little") + len(hb).to_bytes(8, "little") + hb + body
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)
