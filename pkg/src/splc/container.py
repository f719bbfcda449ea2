"""SPLC v1 model container: bit-exact binary serialization of networks.

File layout:

    bytes 0..3    magic "SPLC" (0x53 0x50 0x4C 0x43)
    bytes 4..7    version, unsigned 32-bit little-endian (= 1)
    bytes 8..15   header length H, unsigned 64-bit little-endian
    bytes 16..16+H  header, UTF-8 JSON
    rest          payload: concatenated tensors, IEEE-754 binary64,
                  little-endian, row-major; conv kernels stored as
                  (out_ch, in_ch, kh, kw)

The header describes input/output dims, the layer list with per-tensor
payload offsets and lengths, a CRC-32 of the payload, and optionally a
``reference_io`` block of recorded input/output pairs used for
cross-implementation round-trip verification.

Loading validates magic, version, header JSON, offset bounds and
overlaps, shape chaining, and the payload checksum, then runs a forward
self-check (structured evaluation vs lowered matrices on 3 seeded random
inputs, tolerance 1e-10) and, when reference pairs are present, replays
them at the same tolerance.
"""

from __future__ import annotations

import json
import logging
import zlib

import numpy as np

from .config import FORWARD_CHECK_TOL
from .errors import ContainerError, ModelError, RoiError
from .network import (
    CpwlNetwork,
    LayerSpec,
    avgpool2d_layer,
    conv2d_layer,
    dense_layer,
    flatten_layer,
    forward,
    structured_forward,
)
from .activations import ActivationDescriptor, abs_act, identity, leaky_relu, pwl, relu
from .roi import Roi, make_roi
from .geometry import ConvexPoly2

logger = logging.getLogger(__name__)

__all__ = [
    "load_model",
    "write_model",
    "read_header",
    "load_roi",
    "forward_equivalence_check",
    "reference_io_check",
    "reference_discrepancies",
]

MAGIC = b"SPLC"
VERSION = 1
TENSOR_LAYOUT = "float64 little-endian row-major; conv kernels (out_ch, in_ch, kh, kw)"
SELF_CHECK_INPUTS = 3
SELF_CHECK_SEED = 2024


def _activation_to_json(act: ActivationDescriptor) -> dict:
    if act.kind == "identity":
        return {"kind": "identity"}
    if act.kind == "relu":
        return {"kind": "relu"}
    if act.kind == "abs":
        return {"kind": "abs"}
    if act.kind == "leaky_relu":
        return {"kind": "leaky_relu", "alpha": float(act.slopes[0])}
    return {
        "kind": "pwl",
        "breakpoints": [float(t) for t in act.breakpoints],
        "slopes": [float(s) for s in act.slopes],
        "value_at_zero": float(act.value_at_zero),
    }


def _activation_from_json(spec: dict) -> ActivationDescriptor:
    kind = spec.get("kind")
    if kind == "identity":
        return identity()
    if kind == "relu":
        return relu()
    if kind == "abs":
        return abs_act()
    if kind == "leaky_relu":
        return leaky_relu(float(spec["alpha"]))
    if kind == "pwl":
        return pwl(spec["breakpoints"], spec["slopes"], float(spec.get("value_at_zero", 0.0)))
    raise ContainerError(f"unknown activation kind {kind!r}")


class _PayloadWriter:
    def __init__(self):
        self.chunks = []
        self.offset = 0

    def add(self, arr: np.ndarray) -> dict:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        ref = {"offset": self.offset, "length": len(data), "shape": list(arr.shape)}
        self.chunks.append(data)
        self.offset += len(data)
        return ref


def write_model(net: CpwlNetwork, path: str, reference_io: dict | None = None) -> int:
    """Serialize a network to SPLC v1. Deterministic: the same network and
    reference block always produce identical bytes. Returns bytes written."""
    payload = _PayloadWriter()
    layers = []
    for layer in net.layers:
        entry = {"kind": layer.kind, "activation": _activation_to_json(layer.activation)}
        if layer.kind == "dense":
            entry["weight"] = payload.add(layer.params["weight"])
            entry["bias"] = payload.add(layer.params["bias"])
        elif layer.kind == "conv2d":
            p = layer.params
            entry["input_shape"] = list(p["input_shape"])
            entry["stride"] = list(p["stride"])
            entry["padding"] = list(p["padding"])
            entry["kernel"] = payload.add(p["kernel"])
            entry["bias"] = payload.add(p["bias"])
        elif layer.kind == "avgpool2d":
            p = layer.params
            entry["input_shape"] = list(p["input_shape"])
            entry["kernel_size"] = list(p["kernel"])
            entry["stride"] = list(p["stride"])
        elif layer.kind == "flatten":
            entry["input_shape"] = list(layer.params["input_shape"])
        else:
            raise ModelError(f"cannot serialize layer kind {layer.kind!r}")
        layers.append(entry)

    body = b"".join(payload.chunks)
    header = {
        "format": "SPLC",
        "version": VERSION,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "tensor_layout": TENSOR_LAYOUT,
        "payload_length": len(body),
        "payload_crc32": zlib.crc32(body) & 0xFFFFFFFF,
        "layers": layers,
    }
    if reference_io is not None:
        header["reference_io"] = reference_io
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    blob = (
        MAGIC
        + VERSION.to_bytes(4, "little")
        + len(header_bytes).to_bytes(8, "little")
        + header_bytes
        + body
    )
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def _parse_container(raw: bytes) -> tuple[dict, bytes]:
    if len(raw) < 16:
        raise ContainerError(f"file too short for a container header ({len(raw)} bytes)", offset=0)
    if raw[:4] != MAGIC:
        raise ContainerError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", offset=0)
    version = int.from_bytes(raw[4:8], "little")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}", offset=4)
    header_len = int.from_bytes(raw[8:16], "little")
    if 16 + header_len > len(raw):
        raise ContainerError(
            f"declared header length {header_len} exceeds file size {len(raw)}", offset=8
        )
    try:
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"header is not valid UTF-8 JSON: {exc}", offset=16) from exc
    payload = raw[16 + header_len :]

    expected_len = header.get("payload_length")
    if expected_len is not None and expected_len != len(payload):
        raise ContainerError(
            f"truncated payload: header declares {expected_len} bytes, file has {len(payload)}",
            offset=16 + header_len,
        )
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if crc != header.get("payload_crc32"):
        raise ContainerError(
            f"payload checksum mismatch: computed {crc:#010x}, "
            f"header declares {header.get('payload_crc32'):#010x}",
            offset=16 + header_len,
        )
    return header, payload


def read_header(path: str) -> dict:
    """Parsed and checksum-validated header of a container file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    header, _ = _parse_container(raw)
    return header


def _read_tensor(payload: bytes, ref: dict, header_end: int, what: str) -> np.ndarray:
    try:
        offset = int(ref["offset"])
        length = int(ref["length"])
        shape = tuple(int(s) for s in ref["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ContainerError(f"malformed tensor reference for {what}: {exc}", offset=16) from exc
    count = int(np.prod(shape)) if shape else 1
    if length != count * 8:
        raise ContainerError(
            f"{what}: declared length {length} does not match shape {shape} (needs {count * 8})",
            offset=header_end + offset,
        )
    if offset < 0 or offset + length > len(payload):
        raise ContainerError(
            f"{what}: tensor bytes [{offset}, {offset + length}) fall outside payload "
            f"of {len(payload)} bytes",
            offset=header_end + max(offset, 0),
        )
    arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
    arr = np.array(arr, dtype=np.float64)  # own, native-order copy
    if not np.all(np.isfinite(arr)):
        raise ContainerError(f"{what}: tensor contains non-finite values", offset=header_end + offset)
    return arr


def _check_tensor_overlaps(layers: list, payload_len: int, header_end: int) -> None:
    spans = []
    for i, entry in enumerate(layers):
        for key in ("weight", "bias", "kernel"):
            ref = entry.get(key)
            if ref is not None:
                spans.append((int(ref["offset"]), int(ref["offset"]) + int(ref["length"]), i, key))
    spans.sort()
    for (s0, e0, i0, k0), (s1, e1, i1, k1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise ContainerError(
                f"tensor regions overlap: layer {i0} {k0} [{s0},{e0}) and layer {i1} {k1} [{s1},{e1})",
                offset=header_end + s1,
            )
    if spans and spans[-1][1] > payload_len:
        raise ContainerError("tensor regions extend past payload end", offset=header_end)


def load_model(path: str, self_check: bool = True) -> CpwlNetwork:
    """Load and validate an SPLC v1 container into a network."""
    with open(path, "rb") as fh:
        raw = fh.read()
    header, payload = _parse_container(raw)
    header_end = len(raw) - len(payload)

    entries = header.get("layers")
    if not isinstance(entries, list) or not entries:
        raise ContainerError("header declares no layers", offset=16)
    _check_tensor_overlaps(entries, len(payload), header_end)

    layers: list[LayerSpec] = []
    for i, entry in enumerate(entries):
        kind = entry.get("kind")
        act = _activation_from_json(entry.get("activation", {"kind": "identity"}))
        if kind == "dense":
            w = _read_tensor(payload, entry["weight"], header_end, f"layer {i} weight")
            b = _read_tensor(payload, entry["bias"], header_end, f"layer {i} bias")
            layers.append(dense_layer(w, b, act))
        elif kind == "conv2d":
            k = _read_tensor(payload, entry["kernel"], header_end, f"layer {i} kernel")
            b = _read_tensor(payload, entry["bias"], header_end, f"layer {i} bias")
            layers.append(
                conv2d_layer(
                    k,
                    b,
                    input_shape=tuple(entry["input_shape"]),
                    stride=tuple(entry.get("stride", (1, 1))),
                    padding=tuple(entry.get("padding", (0, 0))),
                    activation=act,
                )
            )
        elif kind == "avgpool2d":
            layers.append(
                avgpool2d_layer(
                    kernel=tuple(entry["kernel_size"]),
                    input_shape=tuple(entry["input_shape"]),
                    stride=tuple(entry.get("stride") or entry["kernel_size"]),
                    activation=act,
                )
            )
        elif kind == "flatten":
            layers.append(flatten_layer(tuple(entry["input_shape"])))
        elif kind in ("maxpool2d", "maxpool"):
            raise ModelError(
                f"layer {i} is a max-pool layer, which has no exact piecewise-linear "
                "lowering here; replace it with an average pool of the same window "
                "before export"
            )
        else:
            raise ContainerError(f"layer {i} has unknown kind {kind!r}", offset=16)

    try:
        net = CpwlNetwork(layers)
    except ModelError as exc:
        raise ContainerError(f"layer shapes do not chain: {exc}", offset=16) from exc

    declared_in = header.get("input_dim")
    if declared_in is not None and declared_in != net.input_dim:
        raise ContainerError(
            f"declared input_dim {declared_in} does not match layers ({net.input_dim})", offset=16
        )
    declared_out = header.get("output_dim")
    if declared_out is not None and declared_out != net.output_dim:
        raise ContainerError(
            f"declared output_dim {declared_out} does not match layers ({net.output_dim})",
            offset=16,
        )

    if self_check:
        forward_equivalence_check(net)
        ref = header.get("reference_io")
        if ref is not None:
            reference_io_check(net, ref)
    return net


def forward_equivalence_check(
    net: CpwlNetwork, n: int = SELF_CHECK_INPUTS, tol: float = FORWARD_CHECK_TOL
) -> float:
    """Structured vs lowered forward on seeded random inputs. Returns the
    max discrepancy; raises when it exceeds the tolerance."""
    rng = np.random.default_rng(SELF_CHECK_SEED)
    worst = 0.0
    for _ in range(n):
        x = rng.normal(size=net.input_dim)
        a = structured_forward(net, x)
        b = forward(net, x)[-1]
        worst = max(worst, float(np.max(np.abs(a - b))) if a.size else 0.0)
    if worst > tol:
        raise ModelError(
            f"model self-check failed: structured and lowered forward differ by {worst:.3e} "
            f"(tolerance {tol:.0e})"
        )
    return worst


def reference_discrepancies(net: CpwlNetwork, reference_io: dict) -> np.ndarray:
    """Per-pair max-abs difference between recorded outputs and forward."""
    inputs = np.asarray(reference_io.get("inputs", []), dtype=np.float64)
    outputs = np.asarray(reference_io.get("outputs", []), dtype=np.float64)
    if inputs.ndim != 2 or outputs.ndim != 2 or len(inputs) != len(outputs) or not len(inputs):
        raise ContainerError("reference_io block is malformed")
    return np.array(
        [float(np.max(np.abs(forward(net, x)[-1] - y))) for x, y in zip(inputs, outputs)]
    )


def reference_io_check(net: CpwlNetwork, reference_io: dict, tol: float = FORWARD_CHECK_TOL) -> float:
    """Replay recorded input/output pairs. Returns max discrepancy; raises
    beyond tolerance."""
    worst = float(reference_discrepancies(net, reference_io).max())
    if worst > tol:
        raise ModelError(
            f"recorded reference outputs differ from forward by {worst:.3e} (tolerance {tol:.0e})"
        )
    return worst


def load_roi(path: str) -> Roi:
    """ROI from a JSON spec file: either anchors or center+directions,
    optional half_extent and explicit domain polygon."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise RoiError(f"ROI file is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise RoiError("ROI spec must be a JSON object")
    domain = None
    if "domain" in spec:
        domain = ConvexPoly2(np.asarray(spec["domain"], dtype=np.float64))
    return make_roi(
        anchors=spec.get("anchors"),
        center=spec.get("center"),
        directions=spec.get("directions"),
        half_extent=float(spec.get("half_extent", 1.0)),
        domain=domain,
    )
