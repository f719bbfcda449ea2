"""Sequential torch model -> SPLC v1 container.

Supported modules: Linear, Conv2d, AvgPool2d, Flatten, ReLU, LeakyReLU,
Hardtanh, PiecewiseLinear, BatchNorm1d/2d (eval-mode statistics folded
into the adjacent linear layer, or emitted as a diagonal linear layer
when standalone), Dropout/Identity (inference no-ops, skipped). MaxPool
has no exact piecewise-linear lowering in this pipeline and is rejected
with a substitution hint.

Every export re-evaluates the emitted tensors with an internal numpy
forward pass against the torch model in double precision; discrepancies
above 1e-10 abort the export. A block of seeded reference input/output
pairs is embedded in the container so the core engine can replay them
(`splc verify`).
"""

from __future__ import annotations

import copy
import json
import shutil
import subprocess
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .modules import PiecewiseLinear
from .writer import write_container

PARITY_TOL = 1e-10
PARITY_SEED = 20240
REFERENCE_SEED = 31337
DEFAULT_REFERENCE_N = 5


class ExportError(RuntimeError):
    pass


class RoundTripError(RuntimeError):
    """Raised when core-engine replay disagrees with the framework.

    Carries the worst input so the failure is reproducible.
    """

    def __init__(self, message, worst_input=None, discrepancy=None):
        super().__init__(message)
        self.worst_input = worst_input
        self.discrepancy = discrepancy


@dataclass
class ExportReport:
    path: str
    layer_mapping: list = field(default_factory=list)  # (source idx, source name, action)
    folded: list = field(default_factory=list)  # (source idx, source name, target entry idx)
    max_discrepancy: float = 0.0
    n_layers: int = 0

    def __str__(self) -> str:
        rows = "\n".join(f"  [{i}] {name}: {action}" for i, name, action in self.layer_mapping)
        return (
            f"exported {self.n_layers} layers to {self.path} "
            f"(max parity discrepancy {self.max_discrepancy:.3e})\n{rows}"
        )


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().double().numpy()


def _activation_of(mod: nn.Module) -> dict:
    if isinstance(mod, nn.ReLU):
        return {"kind": "relu"}
    if isinstance(mod, nn.LeakyReLU):
        return {"kind": "leaky_relu", "alpha": float(mod.negative_slope)}
    if isinstance(mod, nn.Hardtanh):
        # clamp to [min_val, max_val]: slopes 0,1,0 around the two knees
        return {
            "kind": "pwl",
            "breakpoints": [float(mod.min_val), float(mod.max_val)],
            "slopes": [0.0, 1.0, 0.0],
            "value_at_zero": float(np.clip(0.0, mod.min_val, mod.max_val)),
        }
    if isinstance(mod, PiecewiseLinear):
        return {
            "kind": "pwl",
            "breakpoints": [float(v) for v in mod.breakpoints],
            "slopes": [float(v) for v in mod.slopes],
            "value_at_zero": mod.value_at_zero,
        }
    raise ExportError(f"unsupported activation {type(mod).__name__}")


_ACTIVATIONS = (nn.ReLU, nn.LeakyReLU, nn.Hardtanh, PiecewiseLinear)
_SKIPPED = (nn.Dropout, nn.Dropout1d, nn.Dropout2d, nn.Identity)


def _bn_scale_shift(bn) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode BN as the per-channel affine y = d*x + e."""
    var = _np(bn.running_var)
    mean = _np(bn.running_mean)
    gamma = _np(bn.weight) if bn.affine else np.ones_like(var)
    beta = _np(bn.bias) if bn.affine else np.zeros_like(var)
    d = gamma / np.sqrt(var + bn.eps)
    return d, beta - d * mean


def _conv_out_hw(h, w, kh, kw, sh, sw, ph, pw):
    return (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1


class _ShapeTracker:
    """Follows the data shape through the stack: image (c, h, w) or flat n."""

    def __init__(self, input_shape):
        self.chw = tuple(int(v) for v in input_shape) if input_shape is not None else None
        self.flat = None

    def require_chw(self, idx, name):
        if self.chw is None:
            raise ExportError(
                f"layer {idx} ({name}) needs an image shape; pass input_shape=(c, h, w)"
            )
        return self.chw

    def require_flat(self, idx, name, expected):
        if self.chw is not None:
            raise ExportError(
                f"layer {idx} ({name}) expects a flat vector but the data is still "
                f"{self.chw}; insert Flatten first"
            )
        if self.flat is not None and self.flat != expected:
            raise ExportError(
                f"layer {idx} ({name}) expects {expected} features, previous layer "
                f"produced {self.flat}"
            )


def _emit_entries(model: nn.Sequential, input_shape) -> tuple[list, list, list, int, int]:
    """Walk the Sequential and produce container entries plus report rows."""
    if not isinstance(model, nn.Sequential):
        raise ExportError(f"expected a Sequential model, got {type(model).__name__}")
    entries: list[dict] = []
    mapping: list[tuple] = []
    folded: list[tuple] = []
    shape = _ShapeTracker(input_shape)

    def last_foldable(kind: str) -> dict | None:
        if entries and entries[-1]["kind"] == kind and entries[-1]["activation"]["kind"] == "identity":
            return entries[-1]
        return None

    for idx, mod in enumerate(model):
        name = type(mod).__name__
        if isinstance(mod, nn.Linear):
            shape.require_flat(idx, name, mod.in_features)
            w = _np(mod.weight)
            b = _np(mod.bias) if mod.bias is not None else np.zeros(mod.out_features)
            entries.append({"kind": "dense", "weight": w, "bias": b, "activation": {"kind": "identity"}})
            shape.flat = mod.out_features
            mapping.append((idx, name, "dense"))

        elif isinstance(mod, nn.Conv2d):
            c, h, w_ = shape.require_chw(idx, name)
            if mod.in_channels != c:
                raise ExportError(f"layer {idx} ({name}) expects {mod.in_channels} channels, data has {c}")
            if mod.groups != 1 or mod.dilation != (1, 1):
                raise ExportError(f"layer {idx} ({name}): only groups=1, dilation=1 supported")
            if mod.padding_mode != "zeros" or isinstance(mod.padding, str):
                raise ExportError(f"layer {idx} ({name}): only explicit zero padding supported")
            k = _np(mod.weight)  # (out_ch, in_ch, kh, kw)
            b = _np(mod.bias) if mod.bias is not None else np.zeros(mod.out_channels)
            entries.append(
                {
                    "kind": "conv2d",
                    "kernel": k,
                    "bias": b,
                    "input_shape": (c, h, w_),
                    "stride": tuple(mod.stride),
                    "padding": tuple(mod.padding),
                    "activation": {"kind": "identity"},
                }
            )
            ho, wo = _conv_out_hw(h, w_, k.shape[2], k.shape[3], *mod.stride, *mod.padding)
            shape.chw = (mod.out_channels, ho, wo)
            mapping.append((idx, name, "conv2d"))

        elif isinstance(mod, nn.BatchNorm1d):
            d, e = _bn_scale_shift(mod)
            target = last_foldable("dense")
            if target is not None:
                target["weight"] = d[:, None] * target["weight"]
                target["bias"] = d * target["bias"] + e
                folded.append((idx, name, len(entries) - 1))
                mapping.append((idx, name, "folded into preceding dense"))
            else:
                shape.require_flat(idx, name, mod.num_features)
                entries.append(
                    {"kind": "dense", "weight": np.diag(d), "bias": e, "activation": {"kind": "identity"}}
                )
                shape.flat = mod.num_features
                mapping.append((idx, name, "dense (diagonal)"))

        elif isinstance(mod, nn.BatchNorm2d):
            d, e = _bn_scale_shift(mod)
            target = last_foldable("conv2d")
            if target is not None:
                target["kernel"] = d[:, None, None, None] * target["kernel"]
                target["bias"] = d * target["bias"] + e
                folded.append((idx, name, len(entries) - 1))
                mapping.append((idx, name, "folded into preceding conv2d"))
            else:
                c, h, w_ = shape.require_chw(idx, name)
                if mod.num_features != c:
                    raise ExportError(f"layer {idx} ({name}) normalizes {mod.num_features} channels, data has {c}")
                kernel = np.zeros((c, c, 1, 1))
                kernel[np.arange(c), np.arange(c), 0, 0] = d
                entries.append(
                    {
                        "kind": "conv2d",
                        "kernel": kernel,
                        "bias": e,
                        "input_shape": (c, h, w_),
                        "stride": (1, 1),
                        "padding": (0, 0),
                        "activation": {"kind": "identity"},
                    }
                )
                mapping.append((idx, name, "conv2d (diagonal 1x1)"))

        elif isinstance(mod, _ACTIVATIONS):
            if not entries:
                raise ExportError(f"layer {idx} ({name}): activation with no preceding linear layer")
            if entries[-1]["activation"]["kind"] != "identity":
                raise ExportError(f"layer {idx} ({name}): two activations in a row")
            entries[-1]["activation"] = _activation_of(mod)
            mapping.append((idx, name, "activation on previous layer"))

        elif isinstance(mod, nn.AvgPool2d):
            c, h, w_ = shape.require_chw(idx, name)
            kh, kw = (mod.kernel_size,) * 2 if isinstance(mod.kernel_size, int) else mod.kernel_size
            stride = mod.stride if mod.stride is not None else (kh, kw)
            sh, sw = (stride, stride) if isinstance(stride, int) else stride
            pad = (mod.padding, mod.padding) if isinstance(mod.padding, int) else mod.padding
            if tuple(pad) != (0, 0):
                raise ExportError(f"layer {idx} ({name}): padded average pooling not supported")
            if mod.ceil_mode:
                raise ExportError(f"layer {idx} ({name}): ceil_mode not supported")
            entries.append(
                {
                    "kind": "avgpool2d",
                    "input_shape": (c, h, w_),
                    "kernel_size": (kh, kw),
                    "stride": (sh, sw),
                    "activation": {"kind": "identity"},
                }
            )
            shape.chw = (c, (h - kh) // sh + 1, (w_ - kw) // sw + 1)
            mapping.append((idx, name, "avgpool2d"))

        elif isinstance(mod, (nn.MaxPool2d, nn.MaxPool1d, nn.AdaptiveMaxPool2d)):
            raise ExportError(
                f"layer {idx} ({name}): max pooling has no exact piecewise-linear lowering "
                "here; replace it with AvgPool2d of the same window before export"
            )

        elif isinstance(mod, nn.Flatten):
            c, h, w_ = shape.require_chw(idx, name)
            entries.append({"kind": "flatten", "input_shape": (c, h, w_), "activation": {"kind": "identity"}})
            shape.chw = None
            shape.flat = c * h * w_
            mapping.append((idx, name, "flatten"))

        elif isinstance(mod, _SKIPPED):
            mapping.append((idx, name, "skipped (inference identity)"))

        else:
            raise ExportError(f"layer {idx} ({name}): unsupported module kind")

    if not entries:
        raise ExportError("model produced no exportable layers")
    if input_shape is not None:
        input_dim = int(np.prod(input_shape))
    else:
        first = next(e for e in entries if e["kind"] == "dense")
        input_dim = first["weight"].shape[1]
    output_dim = _entry_out_dim(entries[-1])
    return entries, mapping, folded, input_dim, output_dim


def _entry_out_dim(entry: dict) -> int:
    if entry["kind"] == "dense":
        return entry["weight"].shape[0]
    if entry["kind"] == "conv2d":
        c, h, w = entry["input_shape"]
        kh, kw = entry["kernel"].shape[2], entry["kernel"].shape[3]
        ho, wo = _conv_out_hw(h, w, kh, kw, *entry["stride"], *entry["padding"])
        return entry["kernel"].shape[0] * ho * wo
    if entry["kind"] == "avgpool2d":
        c, h, w = entry["input_shape"]
        kh, kw = entry["kernel_size"]
        sh, sw = entry["stride"]
        return c * ((h - kh) // sh + 1) * ((w - kw) // sw + 1)
    c, h, w = entry["input_shape"]
    return c * h * w


# internal numpy evaluation of emitted entries, used only to gate exports


def _eval_activation(act: dict, z: np.ndarray) -> np.ndarray:
    kind = act["kind"]
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z >= 0.0, z, act["alpha"] * z)
    bp = np.asarray(act["breakpoints"], dtype=np.float64)
    sl = np.asarray(act["slopes"], dtype=np.float64)
    off = np.zeros_like(sl)
    k0 = int(np.searchsorted(bp, 0.0, side="right"))
    off[k0] = act.get("value_at_zero", 0.0)
    for k in range(k0 + 1, len(sl)):
        off[k] = off[k - 1] + (sl[k - 1] - sl[k]) * bp[k - 1]
    for k in range(k0 - 1, -1, -1):
        off[k] = off[k + 1] + (sl[k + 1] - sl[k]) * bp[k]
    seg = np.searchsorted(bp, z, side="right")
    return sl[seg] * z + off[seg]


def _eval_entries(entries: list, x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=np.float64)
    for entry in entries:
        kind = entry["kind"]
        if kind == "dense":
            z = entry["weight"] @ z + entry["bias"]
        elif kind == "conv2d":
            c, h, w = entry["input_shape"]
            kh, kw = entry["kernel"].shape[2], entry["kernel"].shape[3]
            sh, sw = entry["stride"]
            ph, pw = entry["padding"]
            img = z.reshape(c, h, w)
            padded = np.pad(img, ((0, 0), (ph, ph), (pw, pw)))
            ho, wo = _conv_out_hw(h, w, kh, kw, sh, sw, ph, pw)
            out = np.empty((entry["kernel"].shape[0], ho, wo))
            for o in range(out.shape[0]):
                for i_ in range(ho):
                    for j in range(wo):
                        patch = padded[:, i_ * sh : i_ * sh + kh, j * sw : j * sw + kw]
                        out[o, i_, j] = np.sum(patch * entry["kernel"][o]) + entry["bias"][o]
            z = out.reshape(-1)
        elif kind == "avgpool2d":
            c, h, w = entry["input_shape"]
            kh, kw = entry["kernel_size"]
            sh, sw = entry["stride"]
            img = z.reshape(c, h, w)
            ho, wo = (h - kh) // sh + 1, (w - kw) // sw + 1
            out = np.empty((c, ho, wo))
            for i_ in range(ho):
                for j in range(wo):
                    out[:, i_, j] = img[:, i_ * sh : i_ * sh + kh, j * sw : j * sw + kw].mean(axis=(1, 2))
            z = out.reshape(-1)
        else:  # flatten
            pass
        z = _eval_activation(entry["activation"], z)
    return z


def _torch_forward(model: nn.Sequential, X: np.ndarray, input_shape) -> np.ndarray:
    dbl = copy.deepcopy(model).double().eval()
    with torch.no_grad():
        t = torch.from_numpy(X)
        if input_shape is not None:
            t = t.reshape(len(X), *input_shape)
        out = dbl(t)
    return out.reshape(len(X), -1).numpy()


def export_model(
    model: nn.Sequential,
    path: str,
    input_shape: tuple | None = None,
    reference_n: int = DEFAULT_REFERENCE_N,
) -> ExportReport:
    """Convert, self-check, and write the container.

    The model is evaluated in double precision and eval mode. Export
    fails if the emitted tensors disagree with the framework forward by
    more than 1e-10 on seeded random inputs.
    """
    entries, mapping, folded, input_dim, output_dim = _emit_entries(model, input_shape)

    rng = np.random.default_rng(PARITY_SEED)
    X = rng.normal(size=(8, input_dim))
    ours = np.stack([_eval_entries(entries, x) for x in X])
    theirs = _torch_forward(model, X, input_shape)
    worst = float(np.max(np.abs(ours - theirs)))
    if worst > PARITY_TOL:
        raise ExportError(
            f"export parity check failed: emitted tensors disagree with the framework "
            f"forward by {worst:.3e} (tolerance {PARITY_TOL:.0e})"
        )

    reference_io = None
    if reference_n > 0:
        rng_ref = np.random.default_rng(REFERENCE_SEED)
        Xr = rng_ref.normal(size=(reference_n, input_dim))
        Yr = _torch_forward(model, Xr, input_shape)
        reference_io = {"inputs": Xr.tolist(), "outputs": Yr.tolist()}

    write_container(entries, input_dim, output_dim, path, reference_io=reference_io)
    return ExportReport(
        path=path,
        layer_mapping=mapping,
        folded=folded,
        max_discrepancy=worst,
        n_layers=len(entries),
    )


def _run_core_verify(path: str) -> dict:
    exe = shutil.which("splc")
    if exe is None:
        raise RoundTripError("core CLI 'splc' not found on PATH; install the core package")
    proc = subprocess.run([exe, "verify", "--model", path], capture_output=True, text=True)
    try:
        summary = json.loads(proc.stdout.strip().splitlines()[-1])
    except (IndexError, json.JSONDecodeError):
        raise RoundTripError(
            f"core verify produced no summary (exit {proc.returncode}): {proc.stderr.strip()}"
        )
    summary["_exit"] = proc.returncode
    return summary


def verify_roundtrip(
    model: nn.Sequential,
    path: str,
    n: int = 16,
    input_shape: tuple | None = None,
) -> float:
    """Export with n reference pairs and have the core engine replay them.

    Returns the max absolute discrepancy between the framework forward
    and the core engine's forward. Raises RoundTripError above 1e-10,
    recording the offending input.
    """
    export_model(model, path, input_shape=input_shape, reference_n=n)
    summary = _run_core_verify(path)
    if "error" in summary:
        raise RoundTripError(f"core verify failed: {summary['error']}")
    disc = summary.get("max_reference_discrepancy")
    if disc is None:
        raise RoundTripError("core verify reported no reference discrepancy")
    if summary["_exit"] != 0 or disc > PARITY_TOL or not summary.get("equivalence_pass", False):
        _, _, _, input_dim, _ = _emit_entries(model, input_shape)
        Xr = np.random.default_rng(REFERENCE_SEED).normal(size=(n, input_dim))
        idx = int(summary.get("worst_reference_index") or 0)
        raise RoundTripError(
            f"round trip exceeded tolerance: {disc:.3e} at input {idx}",
            worst_input=Xr[idx],
            discrepancy=disc,
        )
    return float(disc)
