"""CPWL networks: layer specs, evaluation, and per-region affine maps.

A network is an ordered list of layers, each a linear map (dense, conv,
avgpool, or flatten) followed by an element-wise piecewise-linear
activation. Every layer is lowered to an explicit matrix at construction
(sparse for structured layers), so evaluation and the geometric pipeline
share one set of matrix semantics.

Within a linear region the composition up to layer l, restricted to a 2D
slice x = T u + c, is an affine map z(u) = A_hat u + b_hat with A_hat of
shape (out_dim, 2). ``advance_affine`` pushes such a map through one more
layer given the region's activation segments:

    A_new = diag(s) (W A_hat)
    b_new = diag(s) (W b_hat + b) + o

where (s, o) are the active segment's slopes and offsets. For relu-family
activations o = 0 and diag(s) is the usual binary mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .activations import ActivationDescriptor, identity
from .errors import ModelError
from .lowering import avgpool2d_matrix, conv2d_matrix

__all__ = [
    "LayerSpec",
    "CpwlNetwork",
    "ActivationState",
    "SliceAffine",
    "dense_layer",
    "conv2d_layer",
    "avgpool2d_layer",
    "flatten_layer",
    "forward",
    "forward_batch",
    "structured_forward",
    "lower_to_dense",
    "activation_state",
    "activation_patterns",
    "advance_affine",
]


@dataclass(frozen=True, eq=False)
class LayerSpec:
    """One layer: a linear map plus an element-wise activation.

    ``params`` holds the kind-specific fields (dense: weight/bias; conv2d:
    kernel/bias/stride/padding/input_shape; avgpool2d: kernel/stride/
    input_shape; flatten: input_shape).
    """

    kind: str
    activation: ActivationDescriptor
    in_dim: int
    out_dim: int
    params: dict

    def __repr__(self) -> str:
        return f"LayerSpec({self.kind}, {self.in_dim}->{self.out_dim}, {self.activation.kind})"


def dense_layer(weight, bias, activation: ActivationDescriptor | None = None) -> LayerSpec:
    w = np.asarray(weight, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if w.ndim != 2 or b.shape != (w.shape[0],):
        raise ModelError(f"dense layer shapes inconsistent: W {w.shape}, b {b.shape}")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
        raise ModelError("dense layer has non-finite parameters")
    return LayerSpec(
        kind="dense",
        activation=activation or identity(),
        in_dim=w.shape[1],
        out_dim=w.shape[0],
        params={"weight": w, "bias": b},
    )


def conv2d_layer(
    kernel,
    bias,
    input_shape: tuple,
    stride: tuple = (1, 1),
    padding: tuple = (0, 0),
    activation: ActivationDescriptor | None = None,
) -> LayerSpec:
    k = np.asarray(kernel, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if k.ndim != 4 or b.shape != (k.shape[0],):
        raise ModelError(f"conv2d shapes inconsistent: kernel {k.shape}, bias {b.shape}")
    if not (np.all(np.isfinite(k)) and np.all(np.isfinite(b))):
        raise ModelError("conv2d layer has non-finite parameters")
    c, h, w = input_shape
    kh, kw = k.shape[2], k.shape[3]
    ho = (h + 2 * padding[0] - kh) // stride[0] + 1
    wo = (w + 2 * padding[1] - kw) // stride[1] + 1
    return LayerSpec(
        kind="conv2d",
        activation=activation or identity(),
        in_dim=c * h * w,
        out_dim=k.shape[0] * ho * wo,
        params={
            "kernel": k,
            "bias": b,
            "input_shape": (int(c), int(h), int(w)),
            "output_shape": (int(k.shape[0]), int(ho), int(wo)),
            "stride": (int(stride[0]), int(stride[1])),
            "padding": (int(padding[0]), int(padding[1])),
        },
    )


def avgpool2d_layer(
    kernel: tuple,
    input_shape: tuple,
    stride: tuple | None = None,
    activation: ActivationDescriptor | None = None,
) -> LayerSpec:
    stride = stride or kernel
    c, h, w = input_shape
    ho = (h - kernel[0]) // stride[0] + 1
    wo = (w - kernel[1]) // stride[1] + 1
    return LayerSpec(
        kind="avgpool2d",
        activation=activation or identity(),
        in_dim=c * h * w,
        out_dim=c * ho * wo,
        params={
            "kernel": (int(kernel[0]), int(kernel[1])),
            "stride": (int(stride[0]), int(stride[1])),
            "input_shape": (int(c), int(h), int(w)),
            "output_shape": (int(c), int(ho), int(wo)),
        },
    )


def flatten_layer(input_shape: tuple) -> LayerSpec:
    c, h, w = input_shape
    n = c * h * w
    return LayerSpec(
        kind="flatten",
        activation=identity(),
        in_dim=n,
        out_dim=n,
        params={"input_shape": (int(c), int(h), int(w))},
    )


def lower_to_dense(layer: LayerSpec):
    """Explicit (matrix, bias) of the layer's linear part.

    Dense layers return their ndarray weight; structured layers return a
    CSR matrix so single rows stay cheap to query. The product
    matrix @ vec(input) + bias equals the structured layer exactly.
    """
    if layer.kind == "dense":
        return layer.params["weight"], layer.params["bias"]
    if layer.kind == "conv2d":
        p = layer.params
        return conv2d_matrix(p["kernel"], p["bias"], p["input_shape"], p["stride"], p["padding"])
    if layer.kind == "avgpool2d":
        p = layer.params
        return avgpool2d_matrix(p["kernel"], p["stride"], p["input_shape"])
    if layer.kind == "flatten":
        return sp.identity(layer.in_dim, format="csr"), np.zeros(layer.in_dim)
    raise ModelError(f"unsupported layer kind '{layer.kind}'")


class CpwlNetwork:
    """Immutable network; lowered matrices are computed at construction."""

    def __init__(self, layers: list):
        if not layers:
            raise ModelError("network needs at least one layer")
        for i, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.out_dim != b.in_dim:
                raise ModelError(
                    f"layer {i} output dim {a.out_dim} does not match layer {i + 1} input dim {b.in_dim}"
                )
        self.layers = list(layers)
        self.input_dim = layers[0].in_dim
        self.output_dim = layers[-1].out_dim
        self.lowered = [lower_to_dense(layer) for layer in self.layers]

    def __len__(self) -> int:
        return len(self.layers)

    def __repr__(self) -> str:
        dims = " -> ".join([str(self.input_dim)] + [str(l.out_dim) for l in self.layers])
        return f"CpwlNetwork({dims})"


@dataclass(frozen=True, eq=False)
class SliceAffine:
    """Affine map u -> A @ u + b from slice coordinates to a layer output."""

    A: np.ndarray
    b: np.ndarray

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.A @ np.asarray(u, dtype=np.float64) + self.b

    def at_points(self, U: np.ndarray) -> np.ndarray:
        """Evaluate at a batch of points, shape (n, 2) -> (n, out_dim)."""
        return np.asarray(U, dtype=np.float64) @ self.A.T + self.b


@dataclass(frozen=True, eq=False)
class ActivationState:
    """Per-layer, per-unit activation segment selectors for one region."""

    segments: tuple

    def pairs(self, net: CpwlNetwork) -> list:
        """Per-layer (slope, offset) arrays for the selected segments."""
        return [
            net.layers[i].activation.slope_offset(seg)
            for i, seg in enumerate(self.segments)
        ]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ActivationState):
            return NotImplemented
        return len(self.segments) == len(other.segments) and all(
            np.array_equal(a, b) for a, b in zip(self.segments, other.segments)
        )


def _apply_linear(lowered, x: np.ndarray) -> np.ndarray:
    mat, bias = lowered
    return mat @ x + bias


def forward(net: CpwlNetwork, x) -> list:
    """Post-activation outputs of every layer; the last entry is the
    network output. Uses the lowered matrices, so matrix semantics and
    forward semantics coincide by construction."""
    z = np.asarray(x, dtype=np.float64)
    if z.shape != (net.input_dim,):
        raise ModelError(f"input shape {z.shape} does not match input dim {net.input_dim}")
    if not np.all(np.isfinite(z)):
        raise ModelError("input has non-finite entries")
    outputs = []
    for layer, lowered in zip(net.layers, net.lowered):
        pre = _apply_linear(lowered, z)
        z = layer.activation.evaluate(pre)
        outputs.append(z)
    return outputs


def forward_batch(net: CpwlNetwork, X) -> np.ndarray:
    """Network output for a batch of inputs, shape (n, S) -> (n, out_dim)."""
    Z = np.asarray(X, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != net.input_dim:
        raise ModelError(f"batch shape {Z.shape} does not match input dim {net.input_dim}")
    for layer, (mat, bias) in zip(net.layers, net.lowered):
        pre = (mat @ Z.T).T + bias
        Z = layer.activation.evaluate(pre)
    return Z


def activation_state(net: CpwlNetwork, x) -> ActivationState:
    """Segment selector of every unit at input x; breakpoint ties resolve
    to the right-hand segment."""
    z = np.asarray(x, dtype=np.float64)
    if z.shape != (net.input_dim,):
        raise ModelError(f"input shape {z.shape} does not match input dim {net.input_dim}")
    segments = []
    for layer, lowered in zip(net.layers, net.lowered):
        pre = _apply_linear(lowered, z)
        seg = layer.activation.segment_of(pre)
        segments.append(seg.astype(np.int16))
        z = layer.activation.evaluate(pre)
    return ActivationState(segments=tuple(segments))


def activation_patterns(net: CpwlNetwork, X) -> list:
    """Per-layer segment selectors for a batch, each (n, layer_out_dim)."""
    Z = np.asarray(X, dtype=np.float64)
    patterns = []
    for layer, (mat, bias) in zip(net.layers, net.lowered):
        pre = (mat @ Z.T).T + bias
        patterns.append(layer.activation.segment_of(pre).astype(np.int16))
        Z = layer.activation.evaluate(pre)
    return patterns


def structured_forward(net: CpwlNetwork, x) -> np.ndarray:
    """Network output evaluated directly on the structured layers (sliding
    windows for conv, window means for pooling), bypassing the lowered
    matrices. Serves as the independent side of the model self-check."""
    from scipy.signal import correlate2d

    z = np.asarray(x, dtype=np.float64)
    if z.shape != (net.input_dim,):
        raise ModelError(f"input shape {z.shape} does not match input dim {net.input_dim}")
    for layer in net.layers:
        if layer.kind == "dense":
            pre = layer.params["weight"] @ z + layer.params["bias"]
        elif layer.kind == "conv2d":
            p = layer.params
            c, h, w = p["input_shape"]
            sh, sw = p["stride"]
            ph, pw = p["padding"]
            img = np.pad(z.reshape(c, h, w), ((0, 0), (ph, ph), (pw, pw)))
            planes = []
            for o in range(p["kernel"].shape[0]):
                acc = sum(
                    correlate2d(img[ci], p["kernel"][o, ci], mode="valid")
                    for ci in range(c)
                )
                planes.append(acc[::sh, ::sw] + p["bias"][o])
            pre = np.stack(planes).ravel()
        elif layer.kind == "avgpool2d":
            p = layer.params
            c, h, w = p["input_shape"]
            kh, kw = p["kernel"]
            sh, sw = p["stride"]
            _, ho, wo = p["output_shape"]
            img = z.reshape(c, h, w)
            acc = np.zeros((c, ho, wo))
            for di in range(kh):
                for dj in range(kw):
                    acc += img[:, di : di + ho * sh : sh, dj : dj + wo * sw : sw]
            pre = (acc / (kh * kw)).ravel()
        elif layer.kind == "flatten":
            pre = z
        else:
            raise ModelError(f"unsupported layer kind '{layer.kind}'")
        z = layer.activation.evaluate(pre)
    return z


def advance_affine(prev: SliceAffine, layer: LayerSpec, segments: np.ndarray) -> SliceAffine:
    """Push a slice-restricted affine map through one layer, given the
    per-unit activation segments active in the region."""
    mat, bias = lower_to_dense(layer)
    G = mat @ prev.A
    g = mat @ prev.b + bias
    return _advance_from_preact(layer, G, g, segments)


def _advance_from_preact(
    layer: LayerSpec, G: np.ndarray, g: np.ndarray, segments: np.ndarray
) -> SliceAffine:
    """Apply the activation's (slope, offset) to a pre-activation affine."""
    if segments.shape != (layer.out_dim,):
        raise ModelError(
            f"state length {segments.shape} does not match layer output dim {layer.out_dim}"
        )
    s, o = layer.activation.slope_offset(segments)
    return SliceAffine(A=s[:, None] * G, b=s * g + o)
