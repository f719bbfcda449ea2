"""Lowering structured layers to explicit matrices.

Convolution and pooling layers act on flattened channel-major vectors
(index of cell ``(c, i, j)`` of a CxHxW tensor is ``(c*H + i)*W + j``).
Lowered matrices are kept sparse (CSR) so individual rows stay cheap to
query; dense materialization is only allowed under a size limit.

The convolution matrix is the classic doubly-blocked Toeplitz form: row
``(o, i, j)`` holds kernel entry ``K[o, c, di, dj]`` at the column of
input cell ``(c, i*sh - ph + di, j*sw - pw + dj)`` whenever that cell is
in bounds (zero padding contributes nothing).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .config import DEFAULT_TOL, Tolerances
from .errors import ModelError

__all__ = ["conv2d_matrix", "avgpool2d_matrix", "to_dense_matrix"]


def conv2d_matrix(
    kernel: np.ndarray,
    bias: np.ndarray,
    input_shape: tuple,
    stride: tuple,
    padding: tuple,
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Sparse matrix and bias vector equal to the zero-padded convolution."""
    out_ch, in_ch, kh, kw = kernel.shape
    c_in, h, w = input_shape
    if c_in != in_ch:
        raise ModelError(f"conv kernel expects {in_ch} channels, input has {c_in}")
    sh, sw = stride
    ph, pw = padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ModelError(f"conv output shape ({ho},{wo}) is empty for input {input_shape}")

    # geometry shared by every (out channel, in channel) pair:
    # receptive-field source cell per (i, j, di, dj), with validity mask
    i_idx = np.arange(ho)[:, None, None, None]
    j_idx = np.arange(wo)[None, :, None, None]
    di = np.arange(kh)[None, None, :, None]
    dj = np.arange(kw)[None, None, None, :]
    r = i_idx * sh - ph + di
    c = j_idx * sw - pw + dj
    valid = (r >= 0) & (r < h) & (c >= 0) & (c < w)
    out_cell = np.broadcast_to(i_idx * wo + j_idx, valid.shape)[valid]
    src_cell = (r * w + c)[valid]
    ker_di = np.broadcast_to(di, valid.shape)[valid]
    ker_dj = np.broadcast_to(dj, valid.shape)[valid]

    plane = h * w
    out_plane = ho * wo
    rows_parts = []
    cols_parts = []
    vals_parts = []
    for o in range(out_ch):
        for ci in range(in_ch):
            rows_parts.append(out_cell + o * out_plane)
            cols_parts.append(src_cell + ci * plane)
            vals_parts.append(kernel[o, ci, ker_di, ker_dj])
    mat = sp.coo_matrix(
        (np.concatenate(vals_parts), (np.concatenate(rows_parts), np.concatenate(cols_parts))),
        shape=(out_ch * out_plane, in_ch * plane),
    ).tocsr()
    bias_vec = np.repeat(np.asarray(bias, dtype=np.float64), out_plane)
    return mat, bias_vec


def avgpool2d_matrix(
    kernel: tuple, stride: tuple, input_shape: tuple
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Row-stochastic pooling matrix: each row averages one window."""
    c_in, h, w = input_shape
    kh, kw = kernel
    sh, sw = stride
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ModelError(f"avgpool output shape ({ho},{wo}) is empty for input {input_shape}")
    weight = 1.0 / (kh * kw)

    i_idx = np.arange(ho)[:, None, None, None]
    j_idx = np.arange(wo)[None, :, None, None]
    di = np.arange(kh)[None, None, :, None]
    dj = np.arange(kw)[None, None, None, :]
    r = i_idx * sh + di
    c = j_idx * sw + dj
    src = r * w + c  # (ho, wo, kh, kw)
    out_cell = np.broadcast_to(i_idx * wo + j_idx, src.shape).ravel()
    src_cell = src.ravel()

    plane = h * w
    out_plane = ho * wo
    rows = np.concatenate([out_cell + ci * out_plane for ci in range(c_in)])
    cols = np.concatenate([src_cell + ci * plane for ci in range(c_in)])
    vals = np.full(rows.shape, weight)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(c_in * out_plane, c_in * plane)).tocsr()
    return mat, np.zeros(c_in * out_plane)


def to_dense_matrix(mat, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Densify a lowered matrix, refusing above the configured size limit."""
    if isinstance(mat, np.ndarray):
        return mat
    entries = mat.shape[0] * mat.shape[1]
    if entries > tol.dense_limit:
        raise ModelError(
            f"refusing to densify {mat.shape[0]}x{mat.shape[1]} matrix "
            f"({entries} entries > limit {tol.dense_limit}); use the sparse form"
        )
    return mat.toarray()
