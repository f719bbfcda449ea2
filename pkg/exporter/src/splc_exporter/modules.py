"""Torch modules the exporter understands beyond the builtins."""

import torch
from torch import nn


class PiecewiseLinear(nn.Module):
    """Elementwise continuous piecewise-linear activation.

    Defined by sorted breakpoints t_1 < ... < t_K, K+1 slopes, and the
    value at zero; segment offsets follow from continuity. Breakpoint
    ties resolve to the right-hand segment. Used for piecewise positional
    encodings and other custom CPWL activations that should survive
    export exactly.
    """

    def __init__(self, breakpoints, slopes, value_at_zero: float = 0.0):
        super().__init__()
        bp = torch.as_tensor(breakpoints, dtype=torch.float64)
        sl = torch.as_tensor(slopes, dtype=torch.float64)
        if bp.ndim != 1 or sl.ndim != 1 or sl.numel() != bp.numel() + 1:
            raise ValueError(
                f"need K breakpoints and K+1 slopes, got {bp.numel()} and {sl.numel()}"
            )
        if bp.numel() > 1 and not torch.all(bp[1:] > bp[:-1]):
            raise ValueError("breakpoints must be strictly increasing")
        self.register_buffer("breakpoints", bp)
        self.register_buffer("slopes", sl)
        self.value_at_zero = float(value_at_zero)
        self.register_buffer("offsets", self._continuity_offsets(bp, sl, self.value_at_zero))

    @staticmethod
    def _continuity_offsets(bp: torch.Tensor, sl: torch.Tensor, v0: float) -> torch.Tensor:
        # anchor the segment containing 0, then chain o_k = o_{k-1} + (s_{k-1} - s_k) t_k
        k0 = int(torch.searchsorted(bp, torch.tensor(0.0, dtype=bp.dtype), right=True))
        off = torch.zeros_like(sl)
        off[k0] = v0
        for k in range(k0 + 1, sl.numel()):
            off[k] = off[k - 1] + (sl[k - 1] - sl[k]) * bp[k - 1]
        for k in range(k0 - 1, -1, -1):
            off[k] = off[k + 1] + (sl[k + 1] - sl[k]) * bp[k]
        return off

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        bp = self.breakpoints.to(x.dtype)
        seg = torch.searchsorted(bp, x.reshape(-1).contiguous(), right=True).reshape(x.shape)
        s = self.slopes.to(x.dtype)[seg]
        o = self.offsets.to(x.dtype)[seg]
        return s * x + o

    def extra_repr(self) -> str:
        return f"segments={self.slopes.numel()}"
