"""Piecewise-linear scalar activations.

An activation is a continuous piecewise-linear function of one variable,
stored as sorted breakpoints ``t_1 < ... < t_K`` and ``K+1`` segment
slopes. Per-segment offsets are never stored by callers: they are derived
once from continuity, anchored by the function value at zero, so the
function is continuous by construction:

    o_{k} = o_{k-1} + (s_{k-1} - s_k) * t_k      (walking up from zero)

Segment k covers pre-activations between ``t_k`` and ``t_{k+1}``; a value
exactly at a breakpoint resolves to the right-hand segment, consistently
everywhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError

__all__ = ["ActivationDescriptor", "identity", "relu", "leaky_relu", "abs_act", "pwl"]


@dataclass(frozen=True, eq=False)
class ActivationDescriptor:
    """Continuous pwl scalar function: per-segment ``f(t) = s_k t + o_k``."""

    kind: str
    breakpoints: np.ndarray
    slopes: np.ndarray
    value_at_zero: float
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        sl = np.asarray(self.slopes, dtype=np.float64)
        if bp.ndim != 1 or sl.ndim != 1 or len(sl) != len(bp) + 1:
            raise ModelError(
                f"activation needs K breakpoints and K+1 slopes, got {len(bp)} and {len(sl)}"
            )
        if len(bp) and not np.all(np.diff(bp) > 0):
            raise ModelError("activation breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(sl)) and np.isfinite(self.value_at_zero)):
            raise ModelError("activation parameters must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)
        object.__setattr__(self, "offsets", self._derive_offsets(bp, sl, self.value_at_zero))

    @staticmethod
    def _derive_offsets(bp: np.ndarray, sl: np.ndarray, value_at_zero: float) -> np.ndarray:
        offsets = np.zeros(len(sl))
        k0 = int(np.searchsorted(bp, 0.0, side="right"))
        offsets[k0] = value_at_zero
        for k in range(k0 + 1, len(sl)):
            offsets[k] = offsets[k - 1] + (sl[k - 1] - sl[k]) * bp[k - 1]
        for k in range(k0 - 1, -1, -1):
            offsets[k] = offsets[k + 1] + (sl[k + 1] - sl[k]) * bp[k]
        return offsets

    @property
    def n_segments(self) -> int:
        return len(self.slopes)

    def segment_of(self, t) -> np.ndarray:
        """Segment index per value; breakpoint ties go right."""
        return np.searchsorted(self.breakpoints, np.asarray(t, dtype=np.float64), side="right")

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        seg = self.segment_of(t)
        return self.slopes[seg] * t + self.offsets[seg]

    def slope_offset(self, segments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(slope, offset) arrays for the given per-unit segment selectors."""
        return self.slopes[segments], self.offsets[segments]

    def __repr__(self) -> str:
        return f"ActivationDescriptor({self.kind}, {self.n_segments} segments)"


def identity() -> ActivationDescriptor:
    return ActivationDescriptor("identity", np.empty(0), np.array([1.0]), 0.0)


def relu() -> ActivationDescriptor:
    return ActivationDescriptor("relu", np.array([0.0]), np.array([0.0, 1.0]), 0.0)


def leaky_relu(alpha: float = 0.01) -> ActivationDescriptor:
    return ActivationDescriptor("leaky_relu", np.array([0.0]), np.array([float(alpha), 1.0]), 0.0)


def abs_act() -> ActivationDescriptor:
    return ActivationDescriptor("abs", np.array([0.0]), np.array([-1.0, 1.0]), 0.0)


def pwl(breakpoints, slopes, value_at_zero: float = 0.0) -> ActivationDescriptor:
    return ActivationDescriptor("pwl", np.asarray(breakpoints), np.asarray(slopes), float(value_at_zero))
