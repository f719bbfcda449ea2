"""Exact linear-region partitions of piecewise-linear networks on 2D slices."""

__version__ = "0.1.0"
