"""Structured exceptions shared across the package.

Exit-code mapping used by the CLI: usage errors exit 1, model or ROI
parse failures exit 2, geometry failures exit 3.
"""

from __future__ import annotations


class SplcError(Exception):
    """Base class for all package errors."""


class ContainerError(SplcError):
    """Malformed model container.

    Carries the byte offset where parsing failed so corrupt files can be
    diagnosed without a hex editor.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ModelError(SplcError):
    """Structurally invalid model: shape mismatch, non-finite weights,
    unsupported layer kind, or failed forward self-check."""


class RoiError(SplcError):
    """Invalid region-of-interest specification."""


class GeometryError(SplcError):
    """Geometric invariant violated: unresolved face enumeration,
    Euler-characteristic mismatch, or area-conservation failure."""


class PartitionError(SplcError):
    """Partition run failed. ``partial`` holds whatever partition state
    was completed before the failure, for diagnostics and partial output."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
