"""Torch-to-SPLC exporter: converts sequential piecewise-linear models
into SPLC v1 containers and verifies the numerical round trip."""

from .modules import PiecewiseLinear
from .export import ExportError, ExportReport, RoundTripError, export_model, verify_roundtrip

__version__ = "0.1.0"

__all__ = [
    "PiecewiseLinear",
    "ExportError",
    "ExportReport",
    "RoundTripError",
    "export_model",
    "verify_roundtrip",
    "__version__",
]
