"""Adapter that exports per-view model outputs to the manifest format."""

from .adapter import (
    UNLABELED,
    ExportError,
    ExportSample,
    ExportSpec,
    ViewOutput,
    export,
)
from .cli import load_spec, main

__all__ = [
    "UNLABELED",
    "ExportError",
    "ExportSample",
    "ExportSpec",
    "ViewOutput",
    "export",
    "load_spec",
    "main",
]

__version__ = "0.1.0"
