"""Thin command-line wrapper around the export adapter.

The --spec argument points at a Python file that defines the export job:
either a module-level EXPORT_SPEC (an ExportSpec instance) or a
build_export_spec() function returning one. Loading a spec file executes
it, so only run spec files you trust.
"""

from __future__ import annotations

import argparse
import importlib.util
import sys
from pathlib import Path

from .adapter import ExportError, ExportSpec, export


def load_spec(path: str | Path) -> ExportSpec:
    """Execute a spec file and pull the ExportSpec out of it."""
    path = Path(path)
    if not path.exists():
        raise ExportError(f"{path}: spec file not found")
    module_spec = importlib.util.spec_from_file_location("viewtta_export_spec", path)
    if module_spec is None or module_spec.loader is None:
        raise ExportError(f"{path}: not loadable as a Python module")
    module = importlib.util.module_from_spec(module_spec)
    module_spec.loader.exec_module(module)
    if hasattr(module, "EXPORT_SPEC"):
        spec = module.EXPORT_SPEC
    elif hasattr(module, "build_export_spec"):
        spec = module.build_export_spec()
    else:
        raise ExportError(
            f"{path}: spec file must define EXPORT_SPEC or build_export_spec()"
        )
    if not isinstance(spec, ExportSpec):
        raise ExportError(f"{path}: expected an ExportSpec, got {type(spec).__name__}")
    return spec


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="viewtta-export",
        description="Export per-view model outputs as a viewtta manifest.",
    )
    parser.add_argument("--spec", required=True,
                        help="Python file defining EXPORT_SPEC or build_export_spec()")
    parser.add_argument("--out", required=True, help="manifest file to write")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        spec = load_spec(args.spec)
        written = export(spec, args.out)
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({written} records)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
