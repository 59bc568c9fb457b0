"""Bridge from per-view model outputs to the manifest file format.

The adapter knows nothing about any deep-learning framework: the caller
supplies a fetch callable that maps (sample, view) to logits, and the
exporter serializes the results as a line-delimited JSON manifest the
engine's loader accepts. Records are written one at a time, so memory stays
flat no matter how many samples the spec covers. Floats are serialized at
full round-trip precision; what the callable returned is what the loader
reads back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

# Sentinel class index for unlabeled samples, mirroring the manifest format.
UNLABELED = -1


class ExportError(ValueError):
    """The spec or a callable result violates the manifest contract."""


@dataclass(frozen=True)
class ViewOutput:
    """What the fetch callable may return for one (sample, view) pair.

    A bare sequence of floats is also accepted wherever a ViewOutput is
    expected; it means logits with no stochastic passes and no gradient.
    """

    logits: Sequence[float]
    mc_logits: Sequence[Sequence[float]] | None = None
    grad_l1: float | None = None


@dataclass(frozen=True)
class ExportSample:
    """Identity of one sample to export."""

    sample_id: str
    true_class: int = UNLABELED


@dataclass(frozen=True)
class ExportSpec:
    """A full export job: dataset identity, geometry, samples, and the callable.

    views lists the default view first, then the augmentation views in
    order. fetch is called once per (sample, view) pair, samples outermost,
    views in list order; the output file preserves both orders.
    """

    name: str
    num_classes: int
    views: Sequence[str]
    samples: Sequence[ExportSample]
    fetch: Callable[[ExportSample, str], ViewOutput | Sequence[float]]

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ExportError(f"num_classes must be >= 2, got {self.num_classes}")
        views = list(self.views)
        if len(views) < 2:
            raise ExportError("need the default view plus at least one augmentation view")
        if len(set(views)) != len(views):
            raise ExportError(f"duplicate view identifiers in {views}")
        seen: set[str] = set()
        for sample in self.samples:
            if sample.sample_id in seen:
                raise ExportError(f"duplicate sample id {sample.sample_id!r}")
            seen.add(sample.sample_id)
            if sample.true_class != UNLABELED and not 0 <= sample.true_class < self.num_classes:
                raise ExportError(
                    f"sample {sample.sample_id!r}: true_class {sample.true_class} "
                    f"outside [0, {self.num_classes})"
                )

    @property
    def default_view(self) -> str:
        return self.views[0]

    @property
    def augmentation_views(self) -> list[str]:
        return list(self.views[1:])


def _as_floats(values, where: str, what: str) -> list[float]:
    try:
        out = [float(v) for v in values]
    except (TypeError, ValueError) as exc:
        raise ExportError(f"{where}: {what} is not a sequence of numbers: {exc}") from exc
    for v in out:
        if not math.isfinite(v):
            raise ExportError(f"{where}: non-finite value in {what}")
    return out


def _normalize(result, num_classes: int, where: str) -> dict:
    if not isinstance(result, ViewOutput):
        result = ViewOutput(logits=result)
    logits = _as_floats(result.logits, where, "logits")
    if len(logits) != num_classes:
        raise ExportError(
            f"{where}: expected {num_classes} logits, callable returned {len(logits)}"
        )
    entry: dict = {"logits": logits}
    if result.mc_logits is not None:
        rows = [_as_floats(row, where, f"mc_logits[{i}]") for i, row in enumerate(result.mc_logits)]
        if len(rows) < 2:
            raise ExportError(f"{where}: mc_logits needs >= 2 passes, got {len(rows)}")
        for i, row in enumerate(rows):
            if len(row) != num_classes:
                raise ExportError(
                    f"{where}: mc_logits[{i}] has {len(row)} entries, expected {num_classes}"
                )
        entry["mc_logits"] = rows
    if result.grad_l1 is not None:
        grad = float(result.grad_l1)
        if not (math.isfinite(grad) and grad >= 0):
            raise ExportError(f"{where}: grad_l1 must be finite and >= 0, got {grad}")
        entry["grad_l1"] = grad
    return entry


def export(spec: ExportSpec, out_path: str | Path) -> int:
    """Run the callable over every (sample, view) pair and write the manifest.

    Returns the number of records written. On any contract violation the
    partial output file is removed and an ExportError naming the offending
    sample and view is raised.
    """
    path = Path(out_path)
    header = json.dumps(
        {
            "name": spec.name,
            "num_classes": spec.num_classes,
            "default_view": spec.default_view,
            "augmentation_views": spec.augmentation_views,
        }
    )
    written = 0
    try:
        with path.open("w", encoding="utf-8") as f:
            f.write(header + "\n")
            for sample in spec.samples:
                views = {}
                for view in spec.views:
                    where = f"sample {sample.sample_id!r}, view {view!r}"
                    views[view] = _normalize(spec.fetch(sample, view), spec.num_classes, where)
                f.write(
                    json.dumps(
                        {
                            "sample_id": sample.sample_id,
                            "true_class": sample.true_class,
                            "views": views,
                        }
                    )
                    + "\n"
                )
                written += 1
    except BaseException:
        path.unlink(missing_ok=True)
        raise
    return written
