"""Per-class optimal augmentation view selection from training predictions.

For every training record the augmentation view with the lowest predictive
uncertainty wins one vote for that record's class. The votes accumulate in
a K x N count matrix; each class's optimal view is the column with the most
votes in its row. Classes that never appear in the training data fall back
to the globally most-selected view so the table stays total.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .records import Manifest, PredictionRecord, UNLABELED, ViewSet
from .uncertainty import MetricConfig, uncertainty_of_view

log = logging.getLogger(__name__)


@dataclass
class SelectionMatrix:
    """K x N matrix counting how often each augmentation view won per class."""

    counts: np.ndarray

    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class OptimalViewTable:
    """Per-class optimal augmentation view, with the counts that produced it."""

    per_class: list[str]
    metric: MetricConfig
    source_counts: SelectionMatrix
    fallback_classes: set[int] = field(default_factory=set)


def select_optimal_view(record: PredictionRecord, cfg: MetricConfig, views: ViewSet) -> int:
    """Index (into views.augmentation_views) of the least uncertain view.

    The default view never competes; ties break to the lowest view index.
    """
    values = [
        uncertainty_of_view(record, view, cfg).value for view in views.augmentation_views
    ]
    return min(range(len(values)), key=values.__getitem__)


def fit_view_table(train: Manifest, cfg: MetricConfig) -> tuple[SelectionMatrix, OptimalViewTable]:
    """Build the selection-count matrix and optimal view table from a training manifest.

    Fails fast (naming the record) if any record is unlabeled or lacks the
    data the metric needs. Record order never affects the result: counts
    are plain commutative increments.
    """
    if not train.records:
        raise ValueError("empty manifest: cannot fit a view table from no records")
    k = train.num_classes
    aug_views = train.view_set.augmentation_views
    n = len(aug_views)
    counts = np.zeros((k, n), dtype=np.int64)

    for rec in train.records:
        if rec.true_class == UNLABELED or not 0 <= rec.true_class < k:
            raise ValueError(
                f"sample {rec.sample_id!r}: fitting needs a labeled record, got true_class={rec.true_class}"
            )
        best = select_optimal_view(rec, cfg, train.view_set)
        counts[rec.true_class, best] += 1

    fallback: set[int] = set()
    column_totals = counts.sum(axis=0)
    per_class: list[str] = []
    for c in range(k):
        if counts[c].sum() == 0:
            j = int(np.argmax(column_totals))
            fallback.add(c)
            log.warning(
                "class %d has no training records; falling back to globally most-selected view %r",
                c,
                aug_views[j],
            )
        else:
            j = int(np.argmax(counts[c]))
        per_class.append(aug_views[j])

    matrix = SelectionMatrix(counts=counts)
    table = OptimalViewTable(
        per_class=per_class, metric=cfg, source_counts=matrix, fallback_classes=fallback
    )
    return matrix, table


def save_view_table(table: OptimalViewTable, path: str | Path) -> None:
    """Serialize a view table (metric, per-class views, counts, fallbacks) to JSON."""
    payload = {
        "metric": {
            "kind": table.metric.kind,
            "odin_temperature": table.metric.odin_temperature,
            "mcd_min_samples": table.metric.mcd_min_samples,
        },
        "per_class": table.per_class,
        "counts": table.source_counts.counts.tolist(),
        "fallback_classes": sorted(table.fallback_classes),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_view_table(path: str | Path) -> OptimalViewTable:
    """Load a view table saved by save_view_table."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    metric = MetricConfig(
        kind=payload["metric"]["kind"],
        odin_temperature=float(payload["metric"]["odin_temperature"]),
        mcd_min_samples=int(payload["metric"]["mcd_min_samples"]),
    )
    counts = np.asarray(payload["counts"], dtype=np.int64)
    return OptimalViewTable(
        per_class=[str(v) for v in payload["per_class"]],
        metric=metric,
        source_counts=SelectionMatrix(counts=counts),
        fallback_classes=set(int(c) for c in payload["fallback_classes"]),
    )
