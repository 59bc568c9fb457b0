"""Threshold-gated test-time augmentation.

Each test record is scored by the default view's predictive uncertainty.
When that uncertainty strictly exceeds the threshold (or augmentation is
forced), the record's predicted class picks an augmentation view from the
optimal view table and the final probabilities are the unweighted mean of
the default and augmented softmax vectors; otherwise the default softmax
is used as-is.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import Manifest, ManifestError, PredictionRecord, UNLABELED, ViewSet, softmax
from .selection import OptimalViewTable
from .uncertainty import MetricConfig, Uncertainty, uncertainty_of_view


@dataclass
class TtaDecision:
    """Audit trace of the gate outcome and fusion for one sample."""

    sample_id: str
    u_default: Uncertainty
    applied: bool
    chosen_view: str | None
    p_default: np.ndarray
    p_aug: np.ndarray | None
    p_final: np.ndarray
    predicted_class: int


def infer_one(
    record: PredictionRecord,
    views: ViewSet,
    vtable: OptimalViewTable,
    tau: float,
    cfg: MetricConfig,
    force_apply: bool = False,
) -> TtaDecision:
    """Run the uncertainty gate and (possibly) fused prediction for one record.

    The gate opens iff force_apply or the default-view uncertainty is
    strictly greater than tau. The augmentation view is looked up by the
    argmax class of the default probabilities (ties to the lowest index),
    and fusion is the elementwise mean of the two softmax vectors. The
    augmented prediction always uses the chosen view's plain logits, even
    when the uncertainty metric is mcd.
    """
    if vtable.metric != cfg:
        raise ValueError(
            f"metric mismatch: view table was fit with {vtable.metric.kind!r}, got {cfg.kind!r}"
        )
    if not force_apply and not math.isfinite(tau):
        raise ValueError(f"tau must be finite, got {tau}")

    u = uncertainty_of_view(record, views.default_view, cfg)
    p_default = softmax(record.views[views.default_view].logits)
    if len(vtable.per_class) != p_default.size:
        raise ValueError(
            f"view table covers {len(vtable.per_class)} classes, record has {p_default.size}"
        )

    applied = bool(force_apply or u.value > tau)
    if applied:
        c = int(np.argmax(p_default))
        chosen = vtable.per_class[c]
        if chosen not in record.views:
            raise ManifestError(
                f"sample {record.sample_id!r}: chosen view {chosen!r} missing from record"
            )
        p_aug = softmax(record.views[chosen].logits)
        p_final = (p_default + p_aug) / 2.0
    else:
        chosen = None
        p_aug = None
        p_final = p_default

    return TtaDecision(
        sample_id=record.sample_id,
        u_default=u,
        applied=applied,
        chosen_view=chosen,
        p_default=p_default,
        p_aug=p_aug,
        p_final=p_final,
        predicted_class=int(np.argmax(p_final)),
    )


def infer_all(
    test: Manifest,
    vtable: OptimalViewTable,
    tau: float,
    cfg: MetricConfig,
    force_apply: bool = False,
) -> tuple[list[TtaDecision], float]:
    """Gate and predict every record; returns the decisions and the accuracy."""
    if not test.records:
        raise ValueError("empty test set")
    if len(vtable.per_class) != test.num_classes:
        raise ValueError(
            f"view table covers {len(vtable.per_class)} classes, manifest has {test.num_classes}"
        )
    decisions: list[TtaDecision] = []
    correct = 0
    for rec in test.records:
        if rec.true_class == UNLABELED:
            raise ValueError(
                f"sample {rec.sample_id!r}: unlabeled record, accuracy needs true classes"
            )
        decision = infer_one(rec, test.view_set, vtable, tau, cfg, force_apply)
        decisions.append(decision)
        if decision.predicted_class == rec.true_class:
            correct += 1
    return decisions, correct / len(test.records)


def save_decisions(decisions: list[TtaDecision], path: str | Path) -> None:
    """Dump decisions as line-delimited JSON for audit."""
    with Path(path).open("w", encoding="utf-8") as f:
        for d in decisions:
            f.write(
                json.dumps(
                    {
                        "sample_id": d.sample_id,
                        "metric": d.u_default.metric,
                        "u_default": d.u_default.value,
                        "applied": d.applied,
                        "chosen_view": d.chosen_view,
                        "p_default": d.p_default.tolist(),
                        "p_aug": None if d.p_aug is None else d.p_aug.tolist(),
                        "p_final": d.p_final.tolist(),
                        "predicted_class": d.predicted_class,
                    }
                )
                + "\n"
            )
