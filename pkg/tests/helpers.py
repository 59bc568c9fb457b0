"""Shared builders for crafting manifests in tests."""

from __future__ import annotations

import numpy as np

from viewtta import Manifest, PredictionRecord, ViewPrediction, ViewSet


def make_record(
    sample_id: str,
    true_class: int,
    logits_by_view: dict[str, list[float]],
    mc_by_view: dict[str, list[list[float]]] | None = None,
    grad_by_view: dict[str, float] | None = None,
) -> PredictionRecord:
    views = {}
    for view, logits in logits_by_view.items():
        views[view] = ViewPrediction(
            logits=list(logits),
            mc_logits=None if mc_by_view is None else mc_by_view.get(view),
            grad_l1=None if grad_by_view is None else grad_by_view.get(view),
        )
    return PredictionRecord(sample_id=sample_id, true_class=true_class, views=views)


def make_manifest(
    records: list[PredictionRecord],
    num_classes: int = 2,
    default_view: str = "default",
    augmentation_views: list[str] | None = None,
    name: str = "test",
) -> Manifest:
    return Manifest(
        name=name,
        num_classes=num_classes,
        view_set=ViewSet(
            default_view=default_view,
            augmentation_views=augmentation_views if augmentation_views is not None else ["a", "b"],
        ),
        records=records,
    )


def random_manifest(
    rng: np.random.Generator,
    num_classes: int,
    num_aug_views: int,
    num_records: int,
    with_mc: bool = False,
    with_grad: bool = False,
    mc_passes: int = 4,
) -> Manifest:
    """A structurally valid manifest with standard-normal logits."""
    aug_views = [f"a{n}" for n in range(num_aug_views)]
    records = []
    for i in range(num_records):
        views = {}
        for view in ["default"] + aug_views:
            views[view] = ViewPrediction(
                logits=[float(v) for v in rng.normal(size=num_classes)],
                mc_logits=(
                    [[float(v) for v in rng.normal(size=num_classes)] for _ in range(mc_passes)]
                    if with_mc
                    else None
                ),
                grad_l1=float(abs(rng.normal())) if with_grad else None,
            )
        records.append(
            PredictionRecord(
                sample_id=f"s{i}",
                true_class=int(rng.integers(0, num_classes)),
                views=views,
            )
        )
    return Manifest(
        name="random",
        num_classes=num_classes,
        view_set=ViewSet(default_view="default", augmentation_views=aug_views),
        records=records,
    )
