"""Prediction data model and manifest file IO.

A manifest bundles per-view logit records for a whole dataset split. The
file format is line-delimited JSON: line 1 is a header object carrying the
dataset name, class count, and view set; every following line is one
record. Logits are stored raw (not as probabilities) so temperature
scaling stays possible downstream. Manifests are treated as immutable
after loading; every operation here is pure or write-once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Sentinel true_class for records without a label. Accepted by validation,
# rejected by every accuracy-computing operation.
UNLABELED = -1


class ManifestError(ValueError):
    """A manifest file or record violates the format contract."""


@dataclass
class ViewSet:
    """The default view plus the ordered augmentation views."""

    default_view: str
    augmentation_views: list[str]

    def all_views(self) -> list[str]:
        return [self.default_view, *self.augmentation_views]


@dataclass
class ViewPrediction:
    """Model outputs for one sample under one view.

    logits: unnormalized class scores, length K.
    mc_logits: optional stochastic forward passes (M >= 2 rows of length K).
    grad_l1: optional nonnegative L1 norm of a last-layer gradient score.
    """

    logits: list[float]
    mc_logits: list[list[float]] | None = None
    grad_l1: float | None = None


@dataclass
class PredictionRecord:
    """Per-view predictions for a single sample."""

    sample_id: str
    true_class: int
    views: dict[str, ViewPrediction]


@dataclass
class Manifest:
    """A named dataset split of prediction records sharing one view set."""

    name: str
    num_classes: int
    view_set: ViewSet
    records: list[PredictionRecord] = field(default_factory=list)


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax of a length-K logit vector (K >= 2).

    Computed via max-shift so adding a constant to all logits leaves the
    output unchanged and extreme magnitudes do not overflow.
    """
    z = np.asarray(logits, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise ValueError(f"softmax expects a vector of length >= 2, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax: logits must be finite")
    e = np.exp(z - z.max())
    return e / e.sum()


def _finite_seq(values) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


def validate_manifest(manifest: Manifest) -> list[str]:
    """Return a list of invariant violations; empty means the manifest is valid."""
    problems: list[str] = []
    vs = manifest.view_set
    known = set(vs.all_views())
    k = manifest.num_classes

    if k < 2:
        problems.append(f"num_classes must be >= 2, got {k}")
    if len(vs.augmentation_views) < 1:
        problems.append("view set needs at least one augmentation view")
    if vs.default_view in vs.augmentation_views:
        problems.append(f"default view {vs.default_view!r} also listed as augmentation")
    if len(set(vs.augmentation_views)) != len(vs.augmentation_views):
        problems.append("duplicate augmentation view identifiers")

    seen_ids: set[str] = set()
    for rec in manifest.records:
        rid = rec.sample_id
        if rid in seen_ids:
            problems.append(f"duplicate sample id {rid!r}")
        seen_ids.add(rid)
        if rec.true_class != UNLABELED and not 0 <= rec.true_class < k:
            problems.append(f"sample {rid!r}: true_class {rec.true_class} outside [0, {k})")
        if vs.default_view not in rec.views:
            problems.append(f"sample {rid!r}: missing default view")
        for view_id, vp in rec.views.items():
            where = f"sample {rid!r}, view {view_id!r}"
            if view_id not in known:
                problems.append(f"{where}: unknown view id")
            if len(vp.logits) != k:
                problems.append(f"{where}: logit length mismatch ({len(vp.logits)} != {k})")
            elif not _finite_seq(vp.logits):
                problems.append(f"{where}: non-finite logits")
            if vp.mc_logits is not None:
                if len(vp.mc_logits) < 2:
                    problems.append(f"{where}: mc_logits needs >= 2 samples")
                for row in vp.mc_logits:
                    if len(row) != k:
                        problems.append(f"{where}: mc logit length mismatch ({len(row)} != {k})")
                        break
                    if not _finite_seq(row):
                        problems.append(f"{where}: non-finite mc_logits")
                        break
            if vp.grad_l1 is not None and not (
                math.isfinite(vp.grad_l1) and vp.grad_l1 >= 0
            ):
                problems.append(f"{where}: grad_l1 must be finite and >= 0, got {vp.grad_l1}")
    return problems


def _parse_view_prediction(obj: dict, where: str) -> ViewPrediction:
    if not isinstance(obj, dict) or "logits" not in obj:
        raise ManifestError(f"{where}: view entry must be an object with 'logits'")
    logits = [float(v) for v in obj["logits"]]
    mc = obj.get("mc_logits")
    if mc is not None:
        mc = [[float(v) for v in row] for row in mc]
    grad = obj.get("grad_l1")
    if grad is not None:
        grad = float(grad)
    return ViewPrediction(logits=logits, mc_logits=mc, grad_l1=grad)


def load_manifest(path: str | Path) -> Manifest:
    """Load and validate a manifest file, naming the offending line on error."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ManifestError(f"{path}: empty file, expected a header line")

    def fail(lineno: int, msg: str) -> ManifestError:
        return ManifestError(f"{path}:{lineno}: {msg}")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise fail(1, f"malformed header: {exc}") from exc
    for key in ("name", "num_classes", "default_view", "augmentation_views"):
        if key not in header:
            raise fail(1, f"header missing {key!r}")
    view_set = ViewSet(
        default_view=str(header["default_view"]),
        augmentation_views=[str(v) for v in header["augmentation_views"]],
    )
    k = int(header["num_classes"])
    known = set(view_set.all_views())

    records: list[PredictionRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise fail(lineno, f"malformed record: {exc}") from exc
        for key in ("sample_id", "true_class", "views"):
            if key not in obj:
                raise fail(lineno, f"record missing {key!r}")
        sid = str(obj["sample_id"])
        if sid in seen:
            raise fail(lineno, f"duplicate sample id {sid!r}")
        seen.add(sid)
        views: dict[str, ViewPrediction] = {}
        for view_id, vobj in obj["views"].items():
            if view_id not in known:
                raise fail(lineno, f"sample {sid!r}: unknown view id {view_id!r}")
            try:
                vp = _parse_view_prediction(vobj, f"sample {sid!r}, view {view_id!r}")
            except (TypeError, ValueError) as exc:
                raise fail(lineno, str(exc)) from exc
            if len(vp.logits) != k:
                raise fail(lineno, f"sample {sid!r}, view {view_id!r}: logit length mismatch")
            views[view_id] = vp
        if view_set.default_view not in views:
            raise fail(lineno, f"sample {sid!r}: missing default view")
        records.append(PredictionRecord(sample_id=sid, true_class=int(obj["true_class"]), views=views))

    manifest = Manifest(name=str(header["name"]), num_classes=k, view_set=view_set, records=records)
    problems = validate_manifest(manifest)
    if problems:
        raise ManifestError(f"{path}: invalid manifest: {problems[0]}")
    return manifest


def _record_to_json(rec: PredictionRecord) -> str:
    views = {}
    for view_id, vp in rec.views.items():
        entry: dict = {"logits": vp.logits}
        if vp.mc_logits is not None:
            entry["mc_logits"] = vp.mc_logits
        if vp.grad_l1 is not None:
            entry["grad_l1"] = vp.grad_l1
        views[view_id] = entry
    return json.dumps(
        {"sample_id": rec.sample_id, "true_class": rec.true_class, "views": views}
    )


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """Write a manifest; validation failures abort before any byte is written.

    Numbers serialize with full round-trip precision, so save followed by
    load reproduces the exact values.
    """
    problems = validate_manifest(manifest)
    if problems:
        raise ManifestError(f"refusing to save invalid manifest: {problems[0]}")
    header = json.dumps(
        {
            "name": manifest.name,
            "num_classes": manifest.num_classes,
            "default_view": manifest.view_set.default_view,
            "augmentation_views": manifest.view_set.augmentation_views,
        }
    )
    with Path(path).open("w", encoding="utf-8") as f:
        f.write(header + "\n")
        for rec in manifest.records:
            f.write(_record_to_json(rec) + "\n")
