"""Baselines, the threshold sweep, and report generation.

The sweep evaluates gated augmentation over equidistant thresholds spanning
the default-view uncertainties observed on the test set. The first grid
point forces augmentation for every record (the everything-augmented
regime); at the last point the strict gate never opens, so that accuracy
equals the single-view baseline exactly. Reports render a comparison table,
a per-metric min-threshold/best pair table, and one self-contained SVG
curve per metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import Manifest, ManifestError, UNLABELED, softmax
from .selection import OptimalViewTable
from .inference import infer_all
from .uncertainty import MetricConfig, uncertainty_of_view


@dataclass
class SweepResult:
    """Accuracy and augmentation counts across the threshold grid."""

    metric: MetricConfig
    taus: list[float]
    accuracies: list[float]
    n_augmented: list[int]
    best_index: int
    best_accuracy: float


@dataclass
class BaselineReport:
    """Reference accuracies: default view only, and uniformly random fusion."""

    single_view_accuracy: float
    random_aug_accuracy: float
    rng_seed: int


def _require_labeled(test: Manifest) -> None:
    if not test.records:
        raise ValueError("empty test set")
    for rec in test.records:
        if rec.true_class == UNLABELED:
            raise ValueError(f"sample {rec.sample_id!r}: unlabeled record, accuracy needs true classes")


def single_view_accuracy(test: Manifest) -> float:
    """Accuracy of the default view's argmax prediction alone."""
    _require_labeled(test)
    correct = 0
    for rec in test.records:
        p = softmax(rec.views[test.view_set.default_view].logits)
        if int(np.argmax(p)) == rec.true_class:
            correct += 1
    return correct / len(test.records)


def random_aug_accuracy(test: Manifest, seed: int) -> float:
    """Accuracy when every record fuses with one uniformly random augmentation view.

    Draws come from numpy's seeded PCG64 generator, one integers() call per
    record in manifest order, so the result is bit-reproducible from
    (manifest, seed).
    """
    _require_labeled(test)
    aug_views = test.view_set.augmentation_views
    rng = np.random.default_rng(seed)
    correct = 0
    for rec in test.records:
        view = aug_views[int(rng.integers(0, len(aug_views)))]
        if view not in rec.views:
            raise ManifestError(f"sample {rec.sample_id!r}: augmentation view {view!r} missing")
        p_default = softmax(rec.views[test.view_set.default_view].logits)
        p_aug = softmax(rec.views[view].logits)
        if int(np.argmax((p_default + p_aug) / 2.0)) == rec.true_class:
            correct += 1
    return correct / len(test.records)


def tau_grid(uncertainties, points: int = 11) -> list[float]:
    """Equidistant thresholds from the minimum to the maximum observed value."""
    values = list(uncertainties)
    if not values:
        raise ValueError("cannot build a threshold grid from no uncertainties")
    if points < 2:
        raise ValueError(f"grid needs >= 2 points, got {points}")
    return [float(t) for t in np.linspace(min(values), max(values), num=points)]


def sweep(
    test: Manifest,
    vtable: OptimalViewTable,
    cfg: MetricConfig,
    points: int = 11,
) -> SweepResult:
    """Evaluate gated augmentation across the threshold grid.

    Grid point 0 forces augmentation for all records; every later point
    applies the strict uncertainty gate at that threshold.
    """
    us = [
        uncertainty_of_view(rec, test.view_set.default_view, cfg).value
        for rec in test.records
    ]
    taus = tau_grid(us, points)
    accuracies: list[float] = []
    n_augmented: list[int] = []
    for i, tau in enumerate(taus):
        decisions, acc = infer_all(test, vtable, tau, cfg, force_apply=(i == 0))
        accuracies.append(acc)
        n_augmented.append(sum(1 for d in decisions if d.applied))
    best_index = int(np.argmax(accuracies))
    return SweepResult(
        metric=cfg,
        taus=taus,
        accuracies=accuracies,
        n_augmented=n_augmented,
        best_index=best_index,
        best_accuracy=accuracies[best_index],
    )


def save_sweep(result: SweepResult, baselines: BaselineReport, path: str | Path) -> None:
    """Serialize one metric's sweep plus the shared baselines to JSON."""
    payload = {
        "metric": {
            "kind": result.metric.kind,
            "odin_temperature": result.metric.odin_temperature,
            "mcd_min_samples": result.metric.mcd_min_samples,
        },
        "taus": result.taus,
        "accuracies": result.accuracies,
        "n_augmented": result.n_augmented,
        "best_index": result.best_index,
        "best_accuracy": result.best_accuracy,
        "baselines": {
            "single_view_accuracy": baselines.single_view_accuracy,
            "random_aug_accuracy": baselines.random_aug_accuracy,
            "rng_seed": baselines.rng_seed,
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_sweep(path: str | Path) -> tuple[SweepResult, BaselineReport]:
    """Load a sweep file written by save_sweep."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    metric = MetricConfig(
        kind=payload["metric"]["kind"],
        odin_temperature=float(payload["metric"]["odin_temperature"]),
        mcd_min_samples=int(payload["metric"]["mcd_min_samples"]),
    )
    result = SweepResult(
        metric=metric,
        taus=[float(t) for t in payload["taus"]],
        accuracies=[float(a) for a in payload["accuracies"]],
        n_augmented=[int(n) for n in payload["n_augmented"]],
        best_index=int(payload["best_index"]),
        best_accuracy=float(payload["best_accuracy"]),
    )
    b = payload["baselines"]
    baselines = BaselineReport(
        single_view_accuracy=float(b["single_view_accuracy"]),
        random_aug_accuracy=float(b["random_aug_accuracy"]),
        rng_seed=int(b["rng_seed"]),
    )
    return result, baselines


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def _sweep_svg(result: SweepResult, baseline: float) -> str:
    """Render one sweep curve as a self-contained SVG string.

    One circle marker per grid point; the single-view baseline is the only
    dashed line in the image.
    """
    width, height = 640.0, 400.0
    left, right, top, bottom = 60.0, 20.0, 30.0, 50.0
    plot_w = width - left - right
    plot_h = height - top - bottom

    accs = result.accuracies
    lo = min(min(accs), baseline)
    hi = max(max(accs), baseline)
    pad = max((hi - lo) * 0.1, 0.005)
    lo, hi = lo - pad, hi + pad
    points = len(accs)

    def x(i: int) -> float:
        return left + plot_w * (i / (points - 1))

    def y(a: float) -> float:
        return top + plot_h * (1.0 - (a - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">threshold sweep ({result.metric.kind})</text>',
        # axes
        f'<line x1="{left:.1f}" y1="{top:.1f}" x2="{left:.1f}" y2="{top + plot_h:.1f}" stroke="black"/>',
        f'<line x1="{left:.1f}" y1="{top + plot_h:.1f}" x2="{left + plot_w:.1f}" '
        f'y2="{top + plot_h:.1f}" stroke="black"/>',
        # single-view baseline
        f'<line x1="{left:.1f}" y1="{y(baseline):.2f}" x2="{left + plot_w:.1f}" '
        f'y2="{y(baseline):.2f}" stroke="gray" stroke-dasharray="6 4"/>',
        f'<text x="{left + plot_w:.1f}" y="{y(baseline) - 4:.2f}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11" fill="gray">single view {_pct(baseline)}%</text>',
    ]
    poly = " ".join(f"{x(i):.2f},{y(a):.2f}" for i, a in enumerate(accs))
    parts.append(f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for i, a in enumerate(accs):
        parts.append(f'<circle cx="{x(i):.2f}" cy="{y(a):.2f}" r="3.5" fill="steelblue"/>')
        parts.append(
            f'<text x="{x(i):.2f}" y="{top + plot_h + 16:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{i}</text>'
        )
    for frac in (0.0, 0.5, 1.0):
        a = lo + frac * (hi - lo)
        parts.append(
            f'<text x="{left - 6:.1f}" y="{y(a) + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_pct(a)}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 12:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">threshold index</text>'
    )
    parts.append(
        f'<text x="14" y="{top + plot_h / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 14 {top + plot_h / 2:.1f})">accuracy (%)</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report(baselines: BaselineReport, sweeps: list[SweepResult], out_dir: str | Path) -> None:
    """Write the comparison table, per-metric table, raw JSON, and SVG curves.

    The intelligent-TTA column is the mean over metrics of each metric's
    best sweep accuracy. Percentages render with two decimals; the raw
    fractions go to report.json untouched.
    """
    if not sweeps:
        raise ValueError("report needs at least one sweep result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    int_tta = sum(s.best_accuracy for s in sweeps) / len(sweeps)

    comparison = "single_view,random_aug,intelligent_tta\n" + ",".join(
        [_pct(baselines.single_view_accuracy), _pct(baselines.random_aug_accuracy), _pct(int_tta)]
    )
    (out / "comparison.csv").write_text(comparison + "\n", encoding="utf-8")

    lines = ["metric,min_tau_accuracy,best_accuracy"]
    for s in sweeps:
        lines.append(f"{s.metric.kind},{_pct(s.accuracies[0])},{_pct(s.best_accuracy)}")
    (out / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    payload = {
        "single_view_accuracy": baselines.single_view_accuracy,
        "random_aug_accuracy": baselines.random_aug_accuracy,
        "rng_seed": baselines.rng_seed,
        "intelligent_tta_accuracy": int_tta,
        "metrics": [
            {
                "metric": s.metric.kind,
                "taus": s.taus,
                "accuracies": s.accuracies,
                "n_augmented": s.n_augmented,
                "best_index": s.best_index,
                "best_accuracy": s.best_accuracy,
                "min_tau_accuracy": s.accuracies[0],
            }
            for s in sweeps
        ],
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    for s in sweeps:
        svg = _sweep_svg(s, baselines.single_view_accuracy)
        (out / f"sweep_{s.metric.kind}.svg").write_text(svg, encoding="utf-8")
