"""Command-line front end.

Each subcommand talks to the others only through files (feature sets,
manifests, model files, view tables, sweep files, report directories), so
any stage can be swapped for an external producer of the same format.
Settings merge from an optional JSON config file and flags, flags winning;
every run echoes the fully resolved settings it is about to use.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .records import ManifestError, load_manifest, save_manifest
from .uncertainty import MetricConfig, MetricUnavailable
from .selection import fit_view_table, load_view_table, save_view_table
from .inference import infer_all, save_decisions
from .evaluation import (
    BaselineReport,
    load_sweep,
    random_aug_accuracy,
    report,
    save_sweep,
    single_view_accuracy,
    sweep,
)
from . import synthetic

_REQUIRED = object()


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{p}: config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValueError(f"{p}: config must be a JSON object")
    return raw


def _resolve(args: argparse.Namespace, schema: dict[str, object]) -> dict:
    """Merge config-file values and flags against the schema; flags win."""
    config = _load_config_file(args.config)
    unknown = set(config) - set(schema)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    resolved = {}
    for key, default in schema.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in config:
            resolved[key] = config[key]
        elif default is _REQUIRED:
            raise ValueError(f"missing required setting {key!r} (flag or config file)")
        else:
            resolved[key] = default
    print(f"config: {json.dumps(resolved, sort_keys=True)}")
    return resolved


def _cmd_synth(args: argparse.Namespace) -> int:
    schema = {
        "num_classes": 5,
        "num_aug_views": 4,
        "feature_dim": 16,
        "samples_per_class": 200,
        "noise_default": 1.0,
        "noise_optimal": 0.1,
        "noise_other": 1.0,
        "planted_views": None,
        "seed": 0,
        "train_fraction": 0.8,
        "out": _REQUIRED,
    }
    r = _resolve(args, schema)
    out = Path(r.pop("out"))
    cfg = synthetic.SynthConfig(
        num_classes=int(r["num_classes"]),
        num_aug_views=int(r["num_aug_views"]),
        feature_dim=int(r["feature_dim"]),
        samples_per_class=int(r["samples_per_class"]),
        noise_default=float(r["noise_default"]),
        noise_optimal=float(r["noise_optimal"]),
        noise_other=float(r["noise_other"]),
        planted_views=None if r["planted_views"] is None else tuple(r["planted_views"]),
        seed=int(r["seed"]),
        train_fraction=float(r["train_fraction"]),
    )
    print(f"planted_views: {list(synthetic.resolve_planted_views(cfg))}")
    train_fs, test_fs = synthetic.generate(cfg)
    out.mkdir(parents=True, exist_ok=True)
    for name, fs in (("train_features.jsonl", train_fs), ("test_features.jsonl", test_fs)):
        path = out / name
        synthetic.save_features(fs, path)
        print(f"wrote {path} ({len(fs.samples)} samples)")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    schema = {
        "features": _REQUIRED,
        "learning_rate": 0.1,
        "epochs": 50,
        "batch_size": 32,
        "dropout_rate": 0.2,
        "seed": 0,
        "out": _REQUIRED,
    }
    r = _resolve(args, schema)
    fs = synthetic.load_features(r["features"])
    cfg = synthetic.TrainConfig(
        learning_rate=float(r["learning_rate"]),
        epochs=int(r["epochs"]),
        batch_size=int(r["batch_size"]),
        dropout_rate=float(r["dropout_rate"]),
        seed=int(r["seed"]),
    )
    model = synthetic.train(fs, cfg)
    synthetic.save_model(model, r["out"])
    print(f"final_loss: {model.final_loss!r}")
    print(f"wrote {r['out']}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    schema = {
        "model": _REQUIRED,
        "features": _REQUIRED,
        "mc_samples": 16,
        "seed": 0,
        "name": "synthetic",
        "out": _REQUIRED,
    }
    r = _resolve(args, schema)
    model = synthetic.load_model(r["model"])
    fs = synthetic.load_features(r["features"])
    manifest = synthetic.predict(
        model, fs, mc_samples=int(r["mc_samples"]), mc_seed=int(r["seed"]), name=str(r["name"])
    )
    save_manifest(manifest, r["out"])
    print(f"wrote {r['out']} ({len(manifest.records)} records)")
    return 0


def _metric_config(r: dict) -> MetricConfig:
    return MetricConfig(
        kind=str(r["metric"]),
        odin_temperature=float(r["odin_temperature"]),
        mcd_min_samples=int(r["mcd_min_samples"]),
    )


def _cmd_fit_views(args: argparse.Namespace) -> int:
    schema = {
        "manifest": _REQUIRED,
        "metric": _REQUIRED,
        "odin_temperature": 1000.0,
        "mcd_min_samples": 2,
        "out": _REQUIRED,
    }
    r = _resolve(args, schema)
    train_manifest = load_manifest(r["manifest"])
    cfg = _metric_config(r)
    matrix, table = fit_view_table(train_manifest, cfg)
    save_view_table(table, r["out"])
    print(f"selection_counts: {matrix.counts.tolist()}")
    print(f"optimal_views: {table.per_class}")
    if table.fallback_classes:
        print(f"fallback_classes: {sorted(table.fallback_classes)}")
    print(f"wrote {r['out']}")
    return 0


def _cmd_infer(args: argparse.Namespace) -> int:
    schema = {
        "manifest": _REQUIRED,
        "vtable": _REQUIRED,
        "metric": None,
        "tau": None,
        "force_apply": False,
        "out": None,
    }
    r = _resolve(args, schema)
    test = load_manifest(r["manifest"])
    table = load_view_table(r["vtable"])
    if r["metric"] is not None and str(r["metric"]) != table.metric.kind:
        raise ValueError(
            f"metric {r['metric']!r} does not match the view table's {table.metric.kind!r}"
        )
    force = bool(r["force_apply"])
    if r["tau"] is None and not force:
        raise ValueError("infer needs a tau threshold (or force_apply)")
    tau = 0.0 if r["tau"] is None else float(r["tau"])
    decisions, accuracy = infer_all(test, table, tau, table.metric, force_apply=force)
    if r["out"] is not None:
        save_decisions(decisions, r["out"])
        print(f"wrote {r['out']}")
    print(f"n_augmented: {sum(1 for d in decisions if d.applied)}")
    print(f"accuracy: {accuracy!r}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    schema = {
        "manifest": _REQUIRED,
        "vtable": _REQUIRED,
        "points": 11,
        "seed": 0,
        "out": _REQUIRED,
    }
    r = _resolve(args, schema)
    test = load_manifest(r["manifest"])
    table = load_view_table(r["vtable"])
    result = sweep(test, table, table.metric, points=int(r["points"]))
    baselines = BaselineReport(
        single_view_accuracy=single_view_accuracy(test),
        random_aug_accuracy=random_aug_accuracy(test, int(r["seed"])),
        rng_seed=int(r["seed"]),
    )
    save_sweep(result, baselines, r["out"])
    for tau, acc, n in zip(result.taus, result.accuracies, result.n_augmented):
        print(f"tau: {tau!r} accuracy: {acc!r} n_augmented: {n}")
    print(f"single_view: {baselines.single_view_accuracy!r}")
    print(f"random_aug: {baselines.random_aug_accuracy!r}")
    print(f"best: index {result.best_index} accuracy {result.best_accuracy!r}")
    print(f"wrote {r['out']}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    schema = {"sweeps": _REQUIRED, "out": _REQUIRED}
    r = _resolve(args, schema)
    paths = [str(p) for p in r["sweeps"]]
    if not paths:
        raise ValueError("report needs at least one sweep file")
    sweeps = []
    baselines: BaselineReport | None = None
    for p in paths:
        result, b = load_sweep(p)
        if baselines is None:
            baselines = b
        elif b != baselines:
            raise ValueError(f"{p}: baselines disagree with {paths[0]}; sweeps mix test sets")
        sweeps.append(result)
    report(baselines, sweeps, r["out"])
    out = Path(r["out"])
    for name in ["comparison.csv", "metrics.csv", "report.json"] + [
        f"sweep_{s.metric.kind}.svg" for s in sweeps
    ]:
        print(f"wrote {out / name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewtta",
        description="Uncertainty-gated multi-view test-time augmentation engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", help="output path (or directory, where noted)")
        p.set_defaults(func=func)
        return p

    p = add("synth", _cmd_synth, "generate planted multi-view feature sets")
    p.add_argument("--seed", type=int)

    p = add("train", _cmd_train, "fit the linear classifier on default-view features")
    p.add_argument("--features", help="training feature file")
    p.add_argument("--seed", type=int)

    p = add("predict", _cmd_predict, "emit a prediction manifest from a model + features")
    p.add_argument("--model")
    p.add_argument("--features")
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--name")
    p.add_argument("--seed", type=int)

    p = add("fit-views", _cmd_fit_views, "fit the per-class optimal view table")
    p.add_argument("--manifest", help="training prediction manifest")
    p.add_argument("--metric", help="uncertainty metric name")

    p = add("infer", _cmd_infer, "gated inference at one threshold")
    p.add_argument("--manifest", help="test prediction manifest")
    p.add_argument("--vtable", help="optimal view table file")
    p.add_argument("--metric", help="must match the view table if given")
    p.add_argument("--tau", type=float)
    p.add_argument("--force-apply", dest="force_apply", action="store_true", default=None)

    p = add("sweep", _cmd_sweep, "threshold sweep plus baselines")
    p.add_argument("--manifest", help="test prediction manifest")
    p.add_argument("--vtable", help="optimal view table file")
    p.add_argument("--points", type=int)
    p.add_argument("--seed", type=int, help="seed for the random-augmentation baseline")

    p = add("report", _cmd_report, "tables and curves from sweep files")
    p.add_argument("--sweeps", nargs="+", help="sweep files, one per metric")

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, ManifestError, MetricUnavailable, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
