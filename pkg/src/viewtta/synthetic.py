"""Seeded multi-view Gaussian benchmark plus a from-scratch linear classifier.

The generator plants one low-noise augmentation view per class, so the
fitting stage has a known ground truth to recover. The classifier is a
plain linear softmax model trained by mini-batch gradient descent with
analytic gradients; input-feature dropout gives it a stochastic forward
pass for Monte Carlo sampling. Everything is deterministic from the seeds
in the configs: each sample draws from its own derived RNG stream, so
serial and parallel generation agree bit for bit.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .records import Manifest, ManifestError, PredictionRecord, ViewPrediction, ViewSet, validate_manifest

log = logging.getLogger(__name__)

DEFAULT_VIEW = "default"

# Spread of the class prototypes relative to unit default-view noise. Chosen
# so the default view alone is decent but imperfect, leaving the low-noise
# views real headroom.
PROTOTYPE_SCALE = 0.85


def aug_view_name(index: int) -> str:
    return f"aug{index}"


@dataclass(frozen=True)
class SynthConfig:
    """Benchmark geometry, noise levels, planted views, and split."""

    num_classes: int = 5
    num_aug_views: int = 4
    feature_dim: int = 16
    samples_per_class: int = 200
    noise_default: float = 1.0
    noise_optimal: float = 0.1
    noise_other: float = 1.0
    planted_views: tuple[int, ...] | None = None
    seed: int = 0
    train_fraction: float = 0.8

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.num_aug_views < 1:
            raise ValueError(f"num_aug_views must be >= 1, got {self.num_aug_views}")
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.samples_per_class < 2:
            raise ValueError(f"samples_per_class must be >= 2, got {self.samples_per_class}")
        for name in ("noise_default", "noise_optimal", "noise_other"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        # The planted view may not be noisier than the alternatives; equality
        # is allowed so fully noise-free setups remain expressible.
        if self.noise_optimal > self.noise_default or self.noise_optimal > self.noise_other:
            raise ValueError(
                "noise_optimal must not exceed noise_default or noise_other "
                f"(got {self.noise_optimal}, {self.noise_default}, {self.noise_other})"
            )
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        n_train = self.train_count_per_class()
        if not 0 < n_train < self.samples_per_class:
            raise ValueError(
                f"train_fraction {self.train_fraction} leaves an empty split "
                f"at {self.samples_per_class} samples per class"
            )
        if self.planted_views is not None:
            object.__setattr__(self, "planted_views", tuple(int(v) for v in self.planted_views))
            if len(self.planted_views) != self.num_classes:
                raise ValueError(
                    f"planted_views needs one entry per class, got {len(self.planted_views)}"
                )
            for v in self.planted_views:
                if not 0 <= v < self.num_aug_views:
                    raise ValueError(f"planted view index {v} out of range")

    def train_count_per_class(self) -> int:
        return int(round(self.samples_per_class * self.train_fraction))

    def view_set(self) -> ViewSet:
        return ViewSet(
            default_view=DEFAULT_VIEW,
            augmentation_views=[aug_view_name(n) for n in range(self.num_aug_views)],
        )


def resolve_planted_views(cfg: SynthConfig) -> tuple[int, ...]:
    """The config's planted views, drawing them from the seed when unset."""
    if cfg.planted_views is not None:
        return cfg.planted_views
    rng = np.random.default_rng([cfg.seed, 2])
    return tuple(int(rng.integers(0, cfg.num_aug_views)) for _ in range(cfg.num_classes))


@dataclass
class FeatureSample:
    sample_id: str
    true_class: int
    features: dict[str, list[float]]


@dataclass
class FeatureSet:
    """Per-sample feature vectors for every view, plus the view naming."""

    num_classes: int
    feature_dim: int
    view_set: ViewSet
    samples: list[FeatureSample] = field(default_factory=list)


def generate(cfg: SynthConfig) -> tuple[FeatureSet, FeatureSet]:
    """Draw the benchmark and split it per class into (train, test).

    Class prototypes come from one seeded stream; each sample's noise comes
    from a stream derived from (seed, sample index). The planted view uses
    noise_optimal, the remaining augmentation views noise_other, and the
    default view noise_default.
    """
    planted = resolve_planted_views(cfg)
    views = cfg.view_set()
    proto_rng = np.random.default_rng([cfg.seed, 0])
    prototypes = proto_rng.normal(0.0, PROTOTYPE_SCALE, size=(cfg.num_classes, cfg.feature_dim))
    for a in range(cfg.num_classes):
        for b in range(a + 1, cfg.num_classes):
            if np.array_equal(prototypes[a], prototypes[b]):
                raise RuntimeError(f"degenerate draw: classes {a} and {b} share a prototype")

    train = FeatureSet(cfg.num_classes, cfg.feature_dim, views)
    test = FeatureSet(cfg.num_classes, cfg.feature_dim, views)
    n_train = cfg.train_count_per_class()
    for c in range(cfg.num_classes):
        for s in range(cfg.samples_per_class):
            g = c * cfg.samples_per_class + s
            rng = np.random.default_rng([cfg.seed, 1, g])
            feats = {
                DEFAULT_VIEW: prototypes[c] + rng.normal(0.0, cfg.noise_default, cfg.feature_dim)
            }
            for n in range(cfg.num_aug_views):
                sigma = cfg.noise_optimal if n == planted[c] else cfg.noise_other
                feats[aug_view_name(n)] = prototypes[c] + rng.normal(0.0, sigma, cfg.feature_dim)
            sample = FeatureSample(
                sample_id=f"c{c}s{s}",
                true_class=c,
                features={k: [float(x) for x in v] for k, v in feats.items()},
            )
            (train if s < n_train else test).samples.append(sample)
    return train, test


def save_features(fs: FeatureSet, path: str | Path) -> None:
    """Write a feature set as JSONL: one header line, one line per sample."""
    header = {
        "num_classes": fs.num_classes,
        "feature_dim": fs.feature_dim,
        "default_view": fs.view_set.default_view,
        "augmentation_views": list(fs.view_set.augmentation_views),
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in fs.samples:
            fh.write(
                json.dumps(
                    {"sample_id": s.sample_id, "true_class": s.true_class, "features": s.features}
                )
                + "\n"
            )


def load_features(path: str | Path) -> FeatureSet:
    p = Path(path)
    lines = p.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{p}: empty feature file")
    try:
        header = json.loads(lines[0])
        fs = FeatureSet(
            num_classes=int(header["num_classes"]),
            feature_dim=int(header["feature_dim"]),
            view_set=ViewSet(
                default_view=str(header["default_view"]),
                augmentation_views=[str(v) for v in header["augmentation_views"]],
            ),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"{p}:1: bad feature header: {exc}") from exc
    expected = set(fs.view_set.all_views())
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            sample = FeatureSample(
                sample_id=str(raw["sample_id"]),
                true_class=int(raw["true_class"]),
                features={str(k): [float(x) for x in v] for k, v in raw["features"].items()},
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{p}:{lineno}: bad feature record: {exc}") from exc
        if set(sample.features) != expected:
            raise ValueError(f"{p}:{lineno}: sample {sample.sample_id!r} views do not match header")
        for view, vec in sample.features.items():
            if len(vec) != fs.feature_dim:
                raise ValueError(
                    f"{p}:{lineno}: sample {sample.sample_id!r} view {view!r} has "
                    f"{len(vec)} features, expected {fs.feature_dim}"
                )
        fs.samples.append(sample)
    return fs


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 50
    batch_size: int = 32
    dropout_rate: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0.0):
            raise ValueError(f"learning_rate must be finite and >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class ToyModel:
    """Linear softmax classifier with its training provenance."""

    weights: np.ndarray  # num_classes x feature_dim
    bias: np.ndarray  # num_classes
    dropout_rate: float
    learning_rate: float
    epochs: int
    batch_size: int
    seed: int
    final_loss: float | None = None

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]


def default_view_arrays(fs: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    """Default-view features and labels stacked as (X, y) arrays."""
    X = np.array([s.features[fs.view_set.default_view] for s in fs.samples], dtype=float)
    y = np.array([s.true_class for s in fs.samples], dtype=np.int64)
    return X, y


def _softmax_rows(Z: np.ndarray) -> np.ndarray:
    shifted = Z - Z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _mean_cross_entropy(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    Z = X @ W.T + b
    shifted = Z - Z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(len(y)), y]))


def train(train_features: FeatureSet, model_cfg: TrainConfig) -> ToyModel:
    """Fit the classifier on default-view features by mini-batch descent.

    Parameters start at zero and follow the analytic cross-entropy gradient.
    Batches are reshuffled each epoch from the config seed, so the run is
    bit-reproducible. Raises if the loss or parameters leave the finite
    range, which points at the learning rate.
    """
    if not train_features.samples:
        raise ValueError("empty training set")
    X, y = default_view_arrays(train_features)
    if np.any(y < 0) or np.any(y >= train_features.num_classes):
        raise ValueError("training labels out of class range")
    K, d = train_features.num_classes, train_features.feature_dim
    W = np.zeros((K, d))
    b = np.zeros(K)
    rng = np.random.default_rng(model_cfg.seed)
    n = len(y)
    for epoch in range(model_cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, model_cfg.batch_size):
            idx = order[start : start + model_cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            # Overflow on a diverging run is caught by the finiteness check
            # below instead of spraying warnings.
            with np.errstate(over="ignore", invalid="ignore"):
                P = _softmax_rows(Xb @ W.T + b)
                G = P.copy()
                G[np.arange(len(yb)), yb] -= 1.0
                W = W - model_cfg.learning_rate * (G.T @ Xb) / len(yb)
                b = b - model_cfg.learning_rate * G.mean(axis=0)
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError(
                f"training diverged at epoch {epoch}: non-finite parameters; "
                "try a smaller learning rate"
            )
        loss = _mean_cross_entropy(W, b, X, y)
        if not math.isfinite(loss):
            raise ValueError(
                f"training diverged at epoch {epoch}: non-finite loss; "
                "try a smaller learning rate"
            )
    return ToyModel(
        weights=W,
        bias=b,
        dropout_rate=model_cfg.dropout_rate,
        learning_rate=model_cfg.learning_rate,
        epochs=model_cfg.epochs,
        batch_size=model_cfg.batch_size,
        seed=model_cfg.seed,
        final_loss=_mean_cross_entropy(W, b, X, y),
    )


def save_model(model: ToyModel, path: str | Path) -> None:
    payload = {
        "weights": [[float(w) for w in row] for row in model.weights],
        "bias": [float(v) for v in model.bias],
        "dropout_rate": model.dropout_rate,
        "learning_rate": model.learning_rate,
        "epochs": model.epochs,
        "batch_size": model.batch_size,
        "seed": model.seed,
        "final_loss": model.final_loss,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ToyModel:
    p = Path(path)
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
        model = ToyModel(
            weights=np.array(payload["weights"], dtype=float),
            bias=np.array(payload["bias"], dtype=float),
            dropout_rate=float(payload["dropout_rate"]),
            learning_rate=float(payload["learning_rate"]),
            epochs=int(payload["epochs"]),
            batch_size=int(payload["batch_size"]),
            seed=int(payload["seed"]),
            final_loss=None if payload.get("final_loss") is None else float(payload["final_loss"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{p}: bad model file: {exc}") from exc
    if model.weights.ndim != 2 or model.bias.shape != (model.weights.shape[0],):
        raise ValueError(f"{p}: model weight/bias shapes do not line up")
    if not (np.all(np.isfinite(model.weights)) and np.all(np.isfinite(model.bias))):
        raise ValueError(f"{p}: model parameters must be finite")
    return model


def loss_grad(model: ToyModel, x, y: int) -> tuple[np.ndarray, np.ndarray]:
    """Analytic cross-entropy gradient for one sample: ((p - onehot) x^T, p - onehot)."""
    x = np.asarray(x, dtype=float)
    p = _softmax_rows((model.weights @ x + model.bias)[None, :])[0]
    g = p.copy()
    g[y] -= 1.0
    return np.outer(g, x), g


def cross_entropy(model: ToyModel, x, y: int) -> float:
    """Single-sample cross-entropy loss, the quantity loss_grad differentiates."""
    x = np.asarray(x, dtype=float)
    z = model.weights @ x + model.bias
    shifted = z - z.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[y])


def gradnorm_score(model: ToyModel, x) -> float:
    """L1 norm of the weight gradient of uniform-target cross-entropy.

    The gradient is (p - 1/K) x^T, so its L1 norm factorizes into
    ||p - 1/K||_1 * ||x||_1; confident predictions score high.
    """
    x = np.asarray(x, dtype=float)
    p = _softmax_rows((model.weights @ x + model.bias)[None, :])[0]
    k = model.num_classes
    return float(np.abs(p - 1.0 / k).sum() * np.abs(x).sum())


def predict(
    model: ToyModel,
    features: FeatureSet,
    mc_samples: int = 16,
    mc_seed: int = 0,
    name: str = "synthetic",
) -> Manifest:
    """Run the model over every view and package the results as a manifest.

    mc_logits holds mc_samples stochastic passes with inverted input dropout
    (Bernoulli keep mask scaled by 1/(1-rate)); pass mc_samples=0 to skip
    them. Each sample's masks come from an RNG stream derived from
    (mc_seed, sample index). grad_l1 carries the gradient-norm score.
    """
    if model.dropout_rate >= 1.0:
        raise ValueError(f"dropout_rate must be < 1, got {model.dropout_rate}")
    if mc_samples == 1:
        raise ValueError("mc_samples must be 0 (disabled) or >= 2")
    if model.feature_dim != features.feature_dim:
        raise ValueError(
            f"model expects {model.feature_dim} features, set has {features.feature_dim}"
        )
    if model.num_classes != features.num_classes:
        raise ValueError(
            f"model has {model.num_classes} classes, set has {features.num_classes}"
        )
    keep = 1.0 - model.dropout_rate
    records = []
    for g, sample in enumerate(features.samples):
        rng = np.random.default_rng([mc_seed, g])
        views: dict[str, ViewPrediction] = {}
        for view in features.view_set.all_views():
            x = np.asarray(sample.features[view], dtype=float)
            logits = model.weights @ x + model.bias
            mc: list[list[float]] | None = None
            if mc_samples >= 2:
                mc = []
                for _ in range(mc_samples):
                    mask = rng.random(features.feature_dim) < keep
                    zm = model.weights @ (x * mask / keep) + model.bias
                    mc.append([float(v) for v in zm])
            views[view] = ViewPrediction(
                logits=[float(v) for v in logits],
                mc_logits=mc,
                grad_l1=gradnorm_score(model, x),
            )
        records.append(PredictionRecord(sample.sample_id, sample.true_class, views))
    manifest = Manifest(
        name=name,
        num_classes=features.num_classes,
        view_set=features.view_set,
        records=records,
    )
    problems = validate_manifest(manifest)
    if problems:
        raise ManifestError(f"generated manifest failed validation: {problems[0]}")
    return manifest
