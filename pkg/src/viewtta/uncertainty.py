"""Predictive uncertainty metrics over per-view predictions.

Six metrics are supported: entropy, nll, brier, odin, mcd, gradnorm (the
lowercase names are the canonical CLI/config spellings). Every metric is
oriented so that a larger value means more uncertain; values are only
comparable within one metric kind. Labels are never consulted: nll and
brier score against the predicted class, so the metrics work on unlabeled
test data. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import ManifestError, PredictionRecord, softmax

METRIC_KINDS = ("entropy", "nll", "brier", "odin", "mcd", "gradnorm")


class MetricUnavailable(RuntimeError):
    """The record lacks the data (mc_logits / grad_l1) this metric needs."""


@dataclass(frozen=True)
class MetricConfig:
    """Which uncertainty metric to use, plus its hyperparameters."""

    kind: str
    odin_temperature: float = 1000.0
    mcd_min_samples: int = 2

    def __post_init__(self) -> None:
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}, expected one of {METRIC_KINDS}")
        if not self.odin_temperature > 0:
            raise ValueError(f"odin_temperature must be > 0, got {self.odin_temperature}")
        if self.mcd_min_samples < 2:
            raise ValueError(f"mcd_min_samples must be >= 2, got {self.mcd_min_samples}")


@dataclass(frozen=True)
class Uncertainty:
    """A finite uncertainty value tagged with the metric that produced it."""

    value: float
    metric: str


def _check_probs(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"expected a probability vector of length >= 2, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("probabilities must be finite and nonnegative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
    return p


def entropy(p) -> float:
    """Shannon entropy -sum p*ln(p) in nats, with 0*ln(0) taken as 0."""
    p = _check_probs(p)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(-terms.sum())


def nll(p) -> float:
    """Negative log-likelihood of the predicted class: -ln(max p)."""
    p = _check_probs(p)
    return float(-np.log(p.max()))


def brier(p) -> float:
    """Brier score against the one-hot of the predicted class.

    Argmax ties break to the lowest class index.
    """
    p = _check_probs(p)
    onehot = np.zeros_like(p)
    onehot[int(np.argmax(p))] = 1.0
    return float(((p - onehot) ** 2).sum())


def odin(logits, temperature: float = 1000.0) -> float:
    """One minus the temperature-scaled max softmax probability."""
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=float)
    return float(1.0 - softmax(z / temperature).max())


def mcd(mc_logits, min_samples: int = 2) -> float:
    """Entropy of the mean softmax over stochastic forward passes."""
    rows = list(mc_logits)
    if len(rows) < min_samples:
        raise MetricUnavailable(f"mcd needs >= {min_samples} stochastic passes, got {len(rows)}")
    mean_p = np.mean([softmax(r) for r in rows], axis=0)
    return entropy(mean_p)


def gradnorm_uncertainty(grad_l1: float) -> float:
    """Negated gradient L1 norm: a larger norm signals more confidence."""
    if not grad_l1 >= 0:
        raise ValueError(f"grad_l1 must be >= 0, got {grad_l1}")
    return -float(grad_l1)


def uncertainty_of_view(record: PredictionRecord, view: str, cfg: MetricConfig) -> Uncertainty:
    """Compute the configured uncertainty for one view of one record.

    Raises MetricUnavailable (naming the sample and view) when the record
    does not carry the data the metric needs.
    """
    if view not in record.views:
        raise ManifestError(f"sample {record.sample_id!r}: view {view!r} not present")
    vp = record.views[view]
    where = f"sample {record.sample_id!r}, view {view!r}"
    if cfg.kind == "entropy":
        value = entropy(softmax(vp.logits))
    elif cfg.kind == "nll":
        value = nll(softmax(vp.logits))
    elif cfg.kind == "brier":
        value = brier(softmax(vp.logits))
    elif cfg.kind == "odin":
        value = odin(vp.logits, cfg.odin_temperature)
    elif cfg.kind == "mcd":
        if vp.mc_logits is None:
            raise MetricUnavailable(f"{where}: mc_logits absent, required for mcd")
        if len(vp.mc_logits) < cfg.mcd_min_samples:
            raise MetricUnavailable(
                f"{where}: mcd needs >= {cfg.mcd_min_samples} passes, got {len(vp.mc_logits)}"
            )
        value = mcd(vp.mc_logits, cfg.mcd_min_samples)
    elif cfg.kind == "gradnorm":
        if vp.grad_l1 is None:
            raise MetricUnavailable(f"{where}: grad_l1 absent, required for gradnorm")
        value = gradnorm_uncertainty(vp.grad_l1)
    else:  # pragma: no cover - guarded by MetricConfig
        raise ValueError(f"unknown metric kind {cfg.kind!r}")
    return Uncertainty(value=value, metric=cfg.kind)
