"""Uncertainty-gated multi-view test-time augmentation engine."""

from .records import (
    UNLABELED,
    Manifest,
    ManifestError,
    PredictionRecord,
    ViewPrediction,
    ViewSet,
    load_manifest,
    save_manifest,
    softmax,
    validate_manifest,
)
from .uncertainty import (
    METRIC_KINDS,
    MetricConfig,
    MetricUnavailable,
    Uncertainty,
    brier,
    entropy,
    gradnorm_uncertainty,
    mcd,
    nll,
    odin,
    uncertainty_of_view,
)
from .selection import (
    OptimalViewTable,
    SelectionMatrix,
    fit_view_table,
    load_view_table,
    save_view_table,
    select_optimal_view,
)
from .inference import TtaDecision, infer_all, infer_one, save_decisions
from .evaluation import (
    BaselineReport,
    SweepResult,
    load_sweep,
    random_aug_accuracy,
    report,
    save_sweep,
    single_view_accuracy,
    sweep,
    tau_grid,
)
from .synthetic import (
    DEFAULT_VIEW,
    PROTOTYPE_SCALE,
    FeatureSample,
    FeatureSet,
    SynthConfig,
    ToyModel,
    TrainConfig,
    aug_view_name,
    cross_entropy,
    default_view_arrays,
    generate,
    gradnorm_score,
    load_features,
    load_model,
    loss_grad,
    predict,
    resolve_planted_views,
    save_features,
    save_model,
    train,
)

__all__ = [
    "UNLABELED",
    "Manifest",
    "ManifestError",
    "PredictionRecord",
    "ViewPrediction",
    "ViewSet",
    "load_manifest",
    "save_manifest",
    "softmax",
    "validate_manifest",
    "METRIC_KINDS",
    "MetricConfig",
    "MetricUnavailable",
    "Uncertainty",
    "brier",
    "entropy",
    "gradnorm_uncertainty",
    "mcd",
    "nll",
    "odin",
    "uncertainty_of_view",
    "OptimalViewTable",
    "SelectionMatrix",
    "fit_view_table",
    "load_view_table",
    "save_view_table",
    "select_optimal_view",
    "TtaDecision",
    "infer_all",
    "infer_one",
    "save_decisions",
    "BaselineReport",
    "SweepResult",
    "load_sweep",
    "random_aug_accuracy",
    "report",
    "save_sweep",
    "single_view_accuracy",
    "sweep",
    "tau_grid",
    "DEFAULT_VIEW",
    "PROTOTYPE_SCALE",
    "FeatureSample",
    "FeatureSet",
    "SynthConfig",
    "ToyModel",
    "TrainConfig",
    "aug_view_name",
    "cross_entropy",
    "default_view_arrays",
    "generate",
    "gradnorm_score",
    "load_features",
    "load_model",
    "loss_grad",
    "predict",
    "resolve_planted_views",
    "save_features",
    "save_model",
    "train",
]

__version__ = "0.1.0"
