"""Calibrated 0-100 driving safety scores from a crash classifier."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AnalysisError,
    ClassificationError,
    ConfigError,
    CrashScoreError,
    DataError,
    ExplanationError,
    ExtractionError,
    LoadError,
    MetricError,
    ModelFormatError,
    PredictionError,
    SchemaError,
    SplitError,
    TrainingError,
)
from .explain import (  # noqa: E402
    consensus_rank,
    impurity_importance,
    permutation_importance,
    recommend,
    shap_importance,
    tree_shap,
    tree_shap_many,
)
from .forest import Forest, ForestParams, load_model, predict_crash, predict_proba, save_model, train_forest  # noqa: E402
from .metrics import confusion, cross_validate, ordinal_confusion, pr_metrics, roc_auc, roc_curve  # noqa: E402
from .scoring import (  # noqa: E402
    DEFAULT_BANDS,
    CalibrationRule,
    CalibrationTable,
    RiskBands,
    assess,
    assess_many,
    calibrate,
    classify_risk,
    raw_score,
)
from .types import (  # noqa: E402
    ClassProbabilities,
    DrivingContext,
    FeatureSchema,
    Label,
    LabeledDataset,
    RiskLevel,
    SafetyAssessment,
)

__all__ = [
    "AnalysisError",
    "CalibrationRule",
    "CalibrationTable",
    "ClassProbabilities",
    "ClassificationError",
    "ConfigError",
    "CrashScoreError",
    "DEFAULT_BANDS",
    "DataError",
    "DrivingContext",
    "ExplanationError",
    "ExtractionError",
    "FeatureSchema",
    "Forest",
    "ForestParams",
    "Label",
    "LabeledDataset",
    "LoadError",
    "MetricError",
    "ModelFormatError",
    "PredictionError",
    "RiskBands",
    "RiskLevel",
    "SafetyAssessment",
    "SchemaError",
    "SplitError",
    "TrainingError",
    "assess",
    "assess_many",
    "calibrate",
    "classify_risk",
    "confusion",
    "consensus_rank",
    "cross_validate",
    "impurity_importance",
    "load_model",
    "ordinal_confusion",
    "permutation_importance",
    "pr_metrics",
    "predict_crash",
    "predict_proba",
    "raw_score",
    "recommend",
    "roc_auc",
    "roc_curve",
    "save_model",
    "shap_importance",
    "train_forest",
    "tree_shap",
    "tree_shap_many",
]
