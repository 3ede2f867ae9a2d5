"""Crash-record and trajectory ingestion, feature engineering, safe-sample synthesis and splits."""
from __future__ import annotations

from .codes import CodeMap
from .features import (
    DEFAULT_FEATURE_CONFIG,
    FeatureConfig,
    derive,
    engineer_features,
    engineer_matrix,
    is_night_hour,
    is_rush_hour,
    rederive_context,
)
from .kinematics import (
    AgentTrack,
    KinematicConfig,
    KinematicFeatures,
    TrajectoryScenario,
    extract_kinematics,
    load_scenario_meta,
    load_trajectories,
    write_trajectories,
)
from .records import CrashRecord, IngestionReport, load_crash_records, write_crash_records
from .split import stratified_folds, stratified_split, stratified_split_indices
from .synthesis import (
    PROVENANCE_CRASH,
    PROVENANCE_SAFE,
    FlipRates,
    build_balanced_dataset,
    synthesize_safe_samples,
)

__all__ = [
    "AgentTrack",
    "CodeMap",
    "CrashRecord",
    "DEFAULT_FEATURE_CONFIG",
    "FeatureConfig",
    "FlipRates",
    "IngestionReport",
    "KinematicConfig",
    "KinematicFeatures",
    "PROVENANCE_CRASH",
    "PROVENANCE_SAFE",
    "TrajectoryScenario",
    "build_balanced_dataset",
    "derive",
    "engineer_features",
    "engineer_matrix",
    "extract_kinematics",
    "is_night_hour",
    "is_rush_hour",
    "load_crash_records",
    "load_scenario_meta",
    "load_trajectories",
    "rederive_context",
    "stratified_folds",
    "stratified_split",
    "stratified_split_indices",
    "synthesize_safe_samples",
    "write_crash_records",
    "write_trajectories",
]
