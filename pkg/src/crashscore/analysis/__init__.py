"""Experiment harnesses built on the scoring pipeline."""
from __future__ import annotations

from .ablation import AblationConfig, AblationReport, ablate, default_ablation_configs, pair
from .clustering import (
    ClusterReport,
    CompositeWeights,
    DriverProfile,
    KMeansResult,
    cluster_drivers,
    cluster_points,
    composite_scores,
    kmeans,
    kmeans_plus_plus,
)
from .grid import (
    DEFAULT_FACTORS,
    ExpectedLevelRules,
    GridFactor,
    GridLevel,
    GridScores,
    ScenarioGrid,
    ScenarioGridSpec,
    build_scenario_grid,
    describe,
    expected_levels,
    score_distribution,
)
from .impact import DEFAULT_THRESHOLDS, ImpactRow, simulate_impact
from .multipliers import DEFAULT_COMBOS, FactorPredicate, MultiplierReport, risk_multipliers
from .prevalence import PREVALENCE_FACTORS, PrevalenceReport, factor_flags, factor_prevalence
from .sensitivity import (
    DEFAULT_TRANSITIONS,
    FACTOR_FIELDS,
    Transition,
    TransitionResult,
    baseline_context,
    sensitivity,
)
from .validation import SCENARIO_TYPES, ScenarioValidation, kinematic_context, scenario_type, validate_by_scenario_type

__all__ = [
    "AblationConfig",
    "AblationReport",
    "ClusterReport",
    "CompositeWeights",
    "DEFAULT_COMBOS",
    "DEFAULT_FACTORS",
    "DEFAULT_THRESHOLDS",
    "DEFAULT_TRANSITIONS",
    "DriverProfile",
    "ExpectedLevelRules",
    "FACTOR_FIELDS",
    "FactorPredicate",
    "GridFactor",
    "GridLevel",
    "GridScores",
    "ImpactRow",
    "KMeansResult",
    "MultiplierReport",
    "PREVALENCE_FACTORS",
    "PrevalenceReport",
    "SCENARIO_TYPES",
    "ScenarioGrid",
    "ScenarioGridSpec",
    "ScenarioValidation",
    "Transition",
    "TransitionResult",
    "ablate",
    "baseline_context",
    "build_scenario_grid",
    "cluster_drivers",
    "cluster_points",
    "composite_scores",
    "default_ablation_configs",
    "describe",
    "expected_levels",
    "factor_flags",
    "factor_prevalence",
    "kinematic_context",
    "kmeans",
    "kmeans_plus_plus",
    "pair",
    "risk_multipliers",
    "scenario_type",
    "score_distribution",
    "sensitivity",
    "simulate_impact",
    "validate_by_scenario_type",
]
