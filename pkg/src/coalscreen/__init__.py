"""Coalition-based collusion screens for procurement bid data."""

from .coalitions import (BASE_STATS, EXTENDED_STATS, Coalition, FeatureTable, aggregate, build_feature_table,
                         enumerate_coalitions, feature_names, label_coalition)
from .data import Dataset, DataError, ParticipationIndex, build_index, parse_dataset, validate
from .pipeline import (ExperimentConfig, EvaluationReport, balance, ccr_metrics, class_medians_report,
                       feature_subset, run_experiment, split)
from .screens import SCREENS, ScreenVector, screen_matrix, screen_vector
from .synthgen import MarketParams, gen_market, gen_scenario_suite, scenario

__version__ = "0.1.0"

__all__ = [
    "BASE_STATS", "EXTENDED_STATS", "Coalition", "FeatureTable", "aggregate", "build_feature_table",
    "enumerate_coalitions", "feature_names", "label_coalition", "Dataset", "DataError", "ParticipationIndex",
    "build_index", "parse_dataset", "validate", "ExperimentConfig", "EvaluationReport", "balance",
    "ccr_metrics", "class_medians_report", "feature_subset", "run_experiment", "split", "SCREENS",
    "ScreenVector", "screen_matrix", "screen_vector", "MarketParams", "gen_market", "gen_scenario_suite",
    "scenario",
]
