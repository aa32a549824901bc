"""Multi-seed experiment runs and hyperparameter search."""

from .runner import ExperimentResult, ExperimentRunner, MetricRow, SeedRun
from .search import HyperparameterSearch, SearchSpace, candidate_hash, rank_results

__all__ = [
    "ExperimentResult",
    "ExperimentRunner",
    "HyperparameterSearch",
    "MetricRow",
    "SearchSpace",
    "SeedRun",
    "candidate_hash",
    "rank_results",
]
