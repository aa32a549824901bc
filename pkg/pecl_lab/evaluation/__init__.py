"""Evaluation metrics."""

from .metrics import (
    FmseResult,
    MetricReport,
    SeedAggregate,
    aggregate_fmse,
    aggregate_seeds,
    build_metric_report,
    fmse,
    mse,
    pearson,
    per_unit_mse,
    topk_accuracy,
)

__all__ = [
    "FmseResult",
    "MetricReport",
    "SeedAggregate",
    "aggregate_fmse",
    "aggregate_seeds",
    "build_metric_report",
    "fmse",
    "mse",
    "pearson",
    "per_unit_mse",
    "topk_accuracy",
]
