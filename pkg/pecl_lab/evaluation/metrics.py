"""
Evaluation metrics: MSE, top-k species accuracy, f_MSE and seed aggregation.

f_MSE is the ratio of the mean-rate baseline's MSE to the model's MSE for a
single location or species; values above 1 mean the model beats the
baseline there.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from ..core.numeric import as_matrix, as_vector
from ..exceptions import KTooLargeError, ShapeMismatchError, ZeroVarianceError

logger = logging.getLogger(__name__)

PER_LOCATION = "per_location"
PER_SPECIES = "per_species"
_AXES = {PER_LOCATION: 1, PER_SPECIES: 0}


def _aligned(labels, preds) -> Tuple[np.ndarray, np.ndarray]:
    y = as_matrix(labels, "labels")
    p = as_matrix(preds, "preds")
    if y.shape != p.shape:
        raise ShapeMismatchError(f"labels {y.shape} and predictions {p.shape} differ")
    return y, p


def mse(labels, preds) -> float:
    """Mean of the N x S squared differences."""
    y, p = _aligned(labels, preds)
    return float(np.mean((y - p) ** 2))


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the k largest scores per row; ties go to the lower index."""
    return np.argsort(-scores, axis=1, kind="stable")[:, :k]


def topk_accuracy(labels, preds, k: int) -> float:
    """Average overlap of predicted and true top-k species sets, in percent."""
    y, p = _aligned(labels, preds)
    if k < 1 or k > y.shape[1]:
        raise KTooLargeError(f"k={k} is invalid for {y.shape[1]} species")
    true_top = top_k_indices(y, k)
    pred_top = top_k_indices(p, k)
    overlaps = [
        len(set(t.tolist()) & set(q.tolist())) for t, q in zip(true_top, pred_top)
    ]
    return 100.0 * float(np.mean(overlaps)) / k


def per_unit_mse(labels, preds, axis: str = PER_LOCATION) -> np.ndarray:
    """MSE of each location (mean over species) or each species (mean over locations)."""
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {sorted(_AXES)}, got {axis!r}")
    y, p = _aligned(labels, preds)
    return np.mean((y - p) ** 2, axis=_AXES[axis])


@dataclass
class FmseResult:
    """Per-unit ratios; ``infinite`` flags units where the model error is zero."""

    ratios: np.ndarray
    infinite: np.ndarray
    baseline_mse: np.ndarray
    model_mse: np.ndarray

    @property
    def any_infinite(self) -> bool:
        return bool(np.any(self.infinite))


def fmse(baseline_preds, model_preds, labels, axis: str = PER_LOCATION) -> FmseResult:
    """Baseline MSE over model MSE along ``axis``; zero model error gives +inf."""
    baseline = per_unit_mse(labels, baseline_preds, axis)
    model = per_unit_mse(labels, model_preds, axis)
    infinite = model == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(infinite, np.inf, baseline / np.where(infinite, 1.0, model))
    if np.any(infinite):
        logger.warning(f"{int(infinite.sum())} {axis} units have zero model error; f_MSE set to inf")
    return FmseResult(ratios=ratios, infinite=infinite, baseline_mse=baseline, model_mse=model)


def aggregate_fmse(result: FmseResult) -> float:
    """Overall ratio from per-unit ratios weighted by model error.

    Units flagged infinite carry zero model error and are left out of both sums.
    """
    finite = ~result.infinite
    weights = result.model_mse[finite]
    total = float(np.sum(weights))
    if total == 0.0:
        return float("inf")
    return float(np.sum(result.ratios[finite] * weights) / total)


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    return pearson_with_p(x, y)[0]


def pearson_with_p(x, y) -> Tuple[float, float]:
    """Pearson r plus scipy's two-sided p-value, reported descriptively."""
    a = as_vector(x, "x")
    b = as_vector(y, "y")
    if a.size != b.size:
        raise ShapeMismatchError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ZeroVarianceError("correlation needs at least two points")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise ZeroVarianceError("correlation input has zero variance")
    r, p = stats.pearsonr(a, b)
    return float(np.clip(r, -1.0, 1.0)), float(p)


class SeedAggregate(BaseModel):
    """Mean and standard error of one metric across seeds."""

    values: List[float]
    mean: float
    sem: float

    @property
    def n_seeds(self) -> int:
        return len(self.values)


def aggregate_seeds(values: Sequence[float]) -> SeedAggregate:
    """Mean and SEM (sample sd over sqrt(n)); SEM is 0 for a single seed."""
    v = as_vector(values, "values")
    sem = float(stats.sem(v, ddof=1)) if v.size > 1 else 0.0
    return SeedAggregate(values=v.tolist(), mean=float(np.mean(v)), sem=sem)


class MetricReport(BaseModel):
    """Metrics of one model on one split, compared against the mean-rate baseline."""

    mse: float
    top5: Optional[float] = None
    top10: Optional[float] = None
    baseline_mse: Optional[float] = None
    overall_fmse: Optional[float] = None
    location_ids: List[str] = Field(default_factory=list)
    species_names: List[str] = Field(default_factory=list)
    per_location_fmse: List[float] = Field(default_factory=list)
    per_species_fmse: List[float] = Field(default_factory=list)
    per_species_mean_rate: List[float] = Field(default_factory=list)
    species_richness: List[int] = Field(default_factory=list)
    pearson_r_species_count: Optional[float] = None
    pearson_p_species_count: Optional[float] = None
    fmse_infinite_units: int = 0

    def headline(self) -> Dict[str, Optional[float]]:
        return {"mse": self.mse, "top5": self.top5, "top10": self.top10}


def _optional_topk(labels, preds, k) -> Optional[float]:
    if labels.shape[1] < k:
        return None
    return topk_accuracy(labels, preds, k)


def build_metric_report(
    labels,
    model_preds,
    baseline_preds=None,
    location_ids: Optional[Sequence[str]] = None,
    species_names: Optional[Sequence[str]] = None,
    richness: Optional[Sequence[int]] = None,
) -> MetricReport:
    """MSE and top-k for ``model_preds``; f_MSE analysis when a baseline is given.

    ``richness`` defaults to the number of species with a nonzero label at
    each location.
    """
    y, p = _aligned(labels, model_preds)
    n, s = y.shape
    report = MetricReport(
        mse=mse(y, p),
        top5=_optional_topk(y, p, 5),
        top10=_optional_topk(y, p, 10),
        location_ids=list(location_ids) if location_ids is not None else [str(i) for i in range(n)],
        species_names=list(species_names) if species_names is not None else [f"species_{j}" for j in range(s)],
    )
    if baseline_preds is None:
        return report

    b = as_matrix(baseline_preds, "baseline_preds")
    per_location = fmse(b, p, y, PER_LOCATION)
    per_species = fmse(b, p, y, PER_SPECIES)
    richness_arr = (
        np.asarray(richness, dtype=int) if richness is not None else np.count_nonzero(y > 0, axis=1)
    )

    report.baseline_mse = mse(y, b)
    report.overall_fmse = aggregate_fmse(per_location)
    report.per_location_fmse = per_location.ratios.tolist()
    report.per_species_fmse = per_species.ratios.tolist()
    report.per_species_mean_rate = b[0].tolist()
    report.species_richness = richness_arr.tolist()
    report.fmse_infinite_units = int(per_location.infinite.sum() + per_species.infinite.sum())

    finite = ~per_location.infinite
    try:
        r, pval = pearson_with_p(per_location.ratios[finite], richness_arr[finite])
        report.pearson_r_species_count = r
        report.pearson_p_species_count = pval
    except ZeroVarianceError as e:
        logger.warning(f"f_MSE vs species richness correlation undefined: {e}")
    return report


def long_format_rows(report: MetricReport, split: str = "", run: str = "") -> List[Dict]:
    """Plot-ready rows ``unit_id, axis, value`` for per-unit f_MSE and richness."""
    rows = []
    for loc, value, rich in zip(report.location_ids, report.per_location_fmse, report.species_richness):
        rows.append({"run": run, "split": split, "unit_id": loc, "axis": "fmse_per_location", "value": value})
        rows.append({"run": run, "split": split, "unit_id": loc, "axis": "species_richness", "value": rich})
    for name, value, rate in zip(report.species_names, report.per_species_fmse, report.per_species_mean_rate):
        rows.append({"run": run, "split": split, "unit_id": name, "axis": "fmse_per_species", "value": value})
        rows.append({"run": run, "split": split, "unit_id": name, "axis": "mean_rate", "value": rate})
    return rows
