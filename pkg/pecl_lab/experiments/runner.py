"""
Multi-seed experiment runs.

One ``ExperimentRunner.run`` fits the projector once per seed on the train
split, selects on validation, and evaluates the selected model and the
mean-rate baseline on validation and test. Seeds run in a process pool when
more than one worker is configured; results are merged in seed order so the
output does not depend on scheduling.

Usage:
    runner = ExperimentRunner(config, table, assignment)
    result = runner.run()
    result.row("trained", "test", "mse").mean
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..config.config import ExperimentConfig, HyperParams
from ..dataset.augment import RasterAugmenter
from ..dataset.spatial import SplitAssignment
from ..dataset.tables import LocationTable
from ..evaluation.metrics import MetricReport, aggregate_seeds, build_metric_report
from ..exceptions import EmptySplitError, InvalidConfigError
from ..model.baseline import mean_rate_fit, mean_rate_predict
from ..model.checkpoint import save_checkpoint
from ..model.encoder import FrozenEncoder
from ..model.projector import predict
from ..model.trainer import TrainReport, Trainer
from ..utils.error_handling import ErrorHandler, log_errors

logger = logging.getLogger(__name__)

TRAINED = "trained"
MEAN_RATE = "mean_rate"
HEADLINE_METRICS = ("mse", "top5", "top10", "overall_fmse")
EVAL_SPLITS = ("val", "test")


class SeedRun(BaseModel):
    seed: int
    report: TrainReport
    metrics: Dict[str, MetricReport]
    checkpoint: Optional[str] = None


class MetricRow(BaseModel):
    """Mean and SEM of one metric for one model on one split."""

    model: str
    split: str
    metric: str
    mean: float
    sem: float
    n_seeds: int
    values: List[float] = Field(default_factory=list)


class ExperimentResult(BaseModel):
    name: str = "experiment"
    hyperparams: Optional[HyperParams] = None
    split_counts: Dict[str, int] = Field(default_factory=dict)
    baseline: Dict[str, MetricReport] = Field(default_factory=dict)
    runs: List[SeedRun] = Field(default_factory=list)
    rows: List[MetricRow] = Field(default_factory=list)
    per_species_fmse_mean: Dict[str, List[float]] = Field(default_factory=dict)

    def row(self, model: str, split: str, metric: str) -> Optional[MetricRow]:
        for r in self.rows:
            if (r.model, r.split, r.metric) == (model, split, metric):
                return r
        return None


def split_tables(table: LocationTable, assignment: SplitAssignment) -> Dict[str, LocationTable]:
    """Train/val/test sub-tables, each in the table's row order."""
    out = {}
    for name in ("train", "val", "test"):
        ids = [loc for loc in table.location_ids if assignment.splits.get(loc) == name]
        out[name] = table.subset(ids)
    unassigned = [loc for loc in table.location_ids if loc not in assignment.splits]
    if unassigned:
        logger.warning(f"{len(unassigned)} locations have no split assignment and are ignored")
    return out


def build_encoder(config: ExperimentConfig, input_dim: int) -> FrozenEncoder:
    return FrozenEncoder(
        kind=config.model.encoder,
        input_dim=input_dim,
        output_dim=config.model.embedding_dim if config.model.encoder == "random_projection" else None,
        seed=0,
    )


def build_augmenter(config: ExperimentConfig, feature_dim: int) -> Optional[RasterAugmenter]:
    if config.model.raster_shape is None:
        return None
    augmenter = RasterAugmenter(config.model.raster_shape, config.model.crop_to)
    if augmenter.input_dim != feature_dim:
        raise InvalidConfigError(
            f"raster_shape {config.model.raster_shape} implies {augmenter.input_dim} features, "
            f"data has {feature_dim}"
        )
    return augmenter


@log_errors()
def _run_seed(
    config: ExperimentConfig,
    tables: Dict[str, LocationTable],
    hyperparams: HyperParams,
    baseline_preds: Dict[str, np.ndarray],
    checkpoint_path: Optional[str],
) -> SeedRun:
    """Fit and evaluate one seed; module level so worker processes can pickle it."""
    train = tables["train"]
    augmenter = build_augmenter(config, train.feature_dim)
    input_dim = augmenter.output_dim if augmenter is not None else train.feature_dim
    encoder = build_encoder(config, input_dim)
    trainer = Trainer(
        encoder,
        config.model,
        hyperparams,
        patience=config.training.patience,
        selection_metric=config.training.selection_metric,
        augmenter=augmenter,
    )
    result = trainer.fit(train, tables["val"])

    metrics = {}
    for split in EVAL_SPLITS:
        table = tables[split]
        if len(table) == 0:
            continue
        features = table.features
        if augmenter is not None:
            features = augmenter(features, None, training=False)
        preds = predict(encoder, result.projector, features)
        metrics[split] = build_metric_report(
            table.labels,
            preds,
            baseline_preds[split],
            location_ids=table.location_ids,
            species_names=table.species_names,
        )

    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path,
            encoder,
            result.projector,
            optimizer=result.optimizer,
            rng_state=result.rng_state,
            report=result.report,
        )
    return SeedRun(seed=hyperparams.seed, report=result.report, metrics=metrics, checkpoint=checkpoint_path)


class ExperimentRunner:
    """Runs the multi-seed protocol for one hyperparameter setting."""

    def __init__(
        self,
        config: ExperimentConfig,
        table: LocationTable,
        assignment: SplitAssignment,
        workers: Optional[int] = None,
        progress_callback: Optional[Callable[[str], None]] = None,
    ):
        self.config = config
        self.table = table
        self.assignment = assignment
        self.workers = int(workers or config.training.workers)
        self.progress_callback = progress_callback
        self.error_handler = ErrorHandler("ExperimentRunner")
        self.tables = split_tables(table, assignment)

    def _emit_progress(self, message: str):
        logger.info(message)
        if self.progress_callback:
            self.progress_callback(message)

    def _baseline(self) -> Dict[str, np.ndarray]:
        if len(self.tables["train"]) == 0:
            raise EmptySplitError("training split is empty")
        model = mean_rate_fit(self.tables["train"].labels)
        return {
            split: mean_rate_predict(model, len(self.tables[split])) for split in EVAL_SPLITS
        }

    def run(
        self,
        seeds: Optional[Sequence[int]] = None,
        hyperparams: Optional[HyperParams] = None,
        baseline_only: bool = False,
        checkpoint_dir: Optional[Path] = None,
        name: str = "experiment",
    ) -> ExperimentResult:
        seeds = list(seeds if seeds is not None else self.config.training.seeds)
        result = ExperimentResult(
            name=name,
            hyperparams=hyperparams,
            split_counts={split: len(t) for split, t in self.tables.items()},
        )
        baseline_preds = self._baseline()
        for split in EVAL_SPLITS:
            table = self.tables[split]
            if len(table) == 0:
                self.error_handler.log_warning(f"{split} split is empty; no {split} metrics")
                continue
            result.baseline[split] = build_metric_report(
                table.labels,
                baseline_preds[split],
                location_ids=table.location_ids,
                species_names=table.species_names,
            )
        self._emit_progress(f"mean-rate baseline evaluated on {result.split_counts}")

        if not baseline_only:
            result.runs = self._run_seeds(seeds, hyperparams, baseline_preds, checkpoint_dir)
        result.rows = self._aggregate(result)
        result.per_species_fmse_mean = self._mean_species_fmse(result)
        return result

    def _run_seeds(self, seeds, hyperparams, baseline_preds, checkpoint_dir) -> List[SeedRun]:
        jobs = []
        for seed in seeds:
            params = (hyperparams or self.config.hyperparams(seed)).model_copy(update={"seed": int(seed)})
            ckpt = str(Path(checkpoint_dir) / f"seed_{seed}.json") if checkpoint_dir else None
            jobs.append((self.config, self.tables, params, baseline_preds, ckpt))

        if self.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(self.workers, len(jobs))) as pool:
                futures = [pool.submit(_run_seed, *job) for job in jobs]
                runs = [future.result() for future in futures]
        else:
            runs = []
            for job in jobs:
                runs.append(_run_seed(*job))
                self._emit_progress(f"seed {job[2].seed} done")
        return runs

    @staticmethod
    def _aggregate(result: ExperimentResult) -> List[MetricRow]:
        rows = []
        for split in EVAL_SPLITS:
            baseline = result.baseline.get(split)
            if baseline is not None:
                for metric in ("mse", "top5", "top10"):
                    value = getattr(baseline, metric)
                    if value is not None:
                        rows.append(
                            MetricRow(model=MEAN_RATE, split=split, metric=metric,
                                      mean=value, sem=0.0, n_seeds=1, values=[value])
                        )
            for metric in HEADLINE_METRICS:
                values = [
                    getattr(run.metrics[split], metric)
                    for run in result.runs
                    if split in run.metrics and getattr(run.metrics[split], metric) is not None
                ]
                values = [v for v in values if np.isfinite(v)]
                if not values:
                    continue
                agg = aggregate_seeds(values)
                rows.append(
                    MetricRow(model=TRAINED, split=split, metric=metric, mean=agg.mean,
                              sem=agg.sem, n_seeds=agg.n_seeds, values=agg.values)
                )
        return rows

    @staticmethod
    def _mean_species_fmse(result: ExperimentResult) -> Dict[str, List[float]]:
        out = {}
        for split in EVAL_SPLITS:
            per_seed = [run.metrics[split].per_species_fmse for run in result.runs if split in run.metrics]
            if per_seed:
                values = np.array(per_seed, dtype=np.float64)
                finite = np.isfinite(values)
                counts = finite.sum(axis=0)
                sums = np.where(finite, values, 0.0).sum(axis=0)
                # a species with zero model error in every seed stays inf
                out[split] = np.where(counts > 0, sums / np.maximum(counts, 1), np.inf).tolist()
        return out
