"""
Grid and random hyperparameter search.

Random mode draws

    learning_rate  10 ** U(-5, -3)
    batch_size     one of 8, 16, 32, 64
    k              integer in 1..10 (1..7 when batch_size is 8)
    alpha          10 ** U(-1.5, 0)
    tau            U(0.1, 1)

from a seeded stream. Every candidate is trained on all configured seeds.
Finished candidates are appended to ``search_results.jsonl`` as they
complete, keyed by a hash of their settings, so an interrupted sweep
resumes where it stopped.
"""

import hashlib
import itertools
import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from ..config.config import ExperimentConfig, HyperParams
from ..core.numeric import SeededRng
from ..dataset.io import write_rows_csv
from ..dataset.spatial import SplitAssignment
from ..dataset.tables import LocationTable
from ..exceptions import InvalidConfigError
from ..utils.error_handling import ErrorHandler, create_success_response
from .runner import MEAN_RATE, TRAINED, ExperimentRunner

logger = logging.getLogger(__name__)

RANDOM_BATCH_SIZES = (8, 16, 32, 64)
LR_LOG10_RANGE = (-5.0, -3.0)
ALPHA_LOG10_RANGE = (-1.5, 0.0)
TAU_RANGE = (0.1, 1.0)
K_MAX = 10
K_MAX_SMALL_BATCH = 7
GRID_KEYS = ("learning_rate", "batch_size", "k", "alpha", "tau", "soft_label_source", "epochs")

RESULTS_FILE = "search_results.jsonl"
RANKED_FILE = "search_ranked.csv"
PARAM_COLUMNS = ["learning_rate", "batch_size", "k", "alpha", "tau", "soft_label_source", "epochs"]
METRIC_COLUMNS = [
    "val_mse_mean",
    "val_mse_sem",
    "val_top5_mean",
    "val_top10_mean",
    "val_top10_sem",
    "test_mse_mean",
    "test_mse_sem",
    "test_top5_mean",
    "test_top10_mean",
    "test_top10_sem",
    "baseline_val_mse",
    "baseline_test_mse",
]


class SearchSpace:
    """Candidate generator for both search modes."""

    def __init__(self, base: HyperParams, grid: Optional[Dict[str, Sequence[Any]]] = None):
        self.base = base
        self.grid = dict(grid or {})
        unknown = [key for key in self.grid if key not in GRID_KEYS]
        if unknown:
            raise InvalidConfigError(f"unknown grid keys {unknown}; allowed {list(GRID_KEYS)}")
        empty = [key for key, values in self.grid.items() if not values]
        if empty:
            raise InvalidConfigError(f"grid keys {empty} have no values")

    def grid_candidates(self) -> List[HyperParams]:
        """Cartesian product of the grid values in key order."""
        keys = list(self.grid)
        candidates = []
        for combo in itertools.product(*(self.grid[key] for key in keys)):
            candidates.append(self.base.model_copy(update=dict(zip(keys, combo))))
        return [HyperParams.model_validate(c.model_dump()) for c in candidates]

    def sample(self, rng: SeededRng) -> HyperParams:
        batch_size = int(RANDOM_BATCH_SIZES[int(rng.integers(0, len(RANDOM_BATCH_SIZES)))])
        k_max = K_MAX_SMALL_BATCH if batch_size == 8 else K_MAX
        return self.base.model_copy(
            update={
                "learning_rate": float(10.0 ** rng.uniform(*LR_LOG10_RANGE)),
                "batch_size": batch_size,
                "k": int(rng.integers(1, k_max + 1)),
                "alpha": float(10.0 ** rng.uniform(*ALPHA_LOG10_RANGE)),
                "tau": float(rng.uniform(*TAU_RANGE)),
            }
        )

    def random_candidates(self, n_samples: int, seed: int) -> List[HyperParams]:
        rng = SeededRng(seed)
        return [self.sample(rng) for _ in range(n_samples)]


def candidate_hash(params: HyperParams, seeds: Sequence[int]) -> str:
    """Stable identifier of a candidate and the seeds it is trained on."""
    payload = {
        "params": params.model_dump(mode="json", exclude={"seed"}),
        "seeds": [int(s) for s in seeds],
    }
    combined = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(combined.encode("utf-8")).hexdigest()[:16]


def _metric(result, model: str, split: str, metric: str, field: str = "mean"):
    row = result.row(model, split, metric)
    return getattr(row, field) if row is not None else None


class HyperparameterSearch:
    """Runs every candidate through ExperimentRunner and ranks by validation MSE."""

    def __init__(
        self,
        config: ExperimentConfig,
        table: LocationTable,
        assignment: SplitAssignment,
        output_dir,
        workers: Optional[int] = None,
        progress_callback: Optional[Callable[[str], None]] = None,
    ):
        self.config = config
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.progress_callback = progress_callback
        self.error_handler = ErrorHandler("HyperparameterSearch")
        self.runner = ExperimentRunner(config, table, assignment, workers=workers)
        self.space = SearchSpace(config.hyperparams(config.training.seeds[0]), config.search.grid)

    @property
    def results_path(self) -> Path:
        return self.output_dir / RESULTS_FILE

    @property
    def ranked_path(self) -> Path:
        return self.output_dir / RANKED_FILE

    def _emit_progress(self, message: str):
        logger.info(message)
        if self.progress_callback:
            self.progress_callback(message)

    def candidates(self, mode: Optional[str] = None) -> List[HyperParams]:
        mode = mode or self.config.search.mode
        if mode == "grid":
            return self.space.grid_candidates()
        if mode == "random":
            return self.space.random_candidates(self.config.search.n_samples, self.config.search.seed)
        raise InvalidConfigError(f"unknown search mode {mode!r}")

    def load_completed(self) -> Dict[str, Dict[str, Any]]:
        """Successful records already on disk, by candidate hash (latest wins)."""
        completed = {}
        if not self.results_path.exists():
            return completed
        with open(self.results_path, "r") as f:
            for number, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    self.error_handler.log_warning(f"skipping unreadable line {number} of {self.results_path}")
                    continue
                if record.get("success"):
                    completed[record["hash"]] = record
        return completed

    def _append(self, record: Dict[str, Any]):
        with open(self.results_path, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
            f.flush()

    def _evaluate(self, index: int, params: HyperParams, digest: str) -> Dict[str, Any]:
        seeds = self.config.training.seeds
        base = {"index": index, "hash": digest}
        base.update(params.model_dump(mode="json", include=set(PARAM_COLUMNS)))
        try:
            result = self.runner.run(seeds=seeds, hyperparams=params, name=f"candidate_{index}")
        except Exception as e:
            response = self.error_handler.handle_exception(e, f"candidate {index} ({digest})")
            response.update(base)
            return response

        metrics = {}
        for split in ("val", "test"):
            for metric in ("mse", "top5", "top10"):
                metrics[f"{split}_{metric}_mean"] = _metric(result, TRAINED, split, metric)
                metrics[f"{split}_{metric}_sem"] = _metric(result, TRAINED, split, metric, "sem")
            metrics[f"baseline_{split}_mse"] = _metric(result, MEAN_RATE, split, "mse")
        response = create_success_response(base)
        response.update(metrics)
        return response

    def run(self, mode: Optional[str] = None) -> List[Dict[str, Any]]:
        """Evaluate outstanding candidates, then write and return the ranked table."""
        candidates = self.candidates(mode)
        seeds = self.config.training.seeds
        completed = self.load_completed()
        records: List[Dict[str, Any]] = []

        for index, params in enumerate(candidates):
            digest = candidate_hash(params, seeds)
            if digest in completed:
                self._emit_progress(f"candidate {index + 1}/{len(candidates)} already done ({digest})")
                records.append(dict(completed[digest], index=index))
                continue
            self._emit_progress(f"candidate {index + 1}/{len(candidates)}: {params.model_dump(mode='json')}")
            record = self._evaluate(index, params, digest)
            self._append(record)
            records.append(record)

        ranked = rank_results(records)
        columns = ["rank", "index", "hash", "success"] + PARAM_COLUMNS + METRIC_COLUMNS + ["error"]
        write_rows_csv(self.ranked_path, ranked, columns)
        self._emit_progress(f"{len(ranked)} candidates ranked in {self.ranked_path}")
        return ranked


def rank_results(records: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Successful candidates by ascending validation MSE (then index); failures last."""
    def key(record):
        value = record.get("val_mse_mean")
        ok = bool(record.get("success")) and value is not None
        return (0 if ok else 1, value if ok else 0.0, record["index"])

    ranked = []
    for rank, record in enumerate(sorted(records, key=key), start=1):
        ranked.append(dict(record, rank=rank))
    return ranked
