"""
Minibatch training of the projector on frozen features.

Each epoch reshuffles the training split with a seeded stream, so batches
differ across epochs but the whole run is reproducible from the seed. The
parameters of the epoch with the lowest validation loss are kept, and
training stops once the validation loss has not improved for ``patience``
epochs.

Usage:
    trainer = Trainer(encoder, model_config, hyperparams)
    result = trainer.fit(train_table, val_table)
    result.report.best_epoch
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..config.config import HyperParams, ModelConfig
from ..contrastive.losses import ContrastiveConfig, combined_loss
from ..core.numeric import SeededRng
from ..dataset.tables import LocationTable
from ..evaluation.metrics import mse, topk_accuracy
from ..exceptions import EmptySplitError, ShapeMismatchError
from .encoder import FrozenEncoder
from .optim import AdamState, adam_step
from .projector import MlpProjector, backward, forward

logger = logging.getLogger(__name__)

SHUFFLE_STREAM = 1
AUGMENT_STREAM = 2


class EpochRecord(BaseModel):
    """Losses recorded after one epoch."""

    epoch: int
    train_loss: float
    train_bce: float
    train_pecl: float
    val_loss: float
    val_bce: float
    val_pecl: float


class TrainReport(BaseModel):
    """Outcome of one fit: per-epoch losses, the selected epoch and final metrics."""

    seed: int
    hyperparams: HyperParams
    selection_metric: str = "combined"
    patience: int = 10
    epochs: List[EpochRecord] = Field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False
    initial_train_bce: float = 0.0
    initial_val_loss: float = 0.0
    final_metrics: Dict[str, float] = Field(default_factory=dict)

    @property
    def train_losses(self) -> List[float]:
        return [record.train_loss for record in self.epochs]

    @property
    def val_losses(self) -> List[float]:
        return [record.val_loss for record in self.epochs]

    def selected_val_loss(self) -> float:
        if self.best_epoch is None:
            return self.initial_val_loss
        record = self.epochs[self.best_epoch - 1]
        return record.val_loss if self.selection_metric == "combined" else record.val_bce


@dataclass
class TrainResult:
    """Trained projector with the optimizer and shuffle state of its selected epoch."""

    projector: MlpProjector
    report: TrainReport
    optimizer: AdamState
    rng_state: Optional[dict] = None


def evaluate_losses(
    encoder: FrozenEncoder,
    projector: MlpProjector,
    table: LocationTable,
    loss_config: ContrastiveConfig,
    batch_size: int,
    augmenter=None,
) -> Dict[str, float]:
    """Combined, BCE and PECL loss over fixed-order batches, weighted by batch size."""
    n = len(table)
    if n == 0:
        raise EmptySplitError("cannot evaluate losses on an empty split")
    totals = {"combined": 0.0, "bce": 0.0, "pecl": 0.0}
    for start in range(0, n, batch_size):
        rows = np.arange(start, min(start + batch_size, n))
        features = table.features[rows]
        if augmenter is not None:
            features = augmenter(features, None, training=False)
        fp = forward(encoder, projector, features)
        out = combined_loss(table.labels[rows], fp.predictions, fp.embeddings, loss_config)
        size = len(rows)
        totals["combined"] += out.value * size
        totals["bce"] += out.components["bce"] * size
        totals["pecl"] += out.components["pecl"] * size
    return {name: value / n for name, value in totals.items()}


class Trainer:
    """Fits an MlpProjector with Adam on combined BCE + alpha * PECL."""

    def __init__(
        self,
        encoder: FrozenEncoder,
        model_config: ModelConfig,
        hyperparams: HyperParams,
        patience: int = 10,
        selection_metric: str = "combined",
        augmenter=None,
        progress_callback: Optional[Callable[[str], None]] = None,
    ):
        if selection_metric not in ("combined", "bce"):
            raise ValueError(f"unknown selection metric {selection_metric!r}")
        self.encoder = encoder
        self.model_config = model_config
        self.hyperparams = hyperparams
        self.loss_config = hyperparams.loss_config()
        self.patience = int(patience)
        self.selection_metric = selection_metric
        self.augmenter = augmenter
        self.progress_callback = progress_callback

    def _emit_progress(self, message: str):
        logger.info(message)
        if self.progress_callback:
            self.progress_callback(message)

    def build_projector(self, species_count: int) -> MlpProjector:
        return MlpProjector(
            input_dim=self.encoder.output_dim,
            output_dim=species_count,
            n_layers=self.model_config.n_layers,
            hidden_width=self.model_config.hidden_width,
            use_adapter=self.model_config.use_adapter,
            seed=self.hyperparams.seed,
        )

    def _selection_value(self, losses: Dict[str, float]) -> float:
        return losses["combined"] if self.selection_metric == "combined" else losses["bce"]

    def _train_epoch(
        self,
        projector: MlpProjector,
        state: AdamState,
        train: LocationTable,
        shuffle_rng: SeededRng,
        augment_rng: SeededRng,
    ) -> Dict[str, float]:
        n = len(train)
        batch_size = self.hyperparams.batch_size
        order = shuffle_rng.permutation(n)
        totals = {"combined": 0.0, "bce": 0.0, "pecl": 0.0}

        # the final short batch is kept
        for start in range(0, n, batch_size):
            rows = order[start : start + batch_size]
            features = train.features[rows]
            if self.augmenter is not None:
                features = self.augmenter(features, augment_rng, training=True)
            fp = forward(self.encoder, projector, features)
            out = combined_loss(train.labels[rows], fp.predictions, fp.embeddings, self.loss_config)
            grads = backward(projector, fp, out)
            projector.set_parameters(adam_step(state, projector.parameters(), grads))

            size = len(rows)
            totals["combined"] += out.value * size
            totals["bce"] += out.components["bce"] * size
            totals["pecl"] += out.components["pecl"] * size
        return {name: value / n for name, value in totals.items()}

    def _final_metrics(self, projector: MlpProjector, train: LocationTable, val: LocationTable):
        batch_size = self.hyperparams.batch_size
        train_losses = evaluate_losses(
            self.encoder, projector, train, self.loss_config, batch_size, self.augmenter
        )
        val_losses = evaluate_losses(
            self.encoder, projector, val, self.loss_config, batch_size, self.augmenter
        )
        features = val.features
        if self.augmenter is not None:
            features = self.augmenter(features, None, training=False)
        preds = forward(self.encoder, projector, features).predictions
        metrics = {
            "train_bce": train_losses["bce"],
            "train_loss": train_losses["combined"],
            "val_bce": val_losses["bce"],
            "val_loss": val_losses["combined"],
            "val_mse": mse(val.labels, preds),
        }
        for k in (5, 10):
            if val.species_count >= k:
                metrics[f"val_top{k}"] = topk_accuracy(val.labels, preds, k)
        return metrics

    def fit(self, train: LocationTable, val: LocationTable) -> TrainResult:
        """Train for up to ``hyperparams.epochs`` epochs and keep the best epoch."""
        if len(train) == 0:
            raise EmptySplitError("training split is empty")
        if len(val) == 0:
            raise EmptySplitError("validation split is empty")
        if train.species_count != val.species_count:
            raise ShapeMismatchError(
                f"train has {train.species_count} species, validation has {val.species_count}"
            )

        seed = self.hyperparams.seed
        projector = self.build_projector(train.species_count)
        state = AdamState(learning_rate=self.hyperparams.learning_rate)
        root = SeededRng(seed)
        shuffle_rng = root.spawn(SHUFFLE_STREAM)
        augment_rng = root.spawn(AUGMENT_STREAM)
        batch_size = self.hyperparams.batch_size

        initial_train = evaluate_losses(
            self.encoder, projector, train, self.loss_config, batch_size, self.augmenter
        )
        initial_val = evaluate_losses(
            self.encoder, projector, val, self.loss_config, batch_size, self.augmenter
        )
        report = TrainReport(
            seed=seed,
            hyperparams=self.hyperparams,
            selection_metric=self.selection_metric,
            patience=self.patience,
            initial_train_bce=initial_train["bce"],
            initial_val_loss=self._selection_value(initial_val),
        )

        best_value = np.inf
        best_params = None
        best_state, best_rng_state = state, shuffle_rng.get_state()
        since_best = 0
        for epoch in range(1, self.hyperparams.epochs + 1):
            train_losses = self._train_epoch(projector, state, train, shuffle_rng, augment_rng)
            val_losses = evaluate_losses(
                self.encoder, projector, val, self.loss_config, batch_size, self.augmenter
            )
            report.epochs.append(
                EpochRecord(
                    epoch=epoch,
                    train_loss=train_losses["combined"],
                    train_bce=train_losses["bce"],
                    train_pecl=train_losses["pecl"],
                    val_loss=val_losses["combined"],
                    val_bce=val_losses["bce"],
                    val_pecl=val_losses["pecl"],
                )
            )
            value = self._selection_value(val_losses)
            if value < best_value:
                best_value = value
                best_params = {name: arr.copy() for name, arr in projector.parameters().items()}
                best_state, best_rng_state = state.copy(), shuffle_rng.get_state()
                report.best_epoch = epoch
                since_best = 0
            else:
                since_best += 1

            self._emit_progress(
                f"seed {seed} epoch {epoch}/{self.hyperparams.epochs}: "
                f"train {train_losses['combined']:.6f} val {val_losses['combined']:.6f}"
            )
            if self.patience > 0 and since_best >= self.patience:
                report.stopped_early = True
                self._emit_progress(
                    f"seed {seed}: no validation improvement for {self.patience} epochs, stopping"
                )
                break

        if best_params is not None:
            projector.set_parameters(best_params)

        report.final_metrics = self._final_metrics(projector, train, val)
        return TrainResult(
            projector=projector,
            report=report,
            optimizer=best_state,
            rng_state=best_rng_state,
        )


def fit(
    train: LocationTable,
    val: LocationTable,
    hyperparams: HyperParams,
    encoder: FrozenEncoder,
    model_config: Optional[ModelConfig] = None,
    patience: int = 10,
    selection_metric: str = "combined",
    augmenter=None,
    progress_callback: Optional[Callable[[str], None]] = None,
) -> TrainResult:
    """Functional wrapper around ``Trainer.fit``."""
    trainer = Trainer(
        encoder,
        model_config or ModelConfig(),
        hyperparams,
        patience=patience,
        selection_metric=selection_metric,
        augmenter=augmenter,
        progress_callback=progress_callback,
    )
    return trainer.fit(train, val)
