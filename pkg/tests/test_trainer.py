"""Tests for the training loop and checkpoints."""

import shutil
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock

import numpy as np

from pecl_lab.config.config import HyperParams, ModelConfig
from pecl_lab.core.numeric import SeededRng
from pecl_lab.dataset.tables import LocationTable
from pecl_lab.exceptions import DataError, EmptySplitError, ShapeMismatchError
from pecl_lab.model.checkpoint import load_checkpoint, save_checkpoint
from pecl_lab.model.encoder import EncoderKind, FrozenEncoder
from pecl_lab.model.projector import predict
from pecl_lab.model.trainer import SHUFFLE_STREAM, Trainer, evaluate_losses, fit


def _learnable_tables(n_train=48, n_val=16, d=6, s=5, seed=0):
    """Labels are a fixed smooth function of the features."""
    rng = SeededRng(seed)
    mixing = rng.normal(0.0, 1.0, (d, s))

    def make(n, prefix):
        x = rng.normal(0.0, 1.0, (n, d))
        y = 1.0 / (1.0 + np.exp(-(x @ mixing)))
        return LocationTable([f"{prefix}{i}" for i in range(n)], x, y)

    return make(n_train, "t"), make(n_val, "v")


class TestTrainer(unittest.TestCase):
    """Test cases for Trainer.fit."""

    def setUp(self):
        self.train, self.val = _learnable_tables()
        self.encoder = FrozenEncoder(EncoderKind.IDENTITY, 6)
        self.model_config = ModelConfig(n_layers=2, hidden_width=16)
        self.params = HyperParams(learning_rate=1e-2, batch_size=8, k=2, alpha=0.1, tau=0.5, epochs=30, seed=3)

    def test_training_reduces_bce(self):
        result = fit(self.train, self.val, self.params, self.encoder, self.model_config, patience=0)
        self.assertLess(result.report.final_metrics["train_bce"], result.report.initial_train_bce)
        self.assertEqual(len(result.report.epochs), 30)

    def test_zero_epochs_returns_initial_parameters(self):
        params = self.params.model_copy(update={"epochs": 0})
        trainer = Trainer(self.encoder, self.model_config, params)
        initial = trainer.build_projector(self.train.species_count)
        result = trainer.fit(self.train, self.val)
        for name, value in initial.parameters().items():
            np.testing.assert_array_equal(result.projector.parameters()[name], value)
        self.assertIsNone(result.report.best_epoch)

    def test_same_seed_identical_report(self):
        a = fit(self.train, self.val, self.params.model_copy(update={"epochs": 5}), self.encoder, self.model_config)
        b = fit(self.train, self.val, self.params.model_copy(update={"epochs": 5}), self.encoder, self.model_config)
        self.assertEqual(a.report.model_dump(), b.report.model_dump())

    def test_best_epoch_parameters_restored(self):
        """Test the returned model reproduces the selected epoch's validation loss."""
        result = fit(self.train, self.val, self.params.model_copy(update={"epochs": 12}), self.encoder, self.model_config)
        losses = evaluate_losses(
            self.encoder, result.projector, self.val, self.params.loss_config(), self.params.batch_size
        )
        self.assertAlmostEqual(losses["combined"], result.report.selected_val_loss(), places=12)
        self.assertEqual(result.report.selected_val_loss(), min(result.report.val_losses))

    def test_selected_epoch_has_lowest_validation_loss(self):
        params = self.params.model_copy(update={"learning_rate": 0.05, "epochs": 12})
        for metric, field in (("combined", "val_loss"), ("bce", "val_bce")):
            result = fit(
                self.train, self.val, params, self.encoder, self.model_config, patience=0, selection_metric=metric
            )
            selected = result.report.selected_val_loss()
            self.assertEqual(getattr(result.report.epochs[result.report.best_epoch - 1], field), selected)
            for record in result.report.epochs:
                self.assertLessEqual(selected, getattr(record, field))

    def test_pairs_train_like_alpha_zero(self):
        """Test batches of two follow the alpha = 0 trajectory exactly, since PECL vanishes on pairs."""
        base = self.params.model_copy(update={"batch_size": 2, "epochs": 3})
        with_pecl = fit(self.train, self.val, base.model_copy(update={"alpha": 0.5}), self.encoder, self.model_config)
        without = fit(self.train, self.val, base.model_copy(update={"alpha": 0.0}), self.encoder, self.model_config)
        self.assertEqual(
            [r.model_dump() for r in with_pecl.report.epochs], [r.model_dump() for r in without.report.epochs]
        )
        for name, value in without.projector.parameters().items():
            np.testing.assert_array_equal(with_pecl.projector.parameters()[name], value)

    def test_optimizer_and_rng_state_belong_to_selected_epoch(self):
        params = self.params.model_copy(update={"learning_rate": 0.5, "epochs": 15})
        result = fit(self.train, self.val, params, self.encoder, self.model_config, patience=0)
        best = result.report.best_epoch
        batches_per_epoch = -(-len(self.train) // params.batch_size)
        self.assertEqual(result.optimizer.step, best * batches_per_epoch)

        shuffle = SeededRng(params.seed).spawn(SHUFFLE_STREAM)
        for _ in range(best):
            shuffle.permutation(len(self.train))
        self.assertEqual(result.rng_state, shuffle.get_state())

    def test_early_stopping(self):
        params = self.params.model_copy(update={"learning_rate": 0.5, "epochs": 40})
        result = fit(self.train, self.val, params, self.encoder, self.model_config, patience=2)
        if result.report.stopped_early:
            self.assertEqual(len(result.report.epochs), result.report.best_epoch + 2)
        else:
            self.assertEqual(len(result.report.epochs), 40)

    def test_encoder_untouched(self):
        encoder = FrozenEncoder(EncoderKind.RANDOM_PROJECTION, 6, 10, seed=1)
        before = encoder.weight.copy()
        fit(self.train, self.val, self.params.model_copy(update={"epochs": 3}), encoder, self.model_config)
        np.testing.assert_array_equal(encoder.weight, before)

    def test_progress_callback(self):
        callback = MagicMock()
        params = self.params.model_copy(update={"epochs": 2})
        fit(self.train, self.val, params, self.encoder, self.model_config, progress_callback=callback)
        self.assertGreaterEqual(callback.call_count, 2)

    def test_empty_validation(self):
        with self.assertRaises(EmptySplitError):
            fit(self.train, self.val.subset([]), self.params, self.encoder, self.model_config)

    def test_species_mismatch(self):
        val = LocationTable(self.val.location_ids, self.val.features, self.val.labels[:, :3])
        with self.assertRaises(ShapeMismatchError):
            fit(self.train, val, self.params, self.encoder, self.model_config)

    def test_unknown_selection_metric(self):
        with self.assertRaises(ValueError):
            Trainer(self.encoder, self.model_config, self.params, selection_metric="mse")


class TestCheckpoint(unittest.TestCase):
    """Test cases for checkpoint save and load."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.train, self.val = _learnable_tables(seed=1)
        self.encoder = FrozenEncoder(EncoderKind.RANDOM_PROJECTION, 6, 8, seed=2)
        params = HyperParams(learning_rate=1e-2, batch_size=8, k=2, alpha=0.1, tau=0.5, epochs=3)
        self.result = fit(self.train, self.val, params, self.encoder, ModelConfig(n_layers=2, hidden_width=8))

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_loaded_model_predicts_identically(self):
        path = save_checkpoint(
            Path(self.temp_dir) / "ckpt.json",
            self.encoder,
            self.result.projector,
            optimizer=self.result.optimizer,
            rng_state=self.result.rng_state,
            report=self.result.report,
        )
        loaded = load_checkpoint(path)
        np.testing.assert_array_equal(
            predict(loaded.encoder, loaded.projector, self.val.features),
            predict(self.encoder, self.result.projector, self.val.features),
        )
        self.assertEqual(loaded.optimizer.step, self.result.optimizer.step)
        self.assertEqual(loaded.report["seed"], self.result.report.seed)

    def test_saving_twice_is_byte_identical(self):
        a = save_checkpoint(Path(self.temp_dir) / "a.json", self.encoder, self.result.projector)
        b = save_checkpoint(Path(self.temp_dir) / "b.json", self.encoder, self.result.projector)
        self.assertEqual(a.read_bytes(), b.read_bytes())

    def test_wrong_format_rejected(self):
        path = Path(self.temp_dir) / "bad.json"
        path.write_text('{"format": "something-else", "version": 1}')
        with self.assertRaises(DataError):
            load_checkpoint(path)


if __name__ == "__main__":
    unittest.main()
