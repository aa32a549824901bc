"""Tests for the hyperparameter search."""

import json
import shutil
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

from pecl_lab.config.config import (
    ExperimentConfig,
    HyperParams,
    ModelConfig,
    SearchConfig,
    SynthConfig,
    TrainingConfig,
)
from pecl_lab.core.numeric import SeededRng
from pecl_lab.dataset.spatial import SplitAssignment
from pecl_lab.dataset.synthetic import synth_generate
from pecl_lab.exceptions import InvalidConfigError
from pecl_lab.experiments.search import (
    HyperparameterSearch,
    SearchSpace,
    candidate_hash,
    rank_results,
)


def small_problem(n=80):
    table = synth_generate(SynthConfig(n_locations=n, species_count=12, feature_dim=6, n_habitats=3)).table()
    names = ["train"] * (n * 7 // 10) + ["val"] * (n * 15 // 100)
    names += ["test"] * (n - len(names))
    assignment = SplitAssignment(
        splits=dict(zip(table.location_ids, names)),
        clusters={loc: -1 for loc in table.location_ids},
    )
    return table, assignment


class TestSearchSpace(unittest.TestCase):
    """Test cases for SearchSpace."""

    def setUp(self):
        self.base = HyperParams(learning_rate=1e-3, batch_size=32, k=5, alpha=0.1, tau=0.5)

    def test_default_grid_has_six_candidates(self):
        candidates = SearchSpace(self.base, SearchConfig().grid).grid_candidates()
        self.assertEqual(len(candidates), 6)
        self.assertEqual([(c.k, c.alpha) for c in candidates[:2]], [(1, 0.1), (1, 0.3)])

    def test_grid_validates_values(self):
        candidates = SearchSpace(self.base, {"soft_label_source": ["constant_one"]}).grid_candidates()
        self.assertEqual(candidates[0].soft_label_source.value, "constant_one")

    def test_unknown_or_empty_keys(self):
        with self.assertRaises(InvalidConfigError):
            SearchSpace(self.base, {"momentum": [0.9]})
        with self.assertRaises(InvalidConfigError):
            SearchSpace(self.base, {"k": []})

    def test_random_distributions(self):
        draws = SearchSpace(self.base).random_candidates(10_000, seed=0)
        lr = np.log10([d.learning_rate for d in draws])
        alpha = np.log10([d.alpha for d in draws])
        tau = np.array([d.tau for d in draws])
        batch = np.array([d.batch_size for d in draws])

        self.assertTrue(np.all((lr >= -5) & (lr <= -3)))
        self.assertTrue(np.all((alpha >= -1.5) & (alpha <= 0)))
        self.assertTrue(np.all((tau >= 0.1) & (tau <= 1.0)))
        self.assertAlmostEqual(np.mean(lr < -4.0), 0.5, delta=0.02)
        self.assertAlmostEqual(np.mean(alpha < -0.75), 0.5, delta=0.02)
        self.assertAlmostEqual(np.mean(tau < 0.55), 0.5, delta=0.02)
        for size in (8, 16, 32, 64):
            self.assertAlmostEqual(np.mean(batch == size), 0.25, delta=0.02)

        for d in draws:
            self.assertGreaterEqual(d.k, 1)
            self.assertLessEqual(d.k, 7 if d.batch_size == 8 else 10)
        self.assertEqual(max(d.k for d in draws if d.batch_size == 8), 7)
        self.assertEqual(max(d.k for d in draws if d.batch_size != 8), 10)

    def test_random_candidates_reproducible(self):
        space = SearchSpace(self.base)
        self.assertEqual(space.random_candidates(5, seed=3), space.random_candidates(5, seed=3))
        self.assertEqual(space.sample(SeededRng(1)), space.sample(SeededRng(1)))


class TestCandidateHash(unittest.TestCase):
    """Test cases for candidate_hash."""

    def test_stable_and_seed_independent(self):
        a = HyperParams(learning_rate=1e-3, batch_size=32, k=5, alpha=0.1, tau=0.5, seed=0)
        b = a.model_copy(update={"seed": 7})
        self.assertEqual(candidate_hash(a, [0, 1, 2]), candidate_hash(b, [0, 1, 2]))
        self.assertEqual(len(candidate_hash(a, [0])), 16)

    def test_changes_with_settings_and_seeds(self):
        a = HyperParams(learning_rate=1e-3, batch_size=32, k=5, alpha=0.1, tau=0.5)
        self.assertNotEqual(candidate_hash(a, [0]), candidate_hash(a.model_copy(update={"k": 4}), [0]))
        self.assertNotEqual(candidate_hash(a, [0]), candidate_hash(a, [0, 1]))


class TestRankResults(unittest.TestCase):
    """Test cases for rank_results."""

    def test_ordering(self):
        records = [
            {"index": 0, "success": True, "val_mse_mean": 0.03},
            {"index": 1, "success": False, "error": "boom"},
            {"index": 2, "success": True, "val_mse_mean": 0.01},
            {"index": 3, "success": True, "val_mse_mean": 0.01},
        ]
        ranked = rank_results(records)
        self.assertEqual([r["index"] for r in ranked], [2, 3, 0, 1])
        self.assertEqual([r["rank"] for r in ranked], [1, 2, 3, 4])


class TestHyperparameterSearch(unittest.TestCase):
    """Test cases for HyperparameterSearch."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.table, self.assignment = small_problem()
        self.config = ExperimentConfig(
            model=ModelConfig(n_layers=1, hidden_width=8),
            training=TrainingConfig(epochs=1, batch_size=16, seeds=[0]),
            search=SearchConfig(grid={"k": [1, 2]}),
        )

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def make_search(self):
        return HyperparameterSearch(self.config, self.table, self.assignment, self.temp_dir)

    def test_grid_run_writes_results(self):
        ranked = self.make_search().run()
        self.assertEqual(len(ranked), 2)
        self.assertTrue(all(r["success"] for r in ranked))
        self.assertLessEqual(ranked[0]["val_mse_mean"], ranked[1]["val_mse_mean"])
        self.assertIsNotNone(ranked[0]["baseline_test_mse"])
        lines = (Path(self.temp_dir) / "search_results.jsonl").read_text().splitlines()
        self.assertEqual(len(lines), 2)
        self.assertTrue((Path(self.temp_dir) / "search_ranked.csv").exists())

    def test_resume_skips_completed(self):
        first = self.make_search().run()
        search = self.make_search()
        with patch.object(search.runner, "run") as run:
            second = search.run()
        run.assert_not_called()
        self.assertEqual([r["hash"] for r in first], [r["hash"] for r in second])

    def test_failed_candidate_recorded_and_retried(self):
        search = self.make_search()
        with patch.object(search.runner, "run", side_effect=RuntimeError("diverged")):
            ranked = search.run()
        self.assertFalse(any(r["success"] for r in ranked))
        self.assertIn("diverged", ranked[0]["error"])
        self.assertEqual(search.load_completed(), {})

        ranked = self.make_search().run()
        self.assertTrue(all(r["success"] for r in ranked))
        lines = [json.loads(l) for l in (Path(self.temp_dir) / "search_results.jsonl").read_text().splitlines()]
        self.assertEqual(len(lines), 4)

    def test_random_mode(self):
        search = self.make_search()
        self.assertEqual(len(search.candidates("random")), self.config.search.n_samples)
        with self.assertRaises(InvalidConfigError):
            search.candidates("bayesian")


if __name__ == "__main__":
    unittest.main()
