"""Tests for spatial clustering and splits."""

import unittest

import numpy as np

from pecl_lab.dataset.spatial import (
    SplitAssignment,
    check_split_safety,
    dbscan_clusters,
    project_equirectangular,
    split,
)
from pecl_lab.exceptions import InsufficientLocationsError, ShapeMismatchError, SplitSafetyError


class TestDbscanClusters(unittest.TestCase):
    """Test cases for dbscan_clusters."""

    def test_chain_joins_into_one_cluster(self):
        coords = [[0.0, 0.0], [3000.0, 0.0], [6000.0, 0.0], [50000.0, 0.0]]
        np.testing.assert_array_equal(dbscan_clusters(coords, eps_metres=4000.0), [0, 0, 0, -1])

    def test_far_apart_points_are_singletons(self):
        coords = [[5000.0 * i, 0.0] for i in range(6)]
        np.testing.assert_array_equal(dbscan_clusters(coords, eps_metres=4000.0), [-1] * 6)

    def test_exactly_eps_does_not_join(self):
        np.testing.assert_array_equal(dbscan_clusters([[0.0, 0.0], [4000.0, 0.0]], 4000.0), [-1, -1])

    def test_ids_follow_first_appearance(self):
        coords = [[90000.0, 0.0], [0.0, 0.0], [100.0, 0.0], [90100.0, 0.0]]
        np.testing.assert_array_equal(dbscan_clusters(coords, 4000.0), [0, 1, 1, 0])

    def test_partition_ignores_input_order(self):
        rng = np.random.default_rng(11)
        coords = rng.uniform(0.0, 60000.0, (150, 2))
        perm = rng.permutation(150)

        def partition(labels, index):
            groups = {}
            for i, label in zip(index, labels):
                key = ("noise", int(i)) if label == -1 else ("cluster", int(label))
                groups.setdefault(key, set()).add(int(i))
            return sorted(sorted(group) for group in groups.values())

        original = partition(dbscan_clusters(coords, 4000.0), range(150))
        permuted = partition(dbscan_clusters(coords[perm], 4000.0), perm)
        self.assertEqual(original, permuted)
        self.assertGreater(len(original), 1)
        self.assertLess(len(original), 150)

    def test_empty_input(self):
        self.assertEqual(dbscan_clusters(np.zeros((0, 2))).shape, (0,))

    def test_rejects_nan(self):
        with self.assertRaises(ShapeMismatchError):
            dbscan_clusters([[0.0, np.nan]])


class TestSplit(unittest.TestCase):
    """Test cases for split and check_split_safety."""

    def test_singletons_split_near_targets(self):
        ids = [f"l{i}" for i in range(100)]
        assignment = split(ids, [-1] * 100, seed=4)
        counts = assignment.counts()
        self.assertLessEqual(abs(counts["train"] - 70), 1)
        self.assertLessEqual(abs(counts["val"] - 15), 1)
        self.assertLessEqual(abs(counts["test"] - 15), 1)
        self.assertEqual(sum(counts.values()), 100)

    def test_single_giant_cluster_warns(self):
        ids = [f"l{i}" for i in range(10)]
        with self.assertLogs("pecl_lab.dataset.spatial", level="WARNING"):
            assignment = split(ids, [0] * 10)
        self.assertEqual(assignment.counts(), {"train": 10, "val": 0, "test": 0})

    def test_clusters_stay_together(self):
        clusters = [0, 0, 0, 1, 1, -1, -1, 2, 2, 2, -1, -1]
        ids = [f"l{i}" for i in range(len(clusters))]
        assignment = split(ids, clusters, seed=1)
        for cluster in (0, 1, 2):
            names = {assignment.splits[ids[i]] for i, c in enumerate(clusters) if c == cluster}
            self.assertEqual(len(names), 1)

    def test_same_seed_same_assignment(self):
        ids = [f"l{i}" for i in range(30)]
        self.assertEqual(split(ids, [-1] * 30, seed=9).splits, split(ids, [-1] * 30, seed=9).splits)

    def test_too_few_locations(self):
        with self.assertRaises(InsufficientLocationsError):
            split(["a", "b"], [-1, -1])

    def test_zero_fraction_allows_fewer_locations(self):
        assignment = split(["a", "b"], [-1, -1], fractions=(0.5, 0.5, 0.0))
        self.assertEqual(assignment.counts()["test"], 0)

    def test_random_layouts_are_safe(self):
        rng = np.random.default_rng(123)
        for trial in range(50):
            n = int(rng.integers(200, 2001))
            coords = rng.uniform(0.0, 400000.0, (n, 2))
            ids = [f"l{i}" for i in range(n)]
            clusters = dbscan_clusters(coords, 4000.0)
            assignment = split(ids, clusters, seed=trial)
            self.assertGreaterEqual(check_split_safety(ids, coords, assignment, 4000.0), 4000.0)

    def test_safety_check_catches_leak(self):
        assignment = SplitAssignment(splits={"a": "train", "b": "test"}, clusters={"a": -1, "b": -1})
        with self.assertRaises(SplitSafetyError):
            check_split_safety(["a", "b"], [[0.0, 0.0], [100.0, 0.0]], assignment, 4000.0)

    def test_assignment_dict_form(self):
        assignment = SplitAssignment(splits={"b": "val", "a": "train"}, clusters={"a": 3, "b": -1})
        self.assertEqual(list(assignment.to_dict()), ["a", "b"])
        self.assertEqual(SplitAssignment.from_dict(assignment.to_dict()), assignment)


class TestProjection(unittest.TestCase):
    """Test cases for project_equirectangular."""

    def test_one_degree_of_latitude(self):
        x, y = project_equirectangular([0.0, 0.0], [0.0, 1.0], lon0=0.0, lat0=0.0)
        self.assertAlmostEqual(y[1] - y[0], 111195.08, places=1)
        self.assertEqual(x[1], 0.0)


if __name__ == "__main__":
    unittest.main()
