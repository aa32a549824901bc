"""Tests for on-disk readers and writers."""

import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from pecl_lab.dataset.io import (
    load_location_table,
    read_features,
    read_features_bin,
    read_labels_csv,
    read_locations,
    read_observations,
    read_splits_json,
    write_features_bin,
    write_features_csv,
    write_labels_csv,
    write_locations_csv,
    write_splits_json,
)
from pecl_lab.dataset.spatial import SplitAssignment
from pecl_lab.exceptions import DataError, MalformedInputError


class IoTestCase(unittest.TestCase):
    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def write(self, name, text):
        path = self.temp_dir / name
        path.write_text(text)
        return path


class TestReadObservations(IoTestCase):
    """Test cases for read_observations."""

    def test_valid_rows(self):
        path = self.write(
            "obs.csv",
            "location_id,visit_date,species_id,count\n"
            "L1,2021-05-01,3,2\n"
            "L1,2021-05-02T07:30:00,0,0\n",
        )
        records, errors = read_observations(path)
        self.assertEqual(errors, [])
        self.assertEqual(len(records), 2)
        self.assertEqual(records[0].species_id, 3)
        self.assertEqual(records[1].visit_date.day, 2)

    def test_malformed_rows_report_lines(self):
        path = self.write(
            "obs.csv",
            "location_id,visit_date,species_id,count\n"
            "L1,2021-05-01,3,2\n"
            "L1,not-a-date,0,1\n"
            "L2,2021-05-01,x,1\n",
        )
        with self.assertRaises(MalformedInputError) as ctx:
            read_observations(path)
        self.assertEqual(len(ctx.exception.errors), 2)
        self.assertTrue(ctx.exception.errors[0].startswith("line 3:"))
        self.assertTrue(ctx.exception.errors[1].startswith("line 4:"))

    def test_lenient_skips_bad_rows(self):
        path = self.write(
            "obs.csv",
            "location_id,visit_date,species_id,count\nL1,2021-05-01,3,2\nL1,2021-05-01,3,-4\n",
        )
        records, errors = read_observations(path, lenient=True)
        self.assertEqual(len(records), 1)
        self.assertEqual(len(errors), 1)

    def test_extra_field_row_strict(self):
        """Test a row with too many fields is reported with its line number."""
        path = self.write(
            "obs.csv",
            "location_id,visit_date,species_id,count\n"
            "L1,2020-01-01,0,1\n"
            "L1,2020-01-02,0,1,extra\n"
            "L1,2020-01-03,1,1\n",
        )
        with self.assertRaises(MalformedInputError) as ctx:
            read_observations(path)
        self.assertEqual(len(ctx.exception.errors), 1)
        self.assertTrue(ctx.exception.errors[0].startswith("line 3:"))

    def test_extra_field_row_lenient(self):
        """Test lenient mode skips a row with too many fields and keeps later line numbers."""
        path = self.write(
            "obs.csv",
            "location_id,visit_date,species_id,count\n"
            "L1,2020-01-01,0,1\n"
            "L1,2020-01-02,0,1,extra\n"
            "L1,2020-01-03,1,1\n"
            "L1,bad-date,1,1\n",
        )
        records, errors = read_observations(path, lenient=True)
        self.assertEqual([r.visit_date.day for r in records], [1, 3])
        self.assertEqual(len(errors), 2)
        self.assertTrue(errors[0].startswith("line 3:"))
        self.assertTrue(errors[1].startswith("line 5:"))

    def test_empty_file(self):
        with self.assertRaises(DataError):
            read_observations(self.write("obs.csv", ""))
        with self.assertRaises(DataError):
            read_observations(self.write("header.csv", "location_id,visit_date,species_id,count\n"))

    def test_missing_column(self):
        with self.assertRaises(MalformedInputError):
            read_observations(self.write("obs.csv", "location_id,visit_date\nL1,2021-05-01\n"))

    def test_missing_file(self):
        with self.assertRaises(DataError):
            read_observations(self.temp_dir / "nope.csv")


class TestTables(IoTestCase):
    """Test cases for locations, labels, features and splits files."""

    def test_planar_locations(self):
        path = write_locations_csv(self.temp_dir / "loc.csv", ["a", "b"], [[0.0, 1.5], [100.0, -2.0]])
        self.assertEqual(read_locations(path), {"a": (0.0, 1.5), "b": (100.0, -2.0)})

    def test_lon_lat_projected(self):
        path = self.write("loc.csv", "location_id,lon,lat\na,10.0,50.0\nb,10.0,50.0\n")
        coords = read_locations(path)
        self.assertAlmostEqual(coords["a"][0], 0.0)
        self.assertAlmostEqual(coords["b"][1], 0.0)

    def test_planar_requires_metre_columns(self):
        path = self.write("loc.csv", "location_id,lon,lat\na,10.0,50.0\n")
        with self.assertRaises(MalformedInputError):
            read_locations(path, planar=True)

    def test_labels_reject_out_of_range(self):
        path = self.write("labels.csv", "location_id,s0,s1\na,0.5,1.2\n")
        with self.assertRaises(MalformedInputError):
            read_labels_csv(path)

    def test_labels_reject_non_finite(self):
        path = self.write("labels.csv", "location_id,s0,s1\na,0.5,0.2\nb,nan,0.1\n")
        with self.assertRaises(MalformedInputError) as ctx:
            read_labels_csv(path)
        self.assertEqual(len(ctx.exception.errors), 1)
        self.assertTrue(ctx.exception.errors[0].startswith("line 3:"))

    def test_features_reject_non_finite(self):
        path = self.write("features.csv", "location_id,f0,f1\na,inf,1.0\nb,0.0,1.0\n")
        with self.assertRaises(MalformedInputError) as ctx:
            read_features(path)
        self.assertTrue(ctx.exception.errors[0].startswith("line 2:"))
        bin_path = write_features_bin(self.temp_dir / "f.bin", ["a"], np.array([[np.nan, 1.0]]))
        with self.assertRaises(MalformedInputError):
            read_features(bin_path)

    def test_labels_reject_extra_field_row(self):
        path = self.write("labels.csv", "location_id,s0\na,0.5\nb,0.1,0.2\n")
        with self.assertRaises(MalformedInputError) as ctx:
            read_labels_csv(path)
        self.assertTrue(ctx.exception.errors[0].startswith("line 3:"))

    def test_labels_written_and_read(self):
        labels = np.array([[0.1, 0.2], [1.0 / 3.0, 0.0]])
        path = write_labels_csv(self.temp_dir / "labels.csv", ["a", "b"], labels, ["robin", "wren"])
        ids, values, names = read_labels_csv(path)
        self.assertEqual((ids, names), (["a", "b"], ["robin", "wren"]))
        np.testing.assert_array_equal(values, labels)

    def test_features_bin(self):
        features = np.random.default_rng(0).normal(size=(3, 4))
        path = write_features_bin(self.temp_dir / "f.bin", ["a", "bé", "c"], features)
        ids, values = read_features(path)
        self.assertEqual(ids, ["a", "bé", "c"])
        np.testing.assert_array_equal(values, features)

    def test_features_bin_truncated(self):
        path = write_features_bin(self.temp_dir / "f.bin", ["a", "b"], np.ones((2, 4)))
        path.write_bytes(path.read_bytes()[:-5])
        with self.assertRaises(MalformedInputError):
            read_features_bin(path)

    def test_features_bin_bad_magic(self):
        path = self.temp_dir / "f.bin"
        path.write_bytes(b"NOTAFEAT" + bytes(20))
        with self.assertRaises(MalformedInputError):
            read_features_bin(path)

    def test_splits_json(self):
        assignment = SplitAssignment(splits={"a": "train", "b": "test"}, clusters={"a": 0, "b": -1})
        path = write_splits_json(self.temp_dir / "splits.json", assignment)
        self.assertEqual(read_splits_json(path), assignment)
        with self.assertRaises(MalformedInputError):
            read_splits_json(self.write("bad.json", "[1, 2"))


class TestLoadLocationTable(IoTestCase):
    """Test cases for load_location_table."""

    def setUp(self):
        super().setUp()
        self.labels = write_labels_csv(
            self.temp_dir / "labels.csv", ["b", "a", "c"], np.array([[0.1], [0.2], [0.3]]), ["s0"]
        )
        self.features = write_features_csv(
            self.temp_dir / "features.csv", ["a", "b"], np.array([[1.0, 2.0], [3.0, 4.0]])
        )

    def test_joins_in_label_order(self):
        with self.assertLogs("pecl_lab.dataset.io", level="WARNING"):
            table = load_location_table(self.features, self.labels)
        self.assertEqual(table.location_ids, ["b", "a"])
        np.testing.assert_array_equal(table.features, [[3.0, 4.0], [1.0, 2.0]])
        np.testing.assert_array_equal(table.labels, [[0.1], [0.2]])
        self.assertIsNone(table.coordinates)

    def test_missing_coordinates(self):
        locations = write_locations_csv(self.temp_dir / "loc.csv", ["a"], [[0.0, 0.0]])
        with self.assertRaises(DataError):
            load_location_table(self.features, self.labels, locations)


if __name__ == "__main__":
    unittest.main()
