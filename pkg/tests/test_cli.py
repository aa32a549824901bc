"""Tests for the pecl-lab command line."""

import json
import os
import shutil
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from click.testing import CliRunner

from pecl_lab.cli.main import cli, main
from pecl_lab.config.app_dirs import app_dirs


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())
        self.out = self.temp_dir / "out"
        self.env = patch.dict(os.environ, {"PECL_LAB_LOG_DIR": str(self.temp_dir / "logs")})
        self.env.start()
        os.environ.pop("PECL_LAB_SEED", None)
        app_dirs._logs_dir = None
        self.runner = CliRunner()

    def tearDown(self):
        self.env.stop()
        app_dirs._logs_dir = None
        shutil.rmtree(self.temp_dir)

    def invoke(self, *args):
        return self.runner.invoke(cli, ["--out-dir", str(self.out), *map(str, args)])

    def make_dataset(self):
        result = self.invoke("synth", "--seed", 1, "--n-locations", 120, "--species-count", 12)
        self.assertEqual(result.exit_code, 0, result.output)
        result = self.invoke("split", "--labels", self.out / "labels.csv", "--locations", self.out / "locations.csv")
        self.assertEqual(result.exit_code, 0, result.output)


class TestDataCommands(CliTestCase):
    """Test cases for synth, split and prep."""

    def test_synth_writes_files(self):
        """Test synth writes features, labels and locations."""
        result = self.invoke("synth", "--n-locations", 30, "--features-format", "bin")
        self.assertEqual(result.exit_code, 0, result.output)
        for name in ("features.bin", "labels.csv", "locations.csv"):
            self.assertTrue((self.out / name).exists())
        self.assertIn("Wrote 30 locations", result.output)

    def test_synth_is_byte_reproducible(self):
        """Test the same seed writes byte-identical files."""
        first = self.invoke("synth", "--seed", 7, "--n-locations", 25)
        self.assertEqual(first.exit_code, 0, first.output)
        saved = {name: (self.out / name).read_bytes() for name in ("features.csv", "labels.csv", "locations.csv")}
        second = self.invoke("synth", "--seed", 7, "--n-locations", 25)
        self.assertEqual(second.exit_code, 0, second.output)
        for name, content in saved.items():
            self.assertEqual((self.out / name).read_bytes(), content, name)

    def test_split_writes_assignment(self):
        """Test split assigns every location and reports the closest pair."""
        self.make_dataset()
        data = json.loads((self.out / "splits.json").read_text())
        self.assertEqual(len(data), 120)
        self.assertTrue({entry["split"] for entry in data.values()} <= {"train", "val", "test"})

    def test_prep(self):
        """Test prep turns observations into labels and summaries."""
        obs = self.temp_dir / "obs.csv"
        rows = ["location_id,visit_date,species_id,count"]
        for day in range(1, 5):
            rows.append(f"A,2021-03-0{day},0,1")
            rows.append(f"A,2021-03-0{day},1,{day % 2}")
            rows.append(f"B,2021-03-0{day},2,1")
        rows.append("C,2021-03-01,0,1")
        obs.write_text("\n".join(rows) + "\n")
        locations = self.temp_dir / "loc.csv"
        locations.write_text("location_id,x_m,y_m\nA,0,0\nB,9000,0\nC,20000,0\n")

        result = self.invoke("prep", "--observations", obs, "--locations", locations, "--min-obs", 4)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("Kept 2 of 3 locations, 3 species", result.output)
        labels = (self.out / "labels.csv").read_text().splitlines()
        self.assertEqual(labels[0], "location_id,species_0,species_1,species_2")
        self.assertEqual(labels[1], "A,1.0,0.5,0.0")
        for name in ("location_stats.csv", "locations.csv", "visit_distribution.csv", "species_prevalence.csv"):
            self.assertTrue((self.out / name).exists(), name)

    def test_prep_nothing_kept(self):
        """Test prep fails with a data error when the threshold removes everything."""
        obs = self.temp_dir / "obs.csv"
        obs.write_text("location_id,visit_date,species_id,count\nA,2021-03-01,0,1\n")
        result = self.invoke("prep", "--observations", obs)
        self.assertEqual(result.exit_code, 2)


class TestModelCommands(CliTestCase):
    """Test cases for train, eval and gradcheck."""

    def test_baseline_only(self):
        """Test the baseline-only run writes reports without checkpoints."""
        self.make_dataset()
        result = self.invoke(
            "train", "--features", self.out / "features.csv", "--labels", self.out / "labels.csv",
            "--splits", self.out / "splits.json", "--baseline-only",
        )
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("mean_rate", result.output)
        self.assertTrue((self.out / "results.json").exists())
        self.assertFalse((self.out / "checkpoints").exists())

    def test_train_then_eval(self):
        """Test a one-epoch run saves a checkpoint that eval can score."""
        self.make_dataset()
        data = ["--features", self.out / "features.csv", "--labels", self.out / "labels.csv",
                "--splits", self.out / "splits.json"]
        result = self.invoke("train", *data, "--seed", 0, "--epochs", 1)
        self.assertEqual(result.exit_code, 0, result.output)
        checkpoint = self.out / "checkpoints" / "seed_0.json"
        self.assertTrue(checkpoint.exists())

        result = self.invoke("eval", *data, "--checkpoint", checkpoint, "--split", "val")
        self.assertEqual(result.exit_code, 0, result.output)
        report = json.loads((self.out / "eval_val.json").read_text())
        self.assertGreaterEqual(report["mse"], 0.0)

    def test_gradcheck(self):
        """Test gradcheck passes and writes its report."""
        result = self.invoke("gradcheck", "--trials", 2, "--suite", "bce", "--suite", "pecl")
        self.assertEqual(result.exit_code, 0, result.output)
        report = json.loads((self.out / "gradcheck.json").read_text())
        self.assertEqual(len(report["results"]), 4)

    def test_gradcheck_unknown_suite(self):
        """Test an unknown suite is a configuration error."""
        result = self.invoke("gradcheck", "--trials", 1, "--suite", "hessian")
        self.assertEqual(result.exit_code, 1)

    def test_train_without_inputs(self):
        """Test train without features is a configuration error."""
        result = self.invoke("train")
        self.assertEqual(result.exit_code, 1)
        self.assertIn("--features", result.output)


class TestExitCodes(CliTestCase):
    """Test cases for the exit codes returned by main."""

    def test_success(self):
        self.assertEqual(main(["--out-dir", str(self.out), "synth", "--n-locations", "10"]), 0)

    def test_usage_error(self):
        self.assertEqual(main(["no-such-command"]), 1)
        self.assertEqual(main(["synth", "--n-locations", "many"]), 1)

    def test_data_error(self):
        missing = str(self.temp_dir / "missing.csv")
        self.assertEqual(main(["--out-dir", str(self.out), "prep", "--observations", missing]), 2)

    def test_malformed_row_is_a_data_error(self):
        obs = self.temp_dir / "obs.csv"
        obs.write_text("location_id,visit_date,species_id,count\nA,2021-03-01,0,1\nA,2021-03-02,0,1,extra\n")
        self.assertEqual(main(["--out-dir", str(self.out), "prep", "--observations", str(obs)]), 2)

    def test_verification_error(self):
        with patch("pecl_lab.verification.gradcheck.gradients_close", return_value=False):
            code = main(["--out-dir", str(self.out), "gradcheck", "--trials", "1", "--suite", "bce"])
        self.assertEqual(code, 3)


if __name__ == "__main__":
    unittest.main()
