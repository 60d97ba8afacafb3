"""Tests for the psrlab command line and experiment runner."""

import io
import json
import math
import os
import tempfile
from contextlib import redirect_stdout
from pathlib import Path
from unittest import TestCase
from unittest.mock import patch

import numpy as np

from psrlab.cli import (
    ExperimentConfig,
    aggregate_logs,
    error_payload,
    learner_params,
    main,
    mean_stderr,
    parse_seeds,
    resolve_model,
    resolve_model_class,
)
from psrlab.exceptions import CapacityError, ConfigError
from psrlab.learners import RunLog

_QUIET = {"run_logging_enabled": False}


def _run(argv):
    """Run ``main`` and return its exit status with the parsed JSON it printed."""
    buffer = io.StringIO()
    with redirect_stdout(buffer):
        status = main(argv)
    return status, json.loads(buffer.getvalue())


class SeedParsingTest(TestCase):
    """Test cases for parse_seeds."""

    def test_lists_and_ranges(self):
        self.assertEqual(parse_seeds("0,3,5"), [0, 3, 5])
        self.assertEqual(parse_seeds("0-3"), [0, 1, 2, 3])
        self.assertEqual(parse_seeds("7, 1-2"), [7, 1, 2])

    def test_rejects_bad_lists(self):
        for text in ("", "a", "1,1", "0-2,2", "-1"):
            with self.assertRaises(ConfigError, msg=text):
                parse_seeds(text)


class ExperimentConfigTest(TestCase):
    """Test cases for ExperimentConfig."""

    def test_from_dict_maps_class(self):
        config = ExperimentConfig.from_dict({"command": "learn", "class": "FIX-NOISY-CLASS", "algorithm": "omle"})
        self.assertEqual(config.model_class, "FIX-NOISY-CLASS")
        self.assertEqual(config.to_dict()["class"], "FIX-NOISY-CLASS")

    def test_schema_errors(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict({"command": "learn", "speed": 3})
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict({"command": "verify", "suite": "brep", "seeds": [1, 1]})
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict({"command": "certify"})

    def test_hash_ignores_output_and_workers(self):
        base = {"command": "learn", "class": "FIX-NOISY-CLASS", "algorithm": "omle", "params": {"iterations": 5}}
        first = ExperimentConfig.from_dict(base)
        second = ExperimentConfig.from_dict({**base, "output": "elsewhere", "workers": 4})
        third = ExperimentConfig.from_dict({**base, "seeds": [0, 1]})
        self.assertEqual(first.config_hash, second.config_hash)
        self.assertNotEqual(first.config_hash, third.config_hash)
        self.assertEqual(len(first.config_hash), 64)


class LearnerParamsTest(TestCase):
    """Test cases for learner_params."""

    def test_run_length_alias(self):
        self.assertEqual(learner_params("omle", {"episodes": 4}), {"iterations": 4})
        self.assertEqual(learner_params("mops", {"iterations": 4, "gamma": 2.0}), {"episodes": 4, "gamma": 2.0})

    def test_rejections(self):
        with self.assertRaises(ConfigError):
            learner_params("omle", {})
        with self.assertRaises(ConfigError):
            learner_params("omle", {"iterations": 3, "gamma": 1.0})
        with self.assertRaises(ConfigError):
            learner_params("e2d", {"episodes": 3})
        with self.assertRaises(ConfigError):
            learner_params("ucb", {"episodes": 3})


class ResolveTest(TestCase):
    """Test cases for resolving models and classes."""

    def test_fixture_names(self):
        self.assertEqual(resolve_model("FIX-NOISY-CLASS").num_states, 2)
        model_class = resolve_model_class("FIX-ID")
        self.assertEqual(len(model_class), 1)
        self.assertEqual(model_class.truth_index, 0)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            resolve_model_class("/nonexistent/class.json")


class AggregationTest(TestCase):
    """Test cases for seed aggregation."""

    def test_mean_stderr(self):
        mean, stderr = mean_stderr([1.0, 3.0])
        self.assertEqual(mean, 2.0)
        self.assertAlmostEqual(stderr, 1.0)
        mean, stderr = mean_stderr([5.0])
        self.assertEqual((float(mean), float(stderr)), (5.0, 0.0))
        self.assertTrue(all(math.isnan(entry) for entry in mean_stderr([])))

    def test_aggregate_logs(self):
        logs = []
        for seed, scale in ((0, 1.0), (1, 3.0)):
            records = [{"iteration": k, "output_suboptimality": scale / k} for k in range(1, 5)]
            logs.append(RunLog("omle", seed, {}, records=records))

        summary = aggregate_logs("omle", logs)

        self.assertEqual(summary["seeds"], [0, 1])
        np.testing.assert_allclose(summary["curve"]["mean"], [2.0, 1.0, 2.0 / 3.0, 0.5])
        self.assertTrue(summary["curve"]["halved_by_end"])
        self.assertEqual(summary["final"]["final_output_suboptimality"]["mean"], 0.5)
        self.assertEqual(summary["final"]["iterations"], {"mean": 4.0, "stderr": 0.0})

    def test_rfe2d_counts_accurate_seeds(self):
        logs = [
            RunLog("rfe2d", seed, {}, records=[{"iteration": 1, "estimation_error": error}])
            for seed, error in ((0, 0.05), (1, 0.4))
        ]
        summary = aggregate_logs("rfe2d", logs)
        self.assertEqual(summary["curve"]["metric"], "estimation_error")
        self.assertEqual(summary["seeds_within_0.1"], 1)


class ErrorPayloadTest(TestCase):
    """Test cases for error_payload."""

    def test_capacity_fields(self):
        payload = error_payload(CapacityError("trajectory_distribution", 4096, 100))
        self.assertEqual(payload["error"], "CapacityError")
        observed = (payload["operation"], payload["required"], payload["cap"])
        self.assertEqual(observed, ("trajectory_distribution", 4096, 100))

    def test_missing_file_path(self):
        payload = error_payload(FileNotFoundError(2, "No such file", "/tmp/missing.json"))
        self.assertEqual(payload["path"], "/tmp/missing.json")


@patch.dict(os.environ, {}, clear=False)
@patch("psrlab.run_logging.get_app_settings", return_value=_QUIET)
class MainTest(TestCase):
    """Test cases for the psrlab entry point."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()  # pylint: disable=consider-using-with
        self.addCleanup(self.tmp.cleanup)
        self.output = Path(self.tmp.name) / "results"

    def test_certify_decodable_fix_id(self, _mock_settings):
        argv = ["certify", "--model", "FIX-ID", "--construct", "decodable", "--output", str(self.output)]
        status, summary = _run(argv)

        self.assertEqual(status, 0)
        self.assertAlmostEqual(summary["lambda_hi"], 1.0)
        self.assertTrue(summary["exact"])
        self.assertLessEqual(summary["residual"], 1e-9)
        run_dir = Path(summary["run_dir"])
        for name in ("brep.json", "certificate-0.json", "summary.json", "metrics.prom", "manifest.json"):
            self.assertTrue((run_dir / name).is_file(), name)
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        self.assertEqual(manifest["config_hash"], summary["config_hash"])
        self.assertIn("brep.json", manifest["files"])
        self.assertEqual(list(self.output.iterdir()), [run_dir])

    def test_learn_writes_reproducible_logs(self, _mock_settings):
        argv = ["learn", "--class", "FIX-NOISY-CLASS", "--alg", "omle", "--T", "5", "--seeds", "0,1"]
        argv += ["--output", str(self.output)]

        status, summary = _run(argv)

        self.assertEqual(status, 0)
        run_dir = Path(summary["run_dir"])
        self.assertEqual(summary["seeds"], [0, 1])
        self.assertEqual(len(summary["curve"]["mean"]), 5)
        first = (run_dir / "seed-1.csv").read_bytes()
        self.assertEqual(json.loads((run_dir / "seed-1.json").read_text(encoding="utf-8"))["seed"], 1)

        _, rerun = _run(argv)

        self.assertEqual(rerun["run_dir"], summary["run_dir"])
        self.assertEqual((run_dir / "seed-1.csv").read_bytes(), first)

    def test_learn_without_gamma(self, _mock_settings):
        argv = ["learn", "--class", "FIX-NOISY-CLASS", "--alg", "mops", "--T", "3", "--output", str(self.output)]
        status, payload = _run(argv)
        self.assertEqual(status, 2)
        self.assertEqual(payload["error"], "ConfigError")

    def test_missing_config_file(self, _mock_settings):
        missing = str(Path(self.tmp.name) / "absent.json")
        status, payload = _run(["run", "--config", missing])
        self.assertEqual(status, 2)
        self.assertEqual(payload["path"], missing)

    def test_run_config_file(self, _mock_settings):
        config_path = Path(self.tmp.name) / "experiment.json"
        config_path.write_text(json.dumps({"command": "verify", "suite": "decomp", "seeds": [0, 1]}), encoding="utf-8")

        status, summary = _run(["run", "--config", str(config_path), "--output", str(self.output)])

        self.assertEqual(status, 0)
        self.assertEqual(summary["suite"], "decomp")
        self.assertEqual(summary["checks"], 2)
        self.assertTrue((Path(summary["run_dir"]) / "suite.json").is_file())

    def test_bad_suite_params(self, _mock_settings):
        config_path = Path(self.tmp.name) / "experiment.json"
        config = {"command": "verify", "suite": "decomp", "params": {"iterations": 3}}
        config_path.write_text(json.dumps(config), encoding="utf-8")
        status, payload = _run(["run", "--config", str(config_path), "--output", str(self.output)])
        self.assertEqual(status, 2)
        self.assertIn("decomp", payload["message"])
        self.assertEqual(list(self.output.iterdir()), [])

    def test_capacity_error_exits_one(self, _mock_settings):
        status, payload = _run(["certify", "--model", "FIX-NOISY", "--cap", "1", "--output", str(self.output)])
        self.assertEqual(status, 1)
        self.assertEqual(payload["error"], "CapacityError")
        self.assertEqual(payload["cap"], 1)

    def test_cap_only_applies_to_its_own_run(self, _mock_settings):
        os.environ.pop("PSRLAB_CAP", None)
        status, _ = _run(["certify", "--model", "FIX-NOISY", "--cap", "1", "--output", str(self.output)])
        self.assertEqual(status, 1)
        self.assertNotIn("PSRLAB_CAP", os.environ)

        status, _ = _run(["certify", "--model", "FIX-NOISY", "--output", str(self.output)])
        self.assertEqual(status, 0)

        os.environ["PSRLAB_CAP"] = "5000"
        _run(["certify", "--model", "FIX-ID", "--construct", "decodable", "--cap", "100", "--output", str(self.output)])
        self.assertEqual(os.environ["PSRLAB_CAP"], "5000")

    def test_generate_then_learn_from_file(self, _mock_settings):
        out = Path(self.tmp.name) / "zoo" / "noisy.json"
        status, summary = _run(["generate", "--fixture", "FIX-NOISY-CLASS", "--out", str(out)])
        self.assertEqual(status, 0)
        self.assertEqual(len(summary["sha256"]), 64)

        model_class = resolve_model_class(str(out))

        self.assertEqual(len(model_class), 8)
        self.assertEqual(model_class.truth_index, 0)
