"""Tests for the seeded verification suites."""

import math
from unittest import TestCase
from unittest.mock import patch

from psrlab.exceptions import ConfigError
from psrlab.fixtures import fix_dec2, fix_id
from psrlab.metrics import psrlab_suite_checks_total
from psrlab.representations import BRep
from psrlab.suites import SUITES, SuiteResult, build_brep, random_triple, run_suite


class SuiteResultTest(TestCase):
    """Test cases for SuiteResult bookkeeping."""

    def test_record_and_skip(self):
        result = SuiteResult("unit", tolerance=1e-6, required_rate=0.5)
        passed = psrlab_suite_checks_total.labels(suite="unit", status="pass")._value.get()
        failed = psrlab_suite_checks_total.labels(suite="unit", status="fail")._value.get()

        result.record("tight", -1e-7)
        result.record("broken", -0.5)
        result.skip("rank", "rank deficient")

        self.assertEqual(result.checks, 2)
        self.assertEqual(result.pass_rate, 0.5)
        self.assertTrue(result.passed)
        self.assertEqual(result.worst_slack, -0.5)
        self.assertEqual(result.failures, [{"check": "broken", "slack": -0.5}])
        self.assertEqual(psrlab_suite_checks_total.labels(suite="unit", status="pass")._value.get() - passed, 1)
        self.assertEqual(psrlab_suite_checks_total.labels(suite="unit", status="fail")._value.get() - failed, 1)
        payload = result.to_dict()
        self.assertEqual(payload["skipped"], [{"check": "rank", "reason": "rank deficient"}])

    def test_empty_result(self):
        result = SuiteResult("empty")
        self.assertTrue(result.passed)
        self.assertIsNone(result.to_dict()["worst_slack"])


class BuildBrepTest(TestCase):
    """Test cases for build_brep."""

    def test_constructions(self):
        self.assertIsInstance(build_brep(fix_id(), "revealing", 1), BRep)
        self.assertIsInstance(build_brep(fix_id(), "decodable", 1), BRep)
        self.assertIsInstance(build_brep(fix_id(), "future-suff", 1), BRep)
        self.assertIsInstance(build_brep(fix_dec2(), "regular", 1), BRep)

    def test_unknown_construction(self):
        with self.assertRaises(ConfigError):
            build_brep(fix_id(), "spectral", 1)

    def test_random_triple_is_seeded(self):
        first = random_triple(3)
        second = random_triple(3)
        self.assertEqual(first[2].emissions.tolist(), second[2].emissions.tolist())


@patch("psrlab.run_logging.get_app_settings", return_value={"run_logging_enabled": False})
class SuiteRunTest(TestCase):
    """Test cases for run_suite on small seed sets."""

    def test_brep(self, _mock_settings):
        result = run_suite("brep", [0])
        self.assertTrue(result.passed, result.failures)
        self.assertGreater(len(result.skipped), 0)

    def test_stability(self, _mock_settings):
        result = run_suite("stability", [0, 1])
        self.assertTrue(result.passed, result.failures)

    def test_decomp_and_hellinger(self, _mock_settings):
        self.assertTrue(run_suite("decomp", range(3)).passed)
        self.assertTrue(run_suite("hellinger", range(3)).passed)

    def test_eluder(self, _mock_settings):
        result = run_suite("eluder", range(5))
        self.assertTrue(result.passed, result.failures)
        self.assertEqual(result.checks, 5 * 7)

    def test_mle(self, _mock_settings):
        result = run_suite("mle", [0, 1], iterations=20)
        self.assertTrue(result.passed, result.failures)
        self.assertEqual(result.required_rate, 0.95)

    def test_edec(self, _mock_settings):
        result = run_suite("edec", [0], gammas=(10.0,), random_points=5)
        self.assertEqual(result.checks, 2)
        self.assertTrue(math.isfinite(result.worst_slack))
        self.assertGreater(result.worst_slack, -1e-3)

    def test_outcome_is_logged(self, _mock_settings):
        with self.assertLogs("psrlab.suites", level="INFO") as logs:
            run_suite("decomp", [0])
        self.assertIn("Suite decomp: 1 checks", logs.output[0])

    def test_unknown_suite(self, _mock_settings):
        with self.assertRaises(ConfigError):
            run_suite("speed", [0])
        self.assertEqual(sorted(SUITES), ["brep", "decomp", "edec", "eluder", "hellinger", "mle", "stability"])
