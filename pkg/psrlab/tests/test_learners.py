"""Tests for the learners, their shared tables and run logs."""

import csv
import io
import math
import tempfile
from pathlib import Path
from unittest import TestCase
from unittest.mock import patch

import numpy as np

from psrlab.exceptions import ConfigError, DimensionMismatchError, ModelValidationError
from psrlab.fixtures import fix_id, noisy_class
from psrlab.learners import (
    CSV_COLUMNS,
    ClassTables,
    OptimisticCover,
    RunLog,
    confidence_set,
    default_beta,
    edec_objective,
    edec_saddle,
    epsc_value,
    explorative_e2d,
    log_likelihood,
    mle_hellinger_check,
    mops,
    omle,
    policy_pool,
    replay_run,
    rf_e2d,
    run_learner,
    tempered_update,
    trajectory_log_probability,
)
from psrlab.metrics import psrlab_episodes_total
from psrlab.models import DeterministicTablePolicy, MixturePolicy, uniform_policy

_QUIET = {"run_logging_enabled": False, "log_trajectories": False}
_LINPROG = {"method": "linprog"}


class LikelihoodTest(TestCase):
    """Test cases for likelihoods, confidence sets and tempered updates."""

    def test_default_beta(self):
        self.assertAlmostEqual(default_beta(8, 0.01), 2.0 * math.log(800.0))

    def test_zero_probability_is_floored_and_flagged(self):
        log_prob, flagged = trajectory_log_probability(fix_id(), (0, 0, 1, 0))
        self.assertTrue(flagged)
        self.assertAlmostEqual(log_prob, math.log(1e-300))
        log_prob, flagged = trajectory_log_probability(fix_id(), (0, 1, 1, 0))
        self.assertFalse(flagged)
        self.assertEqual(log_prob, 0.0)

    def test_log_likelihood_includes_policy_factor(self):
        self.assertAlmostEqual(log_likelihood(fix_id(), uniform_policy(2), (0, 1, 1, 0)), math.log(0.25))
        never = DeterministicTablePolicy({(0,): 0}, 2)
        self.assertEqual(log_likelihood(fix_id(), never, (0, 1, 1, 0)), -math.inf)

    def test_confidence_set(self):
        self.assertEqual(confidence_set([-1.0, -2.0, -10.0], 2.0), [0, 1])
        self.assertEqual(confidence_set([-1.0, -2.0, -10.0], 2.0, flagged=[True, False, False]), [1])
        self.assertEqual(confidence_set([-1.0, -2.0, -10.0], math.inf), [0, 1, 2])

    def test_tempered_update(self):
        log_mu = np.log([0.5, 0.5])
        updated = tempered_update(log_mu, np.log([1.0, 0.5]), 1.0)
        np.testing.assert_allclose(np.exp(updated), [2.0 / 3.0, 1.0 / 3.0])

    def test_tempered_update_with_zero_eta_keeps_prior(self):
        updated = tempered_update(np.log([0.2, 0.8]), [-np.inf, 0.0], 0.0)
        np.testing.assert_allclose(np.exp(updated), [0.2, 0.8])

    def test_tempered_update_rejects_impossible_trajectory(self):
        with self.assertRaises(ModelValidationError):
            tempered_update(np.log([0.5, 0.5]), [-np.inf, -np.inf], 0.5)


class ClassTablesTest(TestCase):
    """Test cases for covers, policy pools and precomputed tables."""

    @classmethod
    def setUpClass(cls):
        cls.model_class = noisy_class()
        cls.pool = policy_pool(cls.model_class)
        cls.tables = ClassTables(cls.model_class, cls.pool)

    def test_exact_cover_validates(self):
        cover = OptimisticCover.exact(self.model_class)
        self.assertEqual(len(cover), 8)
        cover.validate(self.model_class)

    def test_partial_cover_rejected(self):
        cover = OptimisticCover((0,), self.tables.do[:1], 0.0)
        with self.assertRaises(ModelValidationError):
            cover.validate(self.model_class)

    def test_pool_layout(self):
        horizon = self.model_class.horizon
        self.assertEqual(len(self.pool) % (horizon + 2), 0)
        for index, (policy, _) in enumerate(self.model_class.optimal):
            self.assertTrue(self.pool.policies[self.pool.optimal_index[index]].same_rule(policy))
            self.assertIsInstance(self.pool.policies[self.pool.mixture_index[index]], MixturePolicy)

    def test_tables_agree_with_planning(self):
        truth = self.model_class.truth_index
        optimal_slot = self.pool.optimal_index[truth]
        self.assertAlmostEqual(self.tables.values[truth, optimal_slot], self.tables.best[truth])
        self.assertAlmostEqual(self.tables.truth_gap[optimal_slot], 0.0)
        self.assertTrue(np.all(self.tables.truth_gap >= -1e-12))
        for policy_index in range(len(self.pool)):
            np.testing.assert_allclose(np.diag(self.tables.hellinger[policy_index]), 0.0)

    def test_edec_objective_shapes(self):
        mu = np.full(8, 1.0 / 8.0)
        objective = edec_objective(self.model_class, mu, 10.0, tables=self.tables)
        self.assertEqual((objective.n_exp, objective.n_out), (len(self.pool), len(self.pool)))
        solution = edec_saddle(self.model_class, mu, 10.0, solver_cfg=_LINPROG, tables=self.tables)
        self.assertLessEqual(solution.lower_bound, solution.value + 1e-9)
        self.assertAlmostEqual(float(objective.values(solution.p_exp, solution.p_out).max()), solution.value)

    def test_edec_objective_checks_mu(self):
        with self.assertRaises(DimensionMismatchError):
            edec_objective(self.model_class, np.ones(3) / 3.0, 10.0, tables=self.tables)

    def test_epsc_at_the_truth_is_zero(self):
        mu = np.zeros(8)
        mu[self.model_class.truth_index] = 1.0
        self.assertAlmostEqual(epsc_value(self.model_class, mu, 10.0, tables=self.tables), 0.0)


@patch("psrlab.run_logging.get_app_settings", return_value=_QUIET)
class OmleTest(TestCase):
    """Test cases for OMLE runs on the eight-model class."""

    def test_run_records_every_iteration(self, _mock_settings):
        model_class = noisy_class()
        before = psrlab_episodes_total.labels(algorithm="omle")._value.get()

        output, log = omle(model_class, 15, rng_seed=1)

        self.assertIsInstance(output, MixturePolicy)
        self.assertEqual(len(log.records), 15)
        self.assertEqual(log.records[0]["set_size"], 8)
        self.assertEqual(log.column("iteration"), list(range(1, 16)))
        self.assertEqual(psrlab_episodes_total.labels(algorithm="omle")._value.get() - before, 15 * model_class.horizon)
        self.assertTrue(log.result["truth_always_in_set"])
        self.assertTrue(all(entry >= -1e-12 for entry in log.column("output_suboptimality")))

    def test_same_seed_same_records(self, _mock_settings):
        model_class = noisy_class()
        _, first = omle(model_class, 10, rng_seed=4)
        _, second = omle(model_class, 10, rng_seed=4)
        self.assertEqual(first.records, second.records)
        matches, _ = replay_run(first, model_class)
        self.assertTrue(matches)

    def test_infinite_beta_keeps_everyone(self, _mock_settings):
        _, log = omle(noisy_class(), 5, beta=math.inf, rng_seed=0)
        self.assertEqual(log.column("set_size"), [8] * 5)

    def test_hellinger_guarantee_slacks(self, _mock_settings):
        model_class = noisy_class()
        beta = default_beta(len(model_class))
        _, log = omle(model_class, 10, beta=beta, rng_seed=2)
        slacks = mle_hellinger_check(log, model_class, beta)
        self.assertEqual(slacks.shape, (10,))
        self.assertAlmostEqual(slacks[0], -2.0 * beta)

    def test_csv_is_byte_identical_across_reruns(self, _mock_settings):
        model_class = noisy_class()
        with tempfile.TemporaryDirectory() as tmp:
            paths = [Path(tmp) / "first.csv", Path(tmp) / "second.csv"]
            for path in paths:
                _, log = omle(model_class, 6, rng_seed=9)
                log.to_csv(path)
            first, second = (path.read_bytes() for path in paths)
        self.assertEqual(first, second)
        rows = list(csv.reader(io.StringIO(first.decode("utf-8"))))
        self.assertEqual(tuple(rows[0]), CSV_COLUMNS)
        self.assertEqual(len(rows), 7)
        self.assertEqual(rows[1][0], "1")


@patch("psrlab.run_logging.get_app_settings", return_value=_QUIET)
class DecisionLearnerTest(TestCase):
    """Test cases for Explorative E2D, MOPS and RF-E2D."""

    def test_explorative_e2d(self, _mock_settings):
        output, log = explorative_e2d(noisy_class(), 3, gamma=10.0, rng_seed=0, solver_cfg=_LINPROG)
        self.assertIsInstance(output, MixturePolicy)
        self.assertEqual(len(log.records), 3)
        for record in log.records:
            self.assertGreaterEqual(record["saddle_gap"], -1e-9)
            self.assertTrue(0.0 <= record["truth_mass"] <= 1.0)
        self.assertEqual(log.config["solver_cfg"], _LINPROG)

    def test_mops_records_posterior_entropy(self, _mock_settings):
        _, log = mops(noisy_class(), 30, gamma=10.0, rng_seed=3)
        self.assertEqual(len(log.records), 30)
        self.assertTrue(all(entry >= 0.0 for entry in log.column("posterior_entropy")))
        self.assertLessEqual(log.records[-1]["posterior_entropy"], math.log(8.0) + 1e-12)

    def test_mops_is_reproducible(self, _mock_settings):
        model_class = noisy_class()
        _, first = mops(model_class, 8, gamma=10.0, rng_seed=5)
        matches, _ = replay_run(first, model_class)
        self.assertTrue(matches)

    def test_rf_e2d(self, _mock_settings):
        model_class = noisy_class()
        estimate, log = rf_e2d(model_class, 2, gamma=10.0, rng_seed=1, solver_cfg={"max_iterations": 100})
        self.assertIn(estimate, range(len(model_class)))
        self.assertEqual(log.result["estimate"], estimate)
        self.assertTrue(all(0.0 <= entry <= 1.0 + 1e-12 for entry in log.column("estimation_error")))

    def test_run_learner_dispatch(self, _mock_settings):
        _, log = run_learner("omle", noisy_class(), 2, iterations=3)
        self.assertEqual(log.algorithm, "omle")
        self.assertEqual(log.seed, 2)
        with self.assertRaises(ConfigError):
            run_learner("ucb", noisy_class(), 0)


class RunLogTest(TestCase):
    """Test cases for RunLog serialization."""

    @patch("psrlab.run_logging.get_app_settings", return_value=_QUIET)
    def test_summary_and_json(self, _mock_settings):
        log = RunLog("mops", 7, {"episodes": 2})
        log.append({"iteration": 1, "truth_mass": 0.4, "output_suboptimality": 0.2})
        log.append({"iteration": 2, "truth_mass": np.float64(0.6), "output_suboptimality": 0.1})
        summary = log.summary()
        self.assertEqual(summary["iterations"], 2)
        self.assertEqual(summary["final_output_suboptimality"], 0.1)
        self.assertIn('"final_truth_mass": 0.6', log.to_json())
        self.assertEqual(log.records[0]["algorithm"], "mops")
