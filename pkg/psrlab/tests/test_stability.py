"""Tests for Π-norms, fused norms and stability certificates."""

import json
from unittest import TestCase

import numpy as np
from prometheus_client import REGISTRY

from psrlab.exceptions import DimensionMismatchError
from psrlab.fixtures import fix_dec2, fix_id, fix_noisy, random_revealing
from psrlab.models import random_policy, uniform_policy
from psrlab.oracles import deterministic_future_weights
from psrlab.representations import BRep, brep_decodable, brep_revealing, default_core_tests, infer_decoder
from psrlab.stability import (
    b_errors,
    certify_stability,
    check_weak_stability,
    decomposition_check,
    fused_norm,
    general_pi_norm,
    hellinger_domination_check,
    pi_norm,
    pi_norm_argmax,
    sup_tv_distance,
    weak_stability_pairs,
    well_conditioned_check,
)


def _certificate_count(provenance):
    return REGISTRY.get_sample_value("psrlab_certification_duration_seconds_count", {"provenance": provenance}) or 0.0


class PiNormTest(TestCase):
    """Test cases for the Π-norm dynamic program."""

    def test_one_step(self):
        self.assertEqual(pi_norm([1.0, -3.0, 2.0, 0.5], 2, 2), 5.0)

    def test_argmax_policy(self):
        np.testing.assert_array_equal(pi_norm_argmax([1.0, -3.0, 2.0, 0.5], 2, 2), [0.0, 1.0, 1.0, 0.0])

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(0)
        for length in (1, 2):
            weights = deterministic_future_weights(2, 2, length)
            for _ in range(20):
                vector = rng.normal(size=4**length)
                exhaustive = float((weights @ np.abs(vector)).max())
                self.assertAlmostEqual(pi_norm(vector, 2, 2), exhaustive, places=12)

    def test_argmax_attains_the_norm(self):
        vector = np.random.default_rng(3).normal(size=16)
        weights = pi_norm_argmax(vector, 2, 2)
        self.assertAlmostEqual(float(weights @ np.abs(vector)), pi_norm(vector, 2, 2), places=12)

    def test_columns_evaluated_independently(self):
        matrix = np.array([[1.0, 0.0], [2.0, 1.0], [0.0, 1.0], [1.0, 1.0]])
        np.testing.assert_allclose(pi_norm(matrix, 2, 2), [3.0, 2.0])

    def test_absolute_homogeneity(self):
        rng = np.random.default_rng(11)
        for length in (1, 2, 3):
            for _ in range(10):
                vector, scale = rng.normal(size=4**length), float(rng.normal() * 5.0)
                self.assertLessEqual(abs(pi_norm(scale * vector, 2, 2) - abs(scale) * pi_norm(vector, 2, 2)), 1e-10)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(12)
        for length in (1, 2, 3):
            for _ in range(10):
                first, second = rng.normal(size=(2, 4**length))
                bound = pi_norm(first, 2, 2) + pi_norm(second, 2, 2)
                self.assertLessEqual(pi_norm(first + second, 2, 2), bound + 1e-10)

    def test_bad_length(self):
        with self.assertRaises(DimensionMismatchError):
            pi_norm(np.ones(6), 2, 2)

    def test_sup_tv_of_identical_laws(self):
        probs = fix_noisy().do_probabilities()
        self.assertEqual(sup_tv_distance(probs, probs, 2, 2), 0.0)

    def test_sup_tv_dominates_every_policy(self):
        p, q = fix_noisy().do_probabilities(), fix_noisy(accuracy=0.7).do_probabilities()
        bound = sup_tv_distance(p, q, 2, 2)
        for seed in range(5):
            factors = random_policy(2, 2, 2, rng_seed=seed).factor_table(2, 2)
            self.assertLessEqual(0.5 * float(np.abs(factors * (p - q)).sum()), bound + 1e-12)


class CoreNormTest(TestCase):
    """Test cases for the general Π-norm and the fused norm on core test sets."""

    def test_window_one_norms_are_l1(self):
        core = default_core_tests(fix_id(), 1)
        vector = np.array([0.3, -0.4])
        self.assertAlmostEqual(general_pi_norm(vector, core, 1), 0.7)
        one_two, pi_prime, fused = fused_norm(vector, core, 1)
        self.assertAlmostEqual(one_two, 0.7)
        self.assertAlmostEqual(pi_prime, 0.7)
        self.assertAlmostEqual(fused, 0.7)

    def test_dummy_step(self):
        core = default_core_tests(fix_id(), 1)
        self.assertEqual(general_pi_norm([-2.0], core, 3), 2.0)
        self.assertEqual(fused_norm([-2.0], core, 3), (2.0, 2.0, 2.0))

    def test_window_two_groups_by_action_sequence(self):
        core = default_core_tests(fix_dec2(), 2)
        vector = np.zeros(8)
        vector[0] = 1.0  # (0, 0, 0)
        vector[2] = 1.0  # (0, 1, 0)
        one_two, pi_prime, fused = fused_norm(vector, core, 1)
        self.assertAlmostEqual(one_two, np.sqrt(2.0))
        self.assertAlmostEqual(pi_prime, 1.0)
        self.assertAlmostEqual(fused, np.sqrt(2.0))
        self.assertAlmostEqual(general_pi_norm(vector, core, 1), 1.0)

    def test_fused_length_checked(self):
        with self.assertRaises(DimensionMismatchError):
            fused_norm(np.ones(3), default_core_tests(fix_id(), 1), 1)


class CertifyStabilityTest(TestCase):
    """Test cases for certify_stability on the fixtures."""

    def test_decodable_fix_id_is_exactly_one(self):
        before = _certificate_count("decodable")
        report = certify_stability(brep_decodable(fix_id(), infer_decoder(fix_id(), 1), 1), n_samples=20)

        self.assertTrue(report.exact)
        self.assertLessEqual(abs(report.lambda_hi - 1.0), 1e-10)
        self.assertLessEqual(abs(report.lambda_lo - 1.0), 1e-10)
        self.assertTrue(report.bounds["decodable"]["upper_within"])
        self.assertEqual(_certificate_count("decodable") - before, 1)

    def test_decodable_dec2_within_root_action_sequences(self):
        model = fix_dec2()
        report = certify_stability(brep_decodable(model, infer_decoder(model, 2), 2), n_samples=0)
        self.assertFalse(report.exact)
        self.assertEqual(report.max_action_seqs, 2)
        self.assertLessEqual(report.lambda_hi, np.sqrt(2.0) + 1e-10)

    def test_revealing_noisy_bound(self):
        report = certify_stability(brep_revealing(fix_noisy(), 1), n_samples=50, rng_seed=2)
        self.assertLessEqual(report.lambda_hi, np.sqrt(2.0) / 0.6 + 1e-9)
        self.assertTrue(report.bounds["revealing_l2"]["upper_within"])
        self.assertLessEqual(report.lambda_lo, report.lambda_hi)

    def test_bracket_is_ordered_on_random_models(self):
        for seed in range(3):
            report = certify_stability(brep_revealing(random_revealing(rng_seed=seed), 1), n_samples=30, rng_seed=seed)
            self.assertLessEqual(report.lambda_lo, report.lambda_hi + 1e-12)
            self.assertGreaterEqual(report.r_b, 1.0)

    def test_sampling_is_seeded(self):
        brep = brep_revealing(fix_noisy(), 1)
        first = certify_stability(brep, n_samples=25, rng_seed=9)
        second = certify_stability(brep, n_samples=25, rng_seed=9)
        self.assertEqual(first.lambda_lo, second.lambda_lo)

    def test_core_mismatch(self):
        brep = brep_revealing(fix_noisy(), 1)
        with self.assertRaises(DimensionMismatchError):
            certify_stability(brep, core=default_core_tests(fix_noisy(), 2))

    def test_report_formats(self):
        report = certify_stability(brep_revealing(fix_noisy(), 1), n_samples=0)
        payload = json.loads(report.to_json())
        self.assertEqual(payload["provenance"], "revealing")
        self.assertEqual(len(payload["steps"]), 2)
        self.assertIn("lambda bracket", report.format_table())
        self.assertEqual(set(report.per_step), {1, 2})

    def test_well_conditioning_matches_exact_lower_end(self):
        brep = brep_decodable(fix_id(), infer_decoder(fix_id(), 1), 1)
        report = certify_stability(brep, n_samples=0)
        self.assertAlmostEqual(well_conditioned_check(brep).gamma1_inv, report.lambda_hi)

    def test_zero_operators_are_perfectly_conditioned(self):
        brep = brep_revealing(fix_noisy(), 1)
        zero = BRep(brep.core, brep.q0, {step: np.zeros_like(ops) for step, ops in brep.ops.items()})
        conditioning = well_conditioned_check(zero)
        self.assertEqual(conditioning.gamma1_inv, 0.0)
        self.assertEqual(conditioning.gamma2_inv, 0.0)

    def test_gamma1_within_root_action_sequences_times_upper_end(self):
        model = fix_dec2()
        breps = [brep_decodable(model, infer_decoder(model, 2), 2)]
        breps += [brep_revealing(random_revealing(rng_seed=seed), 1) for seed in range(3)]
        for brep in breps:
            report = certify_stability(brep, n_samples=0)
            bound = np.sqrt(report.max_action_seqs) * report.lambda_hi
            self.assertLessEqual(well_conditioned_check(brep).gamma1_inv, bound + 1e-10)


class WeakStabilityTest(TestCase):
    """Test cases for the sampled weak-stability check."""

    def test_implication_holds_on_revealing_fixture(self):
        brep = brep_revealing(fix_noisy(), 1)
        pairs = weak_stability_pairs(brep.core, 40, 5, models=[fix_noisy(), fix_noisy(accuracy=0.7)])
        result = check_weak_stability(brep, pairs=pairs)
        self.assertTrue(result.implication_holds)
        self.assertEqual(result.samples, 40 + 2)

    def test_negative_entries_rejected(self):
        brep = brep_revealing(fix_noisy(), 1)
        with self.assertRaises(DimensionMismatchError):
            check_weak_stability(brep, pairs=[(1, np.array([0.5, -0.1]), np.array([0.2, 0.2]))])

    def test_violations_counted_against_small_claim(self):
        brep = brep_revealing(fix_noisy(), 1)
        pairs = [(1, np.array([1.0, 0.0]), np.array([0.0, 1.0]))]
        result = check_weak_stability(brep, pairs=pairs, claimed_lambda=0.0)
        self.assertGreater(result.worst_ratio, 0.0)
        self.assertGreater(result.violations, 0)


class ErrorDecompositionTest(TestCase):
    """Test cases for B-errors, the TV decomposition and Hellinger domination."""

    def _pair(self, first_seed, second_seed):
        theta = random_revealing(rng_seed=first_seed)
        bar = random_revealing(rng_seed=second_seed)
        return brep_revealing(theta, 1), brep_revealing(bar, 1), bar

    def test_identical_models_have_no_error(self):
        model = fix_noisy()
        brep = brep_revealing(model, 1)
        errors = b_errors(brep, brep, model, uniform_policy(2))
        self.assertEqual(errors.e0, 0.0)
        self.assertAlmostEqual(errors.decomposition_bound, 0.0, places=12)
        self.assertAlmostEqual(errors.at((0, 1)), 0.0, places=12)

    def test_decomposition_bounds_tv(self):
        for seed in range(4):
            brep_theta, brep_bar, model_bar = self._pair(seed, seed + 100)
            policy = random_policy(2, 2, 2, rng_seed=seed)
            tv, bound, slack = decomposition_check(brep_theta, brep_bar, model_bar, policy)
            self.assertGreaterEqual(slack, -1e-9)
            self.assertAlmostEqual(slack, bound - tv)

    def test_hellinger_domination(self):
        for seed in range(4):
            brep_theta, brep_bar, model_bar = self._pair(seed, seed + 200)
            check = hellinger_domination_check(brep_theta, brep_bar, model_bar, random_policy(2, 2, 2, rng_seed=seed))
            self.assertEqual(set(check.slack), {0, 1, 2})
            self.assertGreaterEqual(check.worst_slack, -1e-9)

    def test_core_mismatch_between_representations(self):
        model = fix_noisy()
        with self.assertRaises(DimensionMismatchError):
            b_errors(brep_revealing(model, 1), brep_revealing(model, 2), model, uniform_policy(2))


class ExhaustiveWeightsTest(TestCase):
    """Test cases for the deterministic future policy weights used as the Π-norm reference."""

    def test_rows_are_policies(self):
        weights = deterministic_future_weights(2, 2, 2)
        # Two first-step histories and eight second-step histories, two actions each.
        self.assertEqual(weights.shape, (2**10, 16))
        np.testing.assert_array_equal(weights.sum(axis=1), np.full(2**10, 4.0))
        self.assertTrue(np.all((weights == 0.0) | (weights == 1.0)))
