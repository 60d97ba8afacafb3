"""Tests for the Eluder, elliptical-potential, decoupling and spanner checks."""

import math
import os
from unittest import TestCase
from unittest.mock import patch

import numpy as np

from psrlab.exceptions import CapacityError, DimensionMismatchError, ModelValidationError
from psrlab.fixtures import noisy_class
from psrlab.learners import omle
from psrlab.oracles import (
    DecouplingInstance,
    EluderInstance,
    barycentric_spanner,
    decoupling_check,
    deterministic_future_weights,
    eluder_corollary_check,
    eluder_instance_from_run,
    eluder_l2_check,
    elliptical_potential_check,
    random_decoupling_instance,
    random_eluder_instance,
    random_psd_sequence,
    span_dimension,
)
from psrlab.suites import build_brep


def _scalar_instance():
    """One shared point ``x = 1`` and rounds with ``f_0 = 2``, ``f_1 = 3``."""
    return EluderInstance(np.array([[1.0]]), np.array([[[[2.0]]], [[[3.0]]]]), np.array([[1.0], [1.0]]))


class EluderInstanceTest(TestCase):
    """Test cases for EluderInstance."""

    def test_tables(self):
        instance = _scalar_instance()
        self.assertTrue(instance.shared_points)
        self.assertEqual((instance.rounds, instance.dim), (2, 1))
        np.testing.assert_allclose(instance.diagonal(), [2.0, 3.0])
        np.testing.assert_allclose(instance.betas(), [0.0, 9.0])
        self.assertEqual(instance.radius_x(), 1.0)
        self.assertEqual(instance.radius_y(), 3.0)
        self.assertEqual(instance.lipschitz_l1(), 3.0)

    def test_rule_weights(self):
        ys = np.array([[[1.0], [-2.0]]])
        rules = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        instance = EluderInstance(np.array([[1.0]]), ys, np.array([[1.0]]), rule_weights=rules)
        self.assertAlmostEqual(float(instance.f(0, np.array([1.0]))), 3.0)
        self.assertEqual(instance.radius_y(), 3.0)

    def test_dict_round_trip_keeps_values(self):
        instance = random_eluder_instance(3)
        restored = EluderInstance.from_dict(instance.to_dict())
        np.testing.assert_allclose(restored.value_table(), instance.value_table())

    def test_shape_errors(self):
        with self.assertRaises(DimensionMismatchError):
            EluderInstance(np.ones((1, 2)), np.ones((2, 1, 2)), np.ones((2, 1)))
        with self.assertRaises(DimensionMismatchError):
            EluderInstance(np.ones((1, 2)), np.ones((2, 1, 1, 3)), np.ones((2, 1)))
        with self.assertRaises(DimensionMismatchError):
            EluderInstance(np.ones((3, 1, 2)), np.ones((2, 1, 1, 2)), np.ones((2, 1)))
        with self.assertRaises(DimensionMismatchError):
            EluderInstance(np.ones((1, 2)), np.ones((2, 1, 2)), np.ones((2, 1)), rule_weights=[[1.0, 1.0]])

    def test_q_must_be_distribution(self):
        with self.assertRaises(ModelValidationError):
            EluderInstance(np.ones((2, 1)), np.ones((1, 1, 1, 1)), np.array([[0.7, 0.7]]))


class EluderCheckTest(TestCase):
    """Test cases for the Eluder inequality checks."""

    def test_l2_check_by_hand(self):
        check = eluder_l2_check(_scalar_instance(), 1.0)
        np.testing.assert_allclose(check.lhs, [1.0, 2.0])
        self.assertAlmostEqual(check.rhs[0], math.sqrt(2.0 * math.log(10.0)))
        self.assertAlmostEqual(check.slack, math.sqrt(2.0 * math.log(10.0)) - 1.0)
        self.assertEqual(check.to_dict()["lhs"], [1.0, 2.0])

    def test_l2_check_rejects_nonpositive_m(self):
        with self.assertRaises(ModelValidationError):
            eluder_l2_check(_scalar_instance(), 0.0)

    def test_random_instances_hold(self):
        for seed in range(10):
            instance = random_eluder_instance(seed)
            self.assertGreaterEqual(eluder_l2_check(instance, 1.0).slack, -1e-9)
            self.assertGreaterEqual(eluder_corollary_check(instance).slack, -1e-9)

    def test_instance_from_omle_run(self):
        model_class = noisy_class()
        with patch("psrlab.run_logging.get_app_settings", return_value={"run_logging_enabled": False}):
            _, log = omle(model_class, 5, rng_seed=0)
        breps = [build_brep(member, "revealing", 1) for member in model_class.members]

        instance = eluder_instance_from_run(log, model_class, 2, breps)

        self.assertEqual(instance.rounds, 5)
        self.assertEqual(instance.xs.shape[0], 4)
        self.assertEqual(instance.rule_weights.shape, (4, 4))
        self.assertGreaterEqual(eluder_l2_check(instance, 1.0).slack, -1e-9)

    def test_instance_from_run_argument_errors(self):
        model_class = noisy_class()
        with patch("psrlab.run_logging.get_app_settings", return_value={"run_logging_enabled": False}):
            _, log = omle(model_class, 2, rng_seed=0)
        breps = [build_brep(member, "revealing", 1) for member in model_class.members]
        with self.assertRaises(ModelValidationError):
            eluder_instance_from_run(log, model_class, 3, breps)
        with self.assertRaises(DimensionMismatchError):
            eluder_instance_from_run(log, model_class, 1, breps[:3])


class EllipticalPotentialTest(TestCase):
    """Test cases for elliptical_potential_check."""

    def test_single_identity(self):
        check = elliptical_potential_check([np.eye(1)], 1.0)
        self.assertEqual(check.lhs, 1.0)
        self.assertAlmostEqual(check.rhs, 2.0 * math.log(2.0))

    def test_empty_sequence(self):
        self.assertEqual(elliptical_potential_check([], 1.0).slack, 0.0)

    def test_random_sequences_hold(self):
        for seed in range(10):
            phis, lambda0 = random_psd_sequence(seed)
            self.assertGreaterEqual(elliptical_potential_check(phis, lambda0).slack, -1e-9)

    def test_invalid_inputs(self):
        with self.assertRaises(ModelValidationError):
            elliptical_potential_check([np.array([[1.0, 2.0], [0.0, 1.0]])], 1.0)
        with self.assertRaises(ModelValidationError):
            elliptical_potential_check([np.diag([1.0, -1.0])], 1.0)
        with self.assertRaises(ModelValidationError):
            elliptical_potential_check([np.eye(2)], 0.0)
        with self.assertRaises(DimensionMismatchError):
            elliptical_potential_check([np.eye(2), np.eye(3)], 1.0)


class DecouplingTest(TestCase):
    """Test cases for decoupling_check."""

    def test_by_hand(self):
        instance = DecouplingInstance(np.eye(2), np.array([[[[1.0, 1.0]]]]), np.array([[0.5, 0.5]]), np.array([1.0]))
        np.testing.assert_allclose(instance.values(), [[1.0, 1.0]])
        check = decoupling_check(instance)
        self.assertAlmostEqual(check.lhs, 1.0)
        self.assertAlmostEqual(check.rhs, math.sqrt(2.0))

    def test_random_instances_hold(self):
        for seed in range(10):
            self.assertGreaterEqual(decoupling_check(random_decoupling_instance(seed)).slack, -1e-9)

    def test_shape_mismatch(self):
        instance = DecouplingInstance(np.eye(2), np.ones((1, 1, 1, 2)), np.array([[0.5, 0.5]]), np.array([0.5, 0.5]))
        with self.assertRaises(DimensionMismatchError):
            decoupling_check(instance)


class SpannerTest(TestCase):
    """Test cases for span_dimension and barycentric_spanner."""

    def test_span_dimension(self):
        self.assertEqual(span_dimension([[1.0, 2.0], [2.0, 4.0]]), 1)
        self.assertEqual(span_dimension(np.zeros((0, 3))), 0)

    def test_spanner_of_low_rank_points(self):
        rng = np.random.default_rng(7)
        xs = rng.normal(size=(10, 2)) @ rng.normal(size=(2, 4))

        spanner = barycentric_spanner(xs, 2)

        self.assertEqual(spanner.F.shape, (4, 2))
        self.assertLess(spanner.residual(xs), 1e-9)
        self.assertLessEqual(spanner.max_coefficient, 2.0 + 1e-9)
        self.assertEqual(len(spanner.indices), 2)

    def test_padding_to_larger_d(self):
        xs = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        spanner = barycentric_spanner(xs, 3)
        self.assertEqual(spanner.F.shape, (3, 3))
        np.testing.assert_allclose(spanner.F[:, 1:], 0.0)
        self.assertLess(spanner.residual(xs), 1e-12)

    def test_zero_points(self):
        spanner = barycentric_spanner(np.zeros((3, 2)), 2)
        self.assertEqual(spanner.indices, ())
        self.assertEqual(spanner.norm_1to1(), 0.0)

    def test_rank_above_d(self):
        with self.assertRaises(ModelValidationError):
            barycentric_spanner(np.eye(3), 2)


class FutureWeightsTest(TestCase):
    """Test cases for deterministic_future_weights."""

    def test_single_step(self):
        np.testing.assert_array_equal(deterministic_future_weights(1, 2, 1), [[1.0, 0.0], [0.0, 1.0]])

    def test_rows_are_policies(self):
        weights = deterministic_future_weights(2, 2, 1)
        self.assertEqual(weights.shape, (4, 4))
        np.testing.assert_allclose(weights.sum(axis=1), 2.0)

    @patch.dict(os.environ, {"PSRLAB_CAP": "4"})
    def test_capacity(self):
        self.assertEqual(deterministic_future_weights(2, 2, 1).shape[0], 4)
        with self.assertRaises(CapacityError):
            deterministic_future_weights(2, 2, 2)
