"""Tests for the shared numerical helpers."""

import os
from unittest import TestCase
from unittest.mock import patch

import numpy as np

from psrlab.exceptions import CapacityError
from psrlab.metrics import psrlab_capacity_rejections_total
from psrlab.utils import (
    argmax_with_ties,
    check_capacity,
    derive_rng,
    format_trajectory,
    is_column_stochastic,
    iter_histories,
    iter_trajectories,
    norm_1to1,
    num_trajectories,
    numerical_rank,
    parse_trajectory,
    trajectory_index,
)


class CheckCapacityTest(TestCase):
    """Test cases for check_capacity."""

    def test_within_cap_passes(self):
        check_capacity("test_within", 10)

    @patch.dict(os.environ, {"PSRLAB_CAP": "100"})
    def test_above_cap_raises_and_counts(self):
        before = psrlab_capacity_rejections_total.labels(operation="test_above")._value.get()

        with self.assertRaises(CapacityError) as ctx:
            check_capacity("test_above", 101)

        self.assertEqual(ctx.exception.required, 101)
        self.assertEqual(ctx.exception.cap, 100)
        after = psrlab_capacity_rejections_total.labels(operation="test_above")._value.get()
        self.assertEqual(after - before, 1)

    @patch.dict(os.environ, {"PSRLAB_CAP": "100"})
    def test_exactly_at_cap_passes(self):
        check_capacity("test_at", 100)


class TrajectoryIndexTest(TestCase):
    """Test cases for trajectory indexing in C order."""

    def test_index_matches_enumeration_order(self):
        for position, trajectory in enumerate(iter_trajectories(3, 2, 2)):
            self.assertEqual(trajectory_index(trajectory, 3, 2), position)

    def test_history_enumeration_size(self):
        self.assertEqual(len(list(iter_histories(2, 3, 2))), 2 * 3 * 2)
        self.assertEqual(num_trajectories(2, 3, 2), 36)

    def test_empty_trajectory(self):
        self.assertEqual(trajectory_index((), 2, 2), 0)
        self.assertEqual(format_trajectory(()), "")
        self.assertEqual(parse_trajectory(""), ())

    def test_format_and_parse(self):
        self.assertEqual(format_trajectory((0, 1, 1, 0)), "o0-a1-o1-a0")
        self.assertEqual(parse_trajectory("o0-a1-o1-a0"), (0, 1, 1, 0))


class NumericalHelpersTest(TestCase):
    """Test cases for rank, norms, stochasticity and tie-breaking."""

    def test_numerical_rank(self):
        self.assertEqual(numerical_rank(np.eye(3)), 3)
        self.assertEqual(numerical_rank(np.outer([1.0, 2.0], [3.0, 4.0])), 1)
        self.assertEqual(numerical_rank(np.zeros((2, 2))), 0)

    def test_norm_1to1_is_max_column_sum(self):
        self.assertEqual(norm_1to1([[1.0, -2.0], [3.0, 0.5]]), 4.0)

    def test_column_stochastic(self):
        self.assertTrue(is_column_stochastic([[0.3, 1.0], [0.7, 0.0]]))
        self.assertFalse(is_column_stochastic([[0.3, 1.0], [0.6, 0.0]]))
        self.assertFalse(is_column_stochastic([[1.2, 1.0], [-0.2, 0.0]]))

    def test_ties_resolve_to_smallest_index(self):
        self.assertEqual(int(argmax_with_ties([0.5, 0.5, 0.1])), 0)
        self.assertEqual(int(argmax_with_ties([0.1, 0.5, 0.5])), 1)
        np.testing.assert_array_equal(argmax_with_ties([[1.0, 2.0], [3.0, 3.0]], axis=1), [1, 0])


class DeriveRngTest(TestCase):
    """Test cases for derive_rng."""

    def test_same_keys_same_stream(self):
        first = derive_rng(7, "omle", 3, "sample").random(5)
        second = derive_rng(7, "omle", 3, "sample").random(5)
        np.testing.assert_array_equal(first, second)

    def test_different_purpose_different_stream(self):
        first = derive_rng(7, "omle", 3, "sample").random(5)
        second = derive_rng(7, "omle", 3, "policy").random(5)
        self.assertFalse(np.array_equal(first, second))

    def test_different_root_different_stream(self):
        self.assertNotEqual(derive_rng(1, "x").random(), derive_rng(2, "x").random())
