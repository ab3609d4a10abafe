"""Domain types, the logistic model, and the answer distribution."""

import math

import numpy as np
import pytest

from relclust.core import (
    DNK,
    NO,
    YES,
    Dataset,
    HyperParams,
    SoftmaxCache,
    TripletConstraint,
    ConstraintSet,
    Weights,
    constraint_label_prob,
    consistent_label,
    softmax,
)


class TestDataset:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(np.array([[1.0, np.nan]]))

    def test_rejects_wrong_label_length(self):
        with pytest.raises(ValueError):
            Dataset(np.ones((3, 2)), labels=[1, 2])

    def test_standardized_flag_is_checked(self):
        with pytest.raises(ValueError, match="z-scored"):
            Dataset(np.array([[1.0], [5.0]]) * 3, standardized=True)

    def test_instances_are_read_only(self):
        ds = Dataset(np.ones((2, 2)))
        with pytest.raises(ValueError):
            ds.instances[0, 0] = 7.0

    def test_augmented_appends_bias_column(self):
        ds = Dataset(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert ds.augmented.shape == (2, 3)
        np.testing.assert_array_equal(ds.augmented[:, -1], [1.0, 1.0])


class TestConstraintTypes:
    def test_triplet_indices_must_be_distinct(self):
        with pytest.raises(ValueError, match="distinct"):
            TripletConstraint(0, 0, 1, YES)

    def test_constraint_set_partitions_indices(self):
        cs = ConstraintSet((TripletConstraint(0, 2, 4, YES),), n=6)
        np.testing.assert_array_equal(cs.constrained_index, [0, 2, 4])
        np.testing.assert_array_equal(cs.unconstrained_index, [1, 3, 5])
        assert cs.m == 1

    def test_constraint_set_rejects_out_of_range(self):
        with pytest.raises(ValueError, match=">= n"):
            ConstraintSet((TripletConstraint(0, 1, 5, YES),), n=5)


class TestHyperParams:
    def test_rejects_epsilon_above_two_thirds(self):
        with pytest.raises(ValueError, match="epsilon"):
            HyperParams(k=2, epsilon=0.7)

    def test_accepts_boundary_epsilon(self):
        assert HyperParams(k=2, epsilon=2 / 3).alpha == 1.0
        assert HyperParams(k=2, epsilon=0.0).alpha == math.inf

    def test_alpha_matches_definition(self):
        hp = HyperParams(k=2, epsilon=0.05)
        assert hp.alpha == pytest.approx(38.0, abs=1e-12)


class TestSoftmax:
    def test_zero_weights_give_uniform_rows(self):
        ds = Dataset(np.random.default_rng(0).normal(size=(5, 3)))
        cache = softmax(Weights(np.zeros((4, 4))), ds)
        np.testing.assert_allclose(cache.probs, 0.25, atol=1e-15)

    def test_scalar_example(self):
        # k=2, d=1, w1=[2,0], w2=[0,0], x=[1]: p1 = e^2 / (e^2 + 1)
        expected = math.exp(2) / (math.exp(2) + 1)
        assert expected == pytest.approx(0.8807970779778824, abs=1e-15)
        ds = Dataset(np.array([[1.0]]))
        cache = softmax(Weights(np.array([[2.0, 0.0], [0.0, 0.0]])), ds)
        assert cache.probs[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_shift_invariance_across_clusters(self):
        rng = np.random.default_rng(1)
        ds = Dataset(rng.normal(size=(10, 3)))
        w = rng.normal(size=(3, 4))
        shift = rng.normal(size=4)
        a = softmax(Weights(w), ds).probs
        b = softmax(Weights(w + shift[None, :]), ds).probs
        assert np.abs(a - b).max() < 1e-10

    def test_rows_are_normalized(self):
        rng = np.random.default_rng(2)
        ds = Dataset(rng.normal(size=(50, 4)) * 10)
        cache = softmax(Weights(rng.normal(size=(5, 5)) * 5), ds)
        assert np.abs(cache.probs.sum(axis=1) - 1.0).max() < 1e-12
        assert abs(cache.marginal.sum() - 1.0) < 1e-12

    def test_dimension_mismatch_raises(self):
        ds = Dataset(np.ones((3, 2)))
        with pytest.raises(ValueError, match="features"):
            softmax(Weights(np.zeros((2, 5))), ds)

    def test_cache_validation(self):
        with pytest.raises(ValueError, match="sum to 1"):
            SoftmaxCache(probs=np.array([[0.6, 0.6]]), marginal=np.array([0.6, 0.6]))


class TestAnswerDistribution:
    def test_consistent_answer_gets_bulk_mass(self):
        assert constraint_label_prob((1, 1, 2), YES, 0.05) == pytest.approx(0.95)
        assert constraint_label_prob((1, 1, 2), NO, 0.05) == pytest.approx(0.025)

    def test_all_distinct_is_dnk(self):
        assert constraint_label_prob((1, 2, 3), DNK, 0.05) == pytest.approx(0.95)
        assert constraint_label_prob((1, 2, 3), YES, 0.05) == pytest.approx(0.025)

    def test_zero_error_is_deterministic(self):
        assert constraint_label_prob((1, 2, 1), NO, 0.0) == 1.0
        assert constraint_label_prob((1, 2, 1), YES, 0.0) == 0.0

    def test_rows_sum_to_one(self):
        # exact up to one rounding of 1 - eps (eps = 0.15 is off by 1 ulp)
        for k in (2, 3, 4):
            for y1 in range(1, k + 1):
                for y2 in range(1, k + 1):
                    for y3 in range(1, k + 1):
                        for eps in (0.0, 0.05, 0.15, 0.5, 2 / 3):
                            total = sum(
                                constraint_label_prob((y1, y2, y3), lab, eps)
                                for lab in (YES, NO, DNK)
                            )
                            assert total == pytest.approx(1.0, abs=2e-16)

    def test_epsilon_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            constraint_label_prob((1, 1, 2), YES, 0.8)

    def test_consistent_label_cases(self):
        assert consistent_label(1, 1, 2) == YES
        assert consistent_label(1, 2, 1) == NO
        assert consistent_label(1, 1, 1) == DNK
        assert consistent_label(1, 2, 3) == DNK
