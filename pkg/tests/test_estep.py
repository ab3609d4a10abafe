"""Mean-field inference: compatibility table, soft and hard updates."""

import math

import numpy as np
import pytest

from relclust.core import (
    DNK,
    NO,
    YES,
    ConstraintSet,
    Dataset,
    HyperParams,
    SoftmaxCache,
    TripletConstraint,
    Weights,
    consistent_label,
    softmax,
)
from relclust.estep import (
    Posterior,
    compat,
    compat_vector,
    hard_update,
    initial_posterior,
    mean_field_objective,
    mean_field_update,
    run_estep,
)
from helpers import random_constraints, random_weights


def compat_brute(label, slot, k, qa, qb):
    """Enumeration oracle: mass of the other two members' assignments that make
    the observed label the noise-free one, with the focal member fixed at k."""
    total = 0.0
    others = [s for s in range(3) if s != slot]
    for u in range(len(qa)):
        for v in range(len(qb)):
            ids = [None, None, None]
            ids[slot] = k
            ids[others[0]] = u
            ids[others[1]] = v
            if consistent_label(*ids) == label:
                total += qa[u] * qb[v]
    return total


def uniform_cache(n, k):
    ds = Dataset(np.zeros((n, 1)))
    return ds, softmax(Weights(np.zeros((k, 2))), ds)


class TestCompat:
    def test_worked_examples(self):
        post = Posterior(q=np.array([[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]]), index=np.arange(3))
        t = TripletConstraint(0, 1, 2, YES)
        assert compat(t, 0, 0, post) == 1.0

        post2 = Posterior(q=np.full((3, 2), 0.5), index=np.arange(3))
        assert compat(TripletConstraint(0, 1, 2, NO), 1, 0, post2) == pytest.approx(0.25)

    def test_three_distinct_deterministic_is_dnk_certain(self):
        post = Posterior(q=np.eye(3), index=np.arange(3))
        t = TripletConstraint(0, 1, 2, DNK)
        for slot, row in ((0, 0), (1, 1), (2, 2)):
            k = slot  # the id the one-hot row puts all mass on
            assert compat(t, slot, k, post) == pytest.approx(1.0)

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = rng.integers(2, 5)
            qa = rng.dirichlet(np.ones(k))
            qb = rng.dirichlet(np.ones(k))
            for slot in (0, 1, 2):
                for label in (YES, NO, DNK):
                    vec = compat_vector(label, slot, qa, qb)
                    for kk in range(k):
                        expected = compat_brute(label, slot, kk, qa, qb)
                        assert vec[kk] == pytest.approx(expected, abs=1e-12)

    def test_labels_sum_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            k = rng.integers(2, 6)
            qa = rng.dirichlet(np.ones(k))
            qb = rng.dirichlet(np.ones(k))
            for slot in (0, 1, 2):
                total = sum(compat_vector(lab, slot, qa, qb) for lab in (YES, NO, DNK))
                assert np.abs(total - 1.0).max() < 1e-12


class TestSoftUpdate:
    def test_worked_example(self):
        ds, cache = uniform_cache(3, 2)
        cs = ConstraintSet((TripletConstraint(0, 1, 2, YES),), n=3)
        post = Posterior(q=np.array([[0.5, 0.5], [0.9, 0.1], [0.1, 0.9]]), index=np.arange(3))
        out = mean_field_update(post, cs, cache, HyperParams(k=2, epsilon=0.05))
        expected = 38**0.81 / (38**0.81 + 38**0.01)
        assert round(expected, 3) == 0.948
        assert out.q[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_unconstrained_row_returns_prior(self):
        # a posterior row for an instance in no triplet has an empty sum
        ds, cache = uniform_cache(5, 2)
        w = Weights(np.array([[1.0, 0.2], [-0.5, 0.0]]))
        ds = Dataset(np.random.default_rng(3).normal(size=(5, 1)))
        cache = softmax(w, ds)
        cs = ConstraintSet((TripletConstraint(0, 1, 2, YES),), n=5)
        q0 = np.full((4, 2), 0.5)
        post = Posterior(q=q0, index=np.array([0, 1, 2, 4]))
        out = mean_field_update(post, cs, cache, HyperParams(k=2, epsilon=0.05))
        np.testing.assert_allclose(out.q[3], cache.probs[4], atol=1e-15)

    def test_boundary_epsilon_reproduces_probabilities_exactly(self):
        rng = np.random.default_rng(4)
        ds = Dataset(rng.normal(size=(6, 2)))
        cache = softmax(random_weights(rng, 3, 2), ds)
        cs = random_constraints(rng, 6, 4)
        post = initial_posterior(cs, cache)
        out = mean_field_update(post, cs, cache, HyperParams(k=3, epsilon=2 / 3))
        assert np.array_equal(out.q, cache.probs[cs.constrained_index])

    def test_matches_brute_force_coordinate_update(self):
        # single constraint; the first-updated row must equal the generic
        # exponentiated-expectation update computed by enumeration
        rng = np.random.default_rng(5)
        for trial in range(30):
            k = int(rng.integers(2, 4))
            eps = float(rng.uniform(0.01, 0.6))
            ds = Dataset(rng.normal(size=(3, 2)))
            cache = softmax(random_weights(rng, k, 2), ds)
            order = rng.permutation(3)
            t = TripletConstraint(int(order[0]), int(order[1]), int(order[2]), ("yes", "no", "dnk")[trial % 3])
            cs = ConstraintSet((t,), n=3)
            q = rng.dirichlet(np.ones(k), size=3)
            post = Posterior(q=q, index=np.arange(3))
            out = mean_field_update(post, cs, cache, HyperParams(k=k, epsilon=eps))

            focal = 0  # first row updated in the sweep, so it sees the original q's
            slot = list(t.indices).index(focal)
            others = [s for s in range(3) if s != slot]
            logw = np.empty(k)
            for kk in range(k):
                expect = 0.0
                for u in range(k):
                    for v in range(k):
                        ids = [None, None, None]
                        ids[slot] = kk
                        ids[others[0]] = u
                        ids[others[1]] = v
                        pr = (1 - eps) if consistent_label(*ids) == t.label else eps / 2
                        expect += q[t.indices[others[0]], u] * q[t.indices[others[1]], v] * math.log(pr)
                logw[kk] = expect + math.log(cache.probs[focal, kk])
            brute = np.exp(logw - logw.max())
            brute /= brute.sum()
            np.testing.assert_allclose(out.q[0], brute, atol=1e-10)

    def test_higher_compatibility_gets_more_mass_at_uniform_prior(self):
        rng = np.random.default_rng(6)
        ds, cache = uniform_cache(3, 3)
        cs = ConstraintSet((TripletConstraint(0, 1, 2, YES),), n=3)
        q = rng.dirichlet(np.ones(3), size=3)
        post = Posterior(q=q, index=np.arange(3))
        f = compat_vector(YES, 0, q[1], q[2])
        out = mean_field_update(post, cs, cache, HyperParams(k=3, epsilon=0.05))
        for i in range(3):
            for j in range(3):
                if f[i] > f[j] + 1e-12:
                    assert out.q[0, i] > out.q[0, j]


class TestHardUpdate:
    def test_tie_across_all_ids_keeps_probabilities(self):
        rng = np.random.default_rng(7)
        ds = Dataset(rng.normal(size=(3, 2)))
        cache = softmax(random_weights(rng, 3, 2), ds)
        cs = ConstraintSet((TripletConstraint(0, 1, 2, YES),), n=3)
        post = Posterior(q=np.full((3, 3), 1 / 3), index=np.arange(3))
        out = hard_update(post, cs, cache)
        np.testing.assert_allclose(out.q[0], cache.probs[0], atol=1e-15)

    def test_unique_maximizer_is_one_hot(self):
        rng = np.random.default_rng(8)
        ds = Dataset(rng.normal(size=(3, 2)))
        cache = softmax(random_weights(rng, 2, 2), ds)
        cs = ConstraintSet((TripletConstraint(0, 1, 2, YES),), n=3)
        post = Posterior(q=np.array([[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]]), index=np.arange(3))
        out = hard_update(post, cs, cache)
        np.testing.assert_allclose(out.q[0], [1.0, 0.0], atol=1e-15)

    def test_small_epsilon_limit_matches_hard_update(self):
        # planted ids with consistent answers keep compatibility gaps wide (and
        # ties exact), which is where the vanishing-noise limit is well defined
        rng = np.random.default_rng(9)
        for _ in range(20):
            n, k = 9, int(rng.integers(2, 5))
            y = rng.integers(0, k, n)
            delta = 3e-4
            probs = np.full((n, k), delta)
            probs[np.arange(n), y] = 1.0 - (k - 1) * delta
            cache = SoftmaxCache(probs=probs, marginal=probs.mean(axis=0))
            triplets = []
            for _ in range(5):
                a, b, c = (int(v) for v in rng.choice(n, 3, replace=False))
                triplets.append(TripletConstraint(a, b, c, consistent_label(y[a], y[b], y[c])))
            cs = ConstraintSet(tuple(triplets), n=n)
            idx = cs.constrained_index
            post = Posterior(q=np.eye(k)[y[idx]], index=idx)
            soft = mean_field_update(post, cs, cache, HyperParams(k=k, epsilon=1e-6))
            hard = hard_update(post, cs, cache)
            assert np.abs(soft.q - hard.q).max() <= 1e-3

    def test_zero_epsilon_routes_to_hard(self):
        rng = np.random.default_rng(10)
        ds = Dataset(rng.normal(size=(5, 2)))
        cache = softmax(random_weights(rng, 2, 2), ds)
        cs = random_constraints(rng, 5, 3, k=2)
        post = initial_posterior(cs, cache)
        a = mean_field_update(post, cs, cache, HyperParams(k=2, epsilon=0.0))
        b = hard_update(post, cs, cache)
        assert np.array_equal(a.q, b.q)


class TestSweepMonotonicity:
    def test_objective_never_decreases(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            n, k = 12, int(rng.integers(2, 4))
            eps = float(rng.uniform(0.05, 0.6))
            ds = Dataset(rng.normal(size=(n, 3)))
            cache = softmax(random_weights(rng, k, 3), ds)
            cs = random_constraints(rng, n, 8, k=k)
            post = Posterior(
                q=rng.dirichlet(np.ones(k), size=len(cs.constrained_index)),
                index=cs.constrained_index,
            )
            hyper = HyperParams(k=k, epsilon=eps)
            prev = mean_field_objective(post, cs, cache, hyper)
            for _ in range(10):
                post = mean_field_update(post, cs, cache, hyper)
                cur = mean_field_objective(post, cs, cache, hyper)
                assert cur >= prev - 1e-9
                prev = cur


class TestSweepKernels:
    def test_jit_and_fallback_agree(self):
        from relclust import estep as es

        if not es._HAVE_NUMBA:
            pytest.skip("numba unavailable; only the fallback path exists")
        rng = np.random.default_rng(21)
        for _ in range(10):
            n, k = 12, int(rng.integers(2, 5))
            cs = random_constraints(rng, n, 8, k=k)
            idx = cs.constrained_index
            plan = es._build_plan(cs, idx)
            p = rng.dirichlet(np.ones(k), size=len(idx))
            log_p = np.log(p)
            q0 = rng.dirichlet(np.ones(k), size=len(idx))
            args = (plan.ptr, plan.label, plan.slot, plan.row_a, plan.row_b)

            q_np, q_nb = q0.copy(), q0.copy()
            d_np = es._soft_sweep_np(q_np, p, log_p, *args, 3.0)
            d_nb = es._soft_sweep_nb(q_nb, p, log_p, *args, 3.0)
            np.testing.assert_allclose(q_nb, q_np, atol=1e-12)
            assert d_nb == pytest.approx(d_np, abs=1e-12)

            q_np, q_nb = q0.copy(), q0.copy()
            es._hard_sweep_np(q_np, p, *args)
            es._hard_sweep_nb(q_nb, p, *args)
            np.testing.assert_allclose(q_nb, q_np, atol=1e-12)


class TestRunEStep:
    def test_no_constraints_converges_immediately(self):
        rng = np.random.default_rng(12)
        ds = Dataset(rng.normal(size=(4, 2)))
        cache = softmax(random_weights(rng, 2, 2), ds)
        cs = ConstraintSet((), n=4)
        out = run_estep(cs, cache, HyperParams(k=2))
        assert out.q.shape == (0, 2)
        assert out.sweeps == 1

    def test_rows_stay_normalized(self):
        rng = np.random.default_rng(13)
        ds = Dataset(rng.normal(size=(15, 3)))
        cache = softmax(random_weights(rng, 4, 3), ds)
        cs = random_constraints(rng, 15, 10, k=4)
        out = run_estep(cs, cache, HyperParams(k=4, epsilon=0.05))
        assert np.abs(out.q.sum(axis=1) - 1.0).max() < 1e-9

    def test_converged_posterior_stops_after_one_sweep(self):
        rng = np.random.default_rng(14)
        ds = Dataset(rng.normal(size=(10, 2)))
        cache = softmax(random_weights(rng, 3, 2), ds)
        cs = random_constraints(rng, 10, 6, k=3)
        hyper = HyperParams(k=3, epsilon=0.1)
        first = run_estep(cs, cache, hyper)
        again = run_estep(cs, cache, hyper, warm_start=first)
        assert again.sweeps == first.sweeps + 1
        assert np.abs(again.q - first.q).max() < 1e-6

    def test_hard_constraints_also_converge(self):
        rng = np.random.default_rng(15)
        ds = Dataset(rng.normal(size=(10, 2)))
        cache = softmax(random_weights(rng, 2, 2), ds)
        cs = random_constraints(rng, 10, 5, k=2)
        out = run_estep(cs, cache, HyperParams(k=2, epsilon=0.0))
        assert np.abs(out.q.sum(axis=1) - 1.0).max() < 1e-9
