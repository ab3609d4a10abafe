"""Shared builders for randomized test instances."""

from __future__ import annotations

import numpy as np

from relclust.core import ConstraintSet, Dataset, TripletConstraint, Weights
from relclust.estep import Posterior
from relclust.oracle import label_triplet


def random_dataset(rng, n=20, d=3):
    return Dataset(rng.normal(size=(n, d)))


def random_constraints(rng, n, m, k=3, noise=0.0):
    """m random triplets answered from random cluster ids (optionally flipped)."""
    labels = rng.integers(1, k + 1, n)
    triplets = []
    for _ in range(m):
        a, b, c = rng.choice(n, 3, replace=False)
        lab = label_triplet(labels[a], labels[b], labels[c])
        if noise > 0 and rng.random() < noise:
            others = [x for x in ("yes", "no", "dnk") if x != lab]
            lab = others[rng.integers(2)]
        triplets.append(TripletConstraint(int(a), int(b), int(c), lab))
    return ConstraintSet(tuple(triplets), n=n)


def random_posterior(rng, index, k):
    q = rng.dirichlet(np.ones(k), size=len(index))
    return Posterior(q=q, index=np.asarray(index, dtype=int))


def random_weights(rng, k, d, scale=0.5):
    return Weights(rng.normal(scale=scale, size=(k, d + 1)))
