"""Domain types for relative-constraint clustering, the multi-class logistic
cluster model, and the noise-relaxed distribution of constraint answers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

YES = "yes"
NO = "no"
DNK = "dnk"
TRIPLET_LABELS = (YES, NO, DNK)

ML = "ml"
CL = "cl"
PAIR_LABELS = (ML, CL)

# Answers with error probability above this carry anti-information (they
# contradict the constraints more often than chance) and are rejected.
MAX_EPSILON = 2.0 / 3.0

# Global floor applied to probabilities before taking logs.
PROB_FLOOR = 1e-12


class NumericalError(RuntimeError):
    """A computation produced non-finite intermediates."""


def safe_log(p: np.ndarray | float) -> np.ndarray | float:
    """log with the global probability floor applied first."""
    return np.log(np.maximum(p, PROB_FLOOR))


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Instance matrix with optional ground-truth cluster ids.

    ``labels``, when present, holds one cluster id per instance (any distinct
    integers). ``standardized`` asserts that every column is z-scored (or was
    constant and is now all zeros).
    """

    instances: np.ndarray
    labels: np.ndarray | None = None
    standardized: bool = False

    def __post_init__(self):
        x = np.array(self.instances, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"instances must be a non-empty 2-D matrix, got shape {x.shape}")
        if not np.isfinite(x).all():
            raise ValueError("instances contain non-finite values")
        x.setflags(write=False)
        object.__setattr__(self, "instances", x)
        if self.labels is not None:
            y = np.array(self.labels, dtype=int)
            if y.shape != (x.shape[0],):
                raise ValueError("labels must hold exactly one cluster id per instance")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)
        if self.standardized:
            mean = x.mean(axis=0)
            std = x.std(axis=0)
            ok = ((np.abs(mean) < 1e-8) & (np.abs(std - 1.0) < 1e-8)) | (std < 1e-8)
            if not ok.all():
                raise ValueError("standardized flag set but columns are not z-scored")

    @property
    def n(self) -> int:
        return self.instances.shape[0]

    @property
    def dim(self) -> int:
        return self.instances.shape[1]

    @cached_property
    def augmented(self) -> np.ndarray:
        """Instances with a trailing all-ones bias column, shape (n, dim + 1)."""
        out = np.hstack([self.instances, np.ones((self.n, 1))])
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class Weights:
    """Per-cluster logistic weights; the last column of each row is the bias."""

    matrix: np.ndarray

    def __post_init__(self):
        w = np.array(self.matrix, dtype=float)
        if w.ndim != 2 or w.shape[0] < 2 or w.shape[1] < 2:
            raise ValueError(f"weight matrix must be (k >= 2) x (dim + 1), got shape {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("weights contain non-finite values")
        w.setflags(write=False)
        object.__setattr__(self, "matrix", w)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1] - 1

    def feature_part(self) -> np.ndarray:
        """Copy of the matrix with the bias column zeroed (what the L2 penalty sees)."""
        out = self.matrix.copy()
        out[:, -1] = 0.0
        return out


@dataclass(frozen=True)
class TripletConstraint:
    """One answered query 'is instance t1 more similar to t2 than to t3?'.

    Indices are 0-based in memory; the text file format is 1-based.
    """

    t1: int
    t2: int
    t3: int
    label: str

    def __post_init__(self):
        for name in ("t1", "t2", "t3"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.label not in TRIPLET_LABELS:
            raise ValueError(f"triplet label must be one of {TRIPLET_LABELS}, got {self.label!r}")
        if len({self.t1, self.t2, self.t3}) != 3:
            raise ValueError(f"triplet indices must be pairwise distinct, got {self.indices}")
        if min(self.indices) < 0:
            raise ValueError(f"triplet indices must be non-negative, got {self.indices}")

    @property
    def indices(self) -> tuple[int, int, int]:
        return (self.t1, self.t2, self.t3)


@dataclass(frozen=True)
class ConstraintSet:
    """A batch of relative constraints over a dataset of ``n`` instances.

    ``constrained_index`` is the sorted, deduplicated union of all triplet
    members; ``unconstrained_index`` is its complement in 0..n-1.
    """

    triplets: tuple[TripletConstraint, ...]
    n: int
    constrained_index: np.ndarray = field(init=False, repr=False, compare=False)
    unconstrained_index: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "triplets", tuple(self.triplets))
        if self.n < 1:
            raise ValueError("constraint set needs a positive instance count")
        members = set()
        for t in self.triplets:
            if max(t.indices) >= self.n:
                raise ValueError(f"triplet {t.indices} references an instance >= n={self.n}")
            members.update(t.indices)
        constrained = _frozen_array(sorted(members), dtype=int)
        mask = np.ones(self.n, dtype=bool)
        mask[constrained] = False
        object.__setattr__(self, "constrained_index", constrained)
        object.__setattr__(self, "unconstrained_index", _frozen_array(np.flatnonzero(mask), dtype=int))

    @property
    def m(self) -> int:
        return len(self.triplets)

    def labels(self) -> list[str]:
        return [t.label for t in self.triplets]


@dataclass(frozen=True)
class HyperParams:
    """Model and solver settings.

    ``epsilon`` is the assumed probability of a wrong answer (0 makes the
    constraints hard); ``tau`` scales the entropy terms; ``lam`` the L2
    penalty; ``balance`` switches from separation-only to the
    separation-plus-balance objective.
    """

    k: int
    epsilon: float = 0.05
    tau: float = 1.0
    lam: float = 2.0 ** -6
    balance: bool = False
    max_em_iters: int = 100
    max_mean_field_iters: int = 100
    max_mstep_iters: int = 100
    mstep_warm_cap: int = 20
    em_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"need at least 2 clusters, got k={self.k}")
        if not 0.0 <= self.epsilon <= MAX_EPSILON:
            raise ValueError(
                f"epsilon must lie in [0, 2/3], got {self.epsilon}; larger values "
                "make the answers contradict the constraints"
            )
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        for name in ("max_em_iters", "max_mean_field_iters", "max_mstep_iters", "mstep_warm_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.em_tol <= 0:
            raise ValueError(f"em_tol must be positive, got {self.em_tol}")

    @property
    def alpha(self) -> float:
        """Odds multiplier for constraint compatibility; > 1 when epsilon < 2/3."""
        if self.epsilon == 0.0:
            return float("inf")
        if self.epsilon == MAX_EPSILON:
            # rounding in 2(1-e)/e would leave a stray 2e-16 above 1
            return 1.0
        return 2.0 * (1.0 - self.epsilon) / self.epsilon

    def with_(self, **changes) -> "HyperParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class SoftmaxCache:
    """Row-stochastic class probabilities for every instance plus their mean."""

    probs: np.ndarray
    marginal: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        marg = np.array(self.marginal, dtype=float)
        if p.ndim != 2 or marg.shape != (p.shape[1],):
            raise ValueError("probs must be (n, k) with a length-k marginal")
        if ((p < 0) | (p > 1)).any():
            raise ValueError("probabilities must lie in [0, 1]")
        if np.abs(p.sum(axis=1) - 1.0).max() > 1e-9 or abs(marg.sum() - 1.0) > 1e-9:
            raise ValueError("probability rows and marginal must sum to 1")
        p.setflags(write=False)
        marg.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "marginal", marg)

    @property
    def k(self) -> int:
        return self.probs.shape[1]


def softmax(weights: Weights, dataset: Dataset) -> SoftmaxCache:
    """Class probabilities p_ik = exp(w_k . x_i) / sum_k' exp(w_k' . x_i).

    Scores are shifted by their per-row maximum before exponentiation, so any
    constant offset per instance cancels exactly.
    """
    if weights.matrix.shape[1] != dataset.dim + 1:
        raise ValueError(
            f"weights expect {weights.dim} features but the data has {dataset.dim}"
        )
    scores = dataset.augmented @ weights.matrix.T
    scores -= scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=1, keepdims=True)
    resid = np.abs(p.sum(axis=1) - 1.0).max()
    if not resid < 1e-12:
        raise NumericalError(f"softmax rows failed to normalize (residual {resid:g})")
    return SoftmaxCache(probs=p, marginal=p.mean(axis=0))


def consistent_label(y1: int, y2: int, y3: int) -> str:
    """The noise-free answer to 'is 1 more similar to 2 than to 3?' given cluster ids."""
    if y1 == y2 and y1 != y3:
        return YES
    if y1 == y3 and y1 != y2:
        return NO
    return DNK


def constraint_label_prob(y_triplet, label: str, epsilon: float) -> float:
    """P(observed answer | true cluster ids) under the uniform-error relaxation.

    The label consistent with the ids has probability 1 - epsilon; the two
    erroneous labels share the remainder equally.
    """
    if label not in TRIPLET_LABELS:
        raise ValueError(f"unknown label {label!r}")
    if not 0.0 <= epsilon <= MAX_EPSILON:
        raise ValueError(f"epsilon must lie in [0, 2/3], got {epsilon}")
    y1, y2, y3 = y_triplet
    if label == consistent_label(y1, y2, y3):
        return 1.0 - epsilon
    return epsilon / 2.0
