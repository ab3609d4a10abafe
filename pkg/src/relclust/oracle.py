"""Constraint generation from ground-truth labels, optional answer noise,
and the plain-text constraint file format."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    CL,
    DNK,
    MAX_EPSILON,
    ML,
    NO,
    TRIPLET_LABELS,
    YES,
    ConstraintSet,
    Dataset,
    TripletConstraint,
    consistent_label,
)

SAMPLE_MODES = ("keep-dnk", "drop-dnk")


@dataclass(frozen=True)
class PairConstraint:
    """A must-link or cannot-link judgment over two instances."""

    b1: int
    b2: int
    label: str

    def __post_init__(self):
        object.__setattr__(self, "b1", int(self.b1))
        object.__setattr__(self, "b2", int(self.b2))
        if self.label not in (ML, CL):
            raise ValueError(f"pair label must be '{ML}' or '{CL}', got {self.label!r}")
        if self.b1 == self.b2:
            raise ValueError(f"pair indices must differ, got ({self.b1}, {self.b2})")
        if min(self.b1, self.b2) < 0:
            raise ValueError("pair indices must be non-negative")


def label_triplet(y1: int, y2: int, y3: int) -> str:
    """Answer a triplet query from cluster ids: yes / no / dnk."""
    return consistent_label(y1, y2, y3)


def label_pair(y1: int, y2: int) -> str:
    """Answer a pair query from cluster ids: must-link when equal, else cannot-link."""
    return ML if y1 == y2 else CL


def sample_distinct_tuples(pool: np.ndarray, count: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """`count` uniformly random tuples of `size` distinct entries from `pool`.

    Vectorized draw-and-shift sampling; every ordered tuple of distinct pool
    entries is equally likely. Returns an array of shape (count, size).
    """
    pool = np.asarray(pool, dtype=int)
    p = len(pool)
    if p < size:
        raise ValueError(f"need at least {size} candidate instances, got {p}")
    if count == 0:
        return np.empty((0, size), dtype=int)
    if size == 2:
        i = rng.integers(0, p, count)
        j = rng.integers(0, p - 1, count)
        j += j >= i
        return pool[np.column_stack([i, j])]
    if size == 3:
        i = rng.integers(0, p, count)
        j = rng.integers(0, p - 1, count)
        j += j >= i
        k = rng.integers(0, p - 2, count)
        lo = np.minimum(i, j)
        hi = np.maximum(i, j)
        k += k >= lo
        k += k >= hi
        return pool[np.column_stack([i, j, k])]
    raise ValueError(f"unsupported tuple size {size}")


def _noisy_labels(true_labels: list[str], noise: float, rng: np.random.Generator) -> list[str]:
    if noise == 0.0:
        return list(true_labels)
    flip = rng.random(len(true_labels)) < noise
    which = rng.integers(0, 2, len(true_labels))
    out = []
    for lab, f, w in zip(true_labels, flip, which):
        if f:
            others = [x for x in TRIPLET_LABELS if x != lab]
            lab = others[w]
        out.append(lab)
    return out


def sample_constraints(
    dataset: Dataset,
    count: int,
    mode: str = "keep-dnk",
    noise: float = 0.0,
    seed: int = 0,
    pool=None,
) -> ConstraintSet:
    """Draw `count` random triplets and answer them from the dataset labels.

    mode "keep-dnk" returns the raw draw; "drop-dnk" keeps resampling until
    `count` yes/no answers have been collected. With probability `noise` the
    true answer is replaced by one of the two wrong ones (each equally
    likely). `pool` restricts the indices triplets are drawn from.
    """
    if dataset.labels is None:
        raise ValueError("constraint sampling needs a dataset with ground-truth labels")
    if mode not in SAMPLE_MODES:
        raise ValueError(f"mode must be one of {SAMPLE_MODES}, got {mode!r}")
    if not 0.0 <= noise < MAX_EPSILON:
        raise ValueError(f"noise must lie in [0, 2/3), got {noise}")
    rng = np.random.default_rng(seed)
    idx_pool = np.arange(dataset.n) if pool is None else np.asarray(pool, dtype=int)
    y = dataset.labels

    kept: list[TripletConstraint] = []
    while len(kept) < count:
        batch = max(count - len(kept), 16)
        tuples = sample_distinct_tuples(idx_pool, batch, 3, rng)
        truth = [label_triplet(y[a], y[b], y[c]) for a, b, c in tuples]
        observed = _noisy_labels(truth, noise, rng)
        for (a, b, c), lab in zip(tuples, observed):
            if mode == "drop-dnk" and lab == DNK:
                continue
            kept.append(TripletConstraint(a, b, c, lab))
            if len(kept) == count:
                break
    return ConstraintSet(tuple(kept), n=dataset.n)


def filter_yes_no(constraints: ConstraintSet) -> ConstraintSet:
    """Subset with the don't-know constraints removed."""
    return ConstraintSet(
        tuple(t for t in constraints.triplets if t.label != DNK), n=constraints.n
    )


def derive_pairs(constraints: ConstraintSet) -> list[PairConstraint]:
    """One must-link and one cannot-link pair from every yes/no triplet.

    Don't-know triplets pin down no pair relation and contribute nothing.
    """
    out: list[PairConstraint] = []
    for t in constraints.triplets:
        if t.label == YES:
            out.append(PairConstraint(t.t1, t.t2, ML))
            out.append(PairConstraint(t.t1, t.t3, CL))
        elif t.label == NO:
            out.append(PairConstraint(t.t1, t.t3, ML))
            out.append(PairConstraint(t.t1, t.t2, CL))
    return out


def boundary_pool(dataset: Dataset, fraction: float) -> np.ndarray:
    """Indices of the `fraction` of instances nearest to a rival cluster's centroid.

    Distances are measured to the closest centroid of any other ground-truth
    cluster, so low values mark points near decision boundaries.
    """
    if dataset.labels is None:
        raise ValueError("boundary selection needs ground-truth labels")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    y = dataset.labels
    ids = np.unique(y)
    centroids = np.vstack([dataset.instances[y == c].mean(axis=0) for c in ids])
    d2 = ((dataset.instances[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    rival = np.where(y[:, None] == ids[None, :], np.inf, d2).min(axis=1)
    keep = max(3, int(round(fraction * dataset.n)))
    order = np.argsort(rival, kind="stable")
    return np.sort(order[:keep])


# --- constraint file format: `t1 t2 t3 label` per line, 1-based, '#' comments ---


def format_constraints(triplets) -> str:
    lines = [f"{t.t1 + 1} {t.t2 + 1} {t.t3 + 1} {t.label}" for t in triplets]
    return "\n".join(lines) + ("\n" if lines else "")


def write_constraints(path, constraints: ConstraintSet | list | tuple) -> None:
    """Write constraints as `t1 t2 t3 label` lines with 1-based indices."""
    triplets = constraints.triplets if isinstance(constraints, ConstraintSet) else constraints
    Path(path).write_text(format_constraints(triplets), encoding="utf-8")


def parse_constraints(text: str, n: int) -> ConstraintSet:
    triplets = []
    for ln, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {ln}: expected 't1 t2 t3 label', got {raw.rstrip()!r}")
        try:
            a, b, c = (int(p) for p in parts[:3])
        except ValueError:
            raise ValueError(f"line {ln}: indices must be integers, got {raw.rstrip()!r}") from None
        label = parts[3].lower()
        if label not in TRIPLET_LABELS:
            raise ValueError(f"line {ln}: unknown label {parts[3]!r}")
        if min(a, b, c) < 1:
            raise ValueError(f"line {ln}: file indices are 1-based, got {raw.rstrip()!r}")
        triplets.append(TripletConstraint(a - 1, b - 1, c - 1, label))
    return ConstraintSet(tuple(triplets), n=n)


def read_constraints(path, n: int) -> ConstraintSet:
    """Read a constraint file; `n` is the instance count of the target dataset."""
    return parse_constraints(Path(path).read_text(encoding="utf-8"), n=n)
