"""Mean-field variational inference over the constrained instances.

The coordinate sweeps run over a CSR-encoded membership table; a numba-jitted
kernel is used when numba is importable (set RELCLUST_NO_NUMBA=1 to force the
pure-numpy fallback, which computes the same updates).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    DNK,
    NO,
    YES,
    ConstraintSet,
    HyperParams,
    SoftmaxCache,
    TripletConstraint,
    safe_log,
)

MEAN_FIELD_TOL = 1e-6

_LABEL_CODE = {YES: 0, NO: 1, DNK: 2}

try:  # pragma: no cover - exercised indirectly through the dispatch test
    if os.environ.get("RELCLUST_NO_NUMBA"):
        raise ImportError("numba disabled by environment")
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@dataclass(frozen=True)
class Posterior:
    """Fully-factorized distribution over the cluster ids of selected instances.

    Row r of ``q`` is the categorical distribution for instance ``index[r]``;
    ``index`` is sorted ascending. ``sweeps`` counts coordinate sweeps applied.
    """

    q: np.ndarray
    index: np.ndarray
    sweeps: int = 0

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        idx = np.array(self.index, dtype=int)
        if q.ndim != 2 or idx.shape != (q.shape[0],):
            raise ValueError("q must be (|index|, k) aligned with index")
        if len(idx) and (np.diff(idx) <= 0).any():
            raise ValueError("index must be strictly increasing")
        if len(idx):
            if ((q < 0) | (q > 1)).any():
                raise ValueError("posterior entries must lie in [0, 1]")
            if np.abs(q.sum(axis=1) - 1.0).max() > 1e-9:
                raise ValueError("posterior rows must sum to 1")
        q.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "index", idx)

    @property
    def k(self) -> int:
        return self.q.shape[1]


def initial_posterior(constraints: ConstraintSet, cache: SoftmaxCache) -> Posterior:
    """Posterior initialized at the current class probabilities."""
    idx = constraints.constrained_index
    return Posterior(q=cache.probs[idx], index=idx, sweeps=0)


def _row_of(posterior: Posterior) -> dict[int, int]:
    return {int(i): r for r, i in enumerate(posterior.index)}


@dataclass(frozen=True)
class _SweepPlan:
    """Per-row membership table in CSR form.

    Entry e (in ``ptr[r]:ptr[r+1]``) says row r sits at ``slot[e]`` of a
    constraint labeled ``label[e]`` whose other two members (in triplet order)
    live at rows ``row_a[e]`` and ``row_b[e]``. ``triplet_rows`` maps each
    constraint to the posterior rows of its three members.
    """

    ptr: np.ndarray
    label: np.ndarray
    slot: np.ndarray
    row_a: np.ndarray
    row_b: np.ndarray
    triplet_rows: np.ndarray
    label_codes: np.ndarray


def _build_plan(constraints: ConstraintSet, index: np.ndarray) -> _SweepPlan:
    rows = {int(i): r for r, i in enumerate(index)}
    per_row: list[list[tuple[int, int, int, int]]] = [[] for _ in range(len(index))]
    triplet_rows = np.zeros((constraints.m, 3), dtype=np.int64)
    label_codes = np.zeros(constraints.m, dtype=np.int8)
    for t_i, t in enumerate(constraints.triplets):
        code = _LABEL_CODE[t.label]
        r1, r2, r3 = rows[t.t1], rows[t.t2], rows[t.t3]
        triplet_rows[t_i] = (r1, r2, r3)
        label_codes[t_i] = code
        per_row[r1].append((code, 0, r2, r3))
        per_row[r2].append((code, 1, r1, r3))
        per_row[r3].append((code, 2, r1, r2))
    counts = [len(entries) for entries in per_row]
    ptr = np.zeros(len(index) + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    flat = [e for entries in per_row for e in entries]
    label = np.array([e[0] for e in flat], dtype=np.int8)
    slot = np.array([e[1] for e in flat], dtype=np.int8)
    row_a = np.array([e[2] for e in flat], dtype=np.int64)
    row_b = np.array([e[3] for e in flat], dtype=np.int64)
    return _SweepPlan(ptr, label, slot, row_a, row_b, triplet_rows, label_codes)


def compat_vector(label: str, slot: int, qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """Probability, per cluster id of the focal member, that the observed answer
    is the noise-free one, under the factorized posterior of the other two
    members (``qa``/``qb`` in triplet order)."""
    if slot == 0:
        yes = qa * (1.0 - qb)
        no = (1.0 - qa) * qb
    elif slot == 1:
        yes = qa * (1.0 - qb)
        no = qa @ qb - qa * qb
    elif slot == 2:
        yes = qa @ qb - qa * qb
        no = qa * (1.0 - qb)
    else:
        raise ValueError(f"slot must be 0, 1 or 2, got {slot}")
    if label == YES:
        return yes
    if label == NO:
        return no
    if label == DNK:
        return 1.0 - yes - no
    raise ValueError(f"unknown label {label!r}")


def compat(constraint: TripletConstraint, position: int, k: int, posterior: Posterior) -> float:
    """Compatibility of assigning cluster ``k`` to the triplet member at
    ``position`` (0, 1 or 2) with the constraint's observed answer."""
    rows = _row_of(posterior)
    r1, r2, r3 = (rows[i] for i in constraint.indices)
    others = {0: (r2, r3), 1: (r1, r3), 2: (r1, r2)}[position]
    qa, qb = posterior.q[others[0]], posterior.q[others[1]]
    return float(compat_vector(constraint.label, position, qa, qb)[k])


def _compat_fill(f, q, ptr_lo, ptr_hi, label, slot, row_a, row_b):
    """Accumulate the compatibility sum for one row into ``f`` (numpy path)."""
    f[:] = 0.0
    for e in range(ptr_lo, ptr_hi):
        qa = q[row_a[e]]
        qb = q[row_b[e]]
        s = slot[e]
        if s == 0:
            yes = qa * (1.0 - qb)
            no = (1.0 - qa) * qb
        elif s == 1:
            yes = qa * (1.0 - qb)
            no = qa @ qb - qa * qb
        else:
            yes = qa @ qb - qa * qb
            no = qa * (1.0 - qb)
        lab = label[e]
        if lab == 0:
            f += yes
        elif lab == 1:
            f += no
        else:
            f += 1.0 - yes - no


def _soft_sweep_np(q, p, log_p, ptr, label, slot, row_a, row_b, log_alpha):
    k = q.shape[1]
    f = np.empty(k)
    delta = 0.0
    for r in range(q.shape[0]):
        if log_alpha == 0.0:
            new = p[r]
        else:
            _compat_fill(f, q, ptr[r], ptr[r + 1], label, slot, row_a, row_b)
            logw = f * log_alpha + log_p[r]
            logw -= logw.max()
            new = np.exp(logw)
            new /= new.sum()
        delta = max(delta, float(np.abs(new - q[r]).max()))
        q[r] = new
    return delta


def _hard_sweep_np(q, p, ptr, label, slot, row_a, row_b):
    k = q.shape[1]
    f = np.empty(k)
    delta = 0.0
    for r in range(q.shape[0]):
        _compat_fill(f, q, ptr[r], ptr[r + 1], label, slot, row_a, row_b)
        w = p[r] * (f == f.max())
        new = w / w.sum()
        delta = max(delta, float(np.abs(new - q[r]).max()))
        q[r] = new
    return delta


@_njit(cache=True)
def _soft_sweep_nb(q, p, log_p, ptr, label, slot, row_a, row_b, log_alpha):  # pragma: no cover
    n_rows, k = q.shape
    f = np.empty(k)
    yes = np.empty(k)
    no = np.empty(k)
    delta = 0.0
    for r in range(n_rows):
        if log_alpha == 0.0:
            for kk in range(k):
                d = abs(p[r, kk] - q[r, kk])
                if d > delta:
                    delta = d
                q[r, kk] = p[r, kk]
            continue
        for kk in range(k):
            f[kk] = 0.0
        for e in range(ptr[r], ptr[r + 1]):
            a = row_a[e]
            b = row_b[e]
            s = slot[e]
            if s == 0:
                for kk in range(k):
                    yes[kk] = q[a, kk] * (1.0 - q[b, kk])
                    no[kk] = (1.0 - q[a, kk]) * q[b, kk]
            else:
                dot = 0.0
                for kk in range(k):
                    dot += q[a, kk] * q[b, kk]
                if s == 1:
                    for kk in range(k):
                        yes[kk] = q[a, kk] * (1.0 - q[b, kk])
                        no[kk] = dot - q[a, kk] * q[b, kk]
                else:
                    for kk in range(k):
                        yes[kk] = dot - q[a, kk] * q[b, kk]
                        no[kk] = q[a, kk] * (1.0 - q[b, kk])
            lab = label[e]
            for kk in range(k):
                if lab == 0:
                    f[kk] += yes[kk]
                elif lab == 1:
                    f[kk] += no[kk]
                else:
                    f[kk] += 1.0 - yes[kk] - no[kk]
        top = -np.inf
        for kk in range(k):
            f[kk] = f[kk] * log_alpha + log_p[r, kk]
            if f[kk] > top:
                top = f[kk]
        total = 0.0
        for kk in range(k):
            f[kk] = np.exp(f[kk] - top)
            total += f[kk]
        for kk in range(k):
            new = f[kk] / total
            d = abs(new - q[r, kk])
            if d > delta:
                delta = d
            q[r, kk] = new
    return delta


@_njit(cache=True)
def _hard_sweep_nb(q, p, ptr, label, slot, row_a, row_b):  # pragma: no cover
    n_rows, k = q.shape
    f = np.empty(k)
    yes = np.empty(k)
    no = np.empty(k)
    delta = 0.0
    for r in range(n_rows):
        for kk in range(k):
            f[kk] = 0.0
        for e in range(ptr[r], ptr[r + 1]):
            a = row_a[e]
            b = row_b[e]
            s = slot[e]
            if s == 0:
                for kk in range(k):
                    yes[kk] = q[a, kk] * (1.0 - q[b, kk])
                    no[kk] = (1.0 - q[a, kk]) * q[b, kk]
            else:
                dot = 0.0
                for kk in range(k):
                    dot += q[a, kk] * q[b, kk]
                if s == 1:
                    for kk in range(k):
                        yes[kk] = q[a, kk] * (1.0 - q[b, kk])
                        no[kk] = dot - q[a, kk] * q[b, kk]
                else:
                    for kk in range(k):
                        yes[kk] = dot - q[a, kk] * q[b, kk]
                        no[kk] = q[a, kk] * (1.0 - q[b, kk])
            lab = label[e]
            for kk in range(k):
                if lab == 0:
                    f[kk] += yes[kk]
                elif lab == 1:
                    f[kk] += no[kk]
                else:
                    f[kk] += 1.0 - yes[kk] - no[kk]
        top = f[0]
        for kk in range(1, k):
            if f[kk] > top:
                top = f[kk]
        total = 0.0
        for kk in range(k):
            if f[kk] == top:
                f[kk] = p[r, kk]
            else:
                f[kk] = 0.0
            total += f[kk]
        for kk in range(k):
            new = f[kk] / total
            d = abs(new - q[r, kk])
            if d > delta:
                delta = d
            q[r, kk] = new
    return delta


def _soft_sweep(q, p, log_p, plan: _SweepPlan, log_alpha: float) -> float:
    fn = _soft_sweep_nb if _HAVE_NUMBA else _soft_sweep_np
    return fn(q, p, log_p, plan.ptr, plan.label, plan.slot, plan.row_a, plan.row_b, log_alpha)


def _hard_sweep(q, p, plan: _SweepPlan) -> float:
    fn = _hard_sweep_nb if _HAVE_NUMBA else _hard_sweep_np
    return fn(q, p, plan.ptr, plan.label, plan.slot, plan.row_a, plan.row_b)


def mean_field_update(
    posterior: Posterior,
    constraints: ConstraintSet,
    cache: SoftmaxCache,
    hyper: HyperParams,
) -> Posterior:
    """One coordinate-ascent sweep in ascending instance order.

    Each row becomes proportional to alpha^F(k) * p(k), where F(k) sums the
    compatibilities of the constraints the instance participates in. With
    epsilon = 2/3 (alpha = 1) rows are set to the class probabilities exactly;
    epsilon = 0 routes to the hard update.
    """
    if hyper.epsilon == 0.0:
        return hard_update(posterior, constraints, cache)
    if len(posterior.index) == 0:
        return replace(posterior, sweeps=posterior.sweeps + 1)
    plan = _build_plan(constraints, posterior.index)
    p = cache.probs[posterior.index]
    q = posterior.q.copy()
    q.setflags(write=True)
    _soft_sweep(q, p, safe_log(p), plan, np.log(hyper.alpha))
    return Posterior(q=q, index=posterior.index, sweeps=posterior.sweeps + 1)


def hard_update(
    posterior: Posterior, constraints: ConstraintSet, cache: SoftmaxCache
) -> Posterior:
    """Zero-error-limit sweep: mass is restricted to the cluster ids with
    maximal compatibility (ties keep every maximizer) and renormalized from
    the class probabilities."""
    if len(posterior.index) == 0:
        return replace(posterior, sweeps=posterior.sweeps + 1)
    plan = _build_plan(constraints, posterior.index)
    p = np.maximum(cache.probs[posterior.index], 1e-300)
    q = posterior.q.copy()
    q.setflags(write=True)
    _hard_sweep(q, p, plan)
    return Posterior(q=q, index=posterior.index, sweeps=posterior.sweeps + 1)


def run_estep(
    constraints: ConstraintSet,
    cache: SoftmaxCache,
    hyper: HyperParams,
    warm_start: Posterior | None = None,
) -> Posterior:
    """Sweep until the largest entry change falls below tolerance or the sweep
    cap is hit. Warm-start with the previous EM iteration's posterior."""
    post = warm_start if warm_start is not None else initial_posterior(constraints, cache)
    if len(post.index) == 0:
        return replace(post, sweeps=post.sweeps + 1)
    plan = _build_plan(constraints, post.index)
    hard = hyper.epsilon == 0.0
    p = cache.probs[post.index]
    if hard:
        p = np.maximum(p, 1e-300)
    log_p = safe_log(p)
    log_alpha = 0.0 if hard else np.log(hyper.alpha)
    q = post.q.copy()
    q.setflags(write=True)
    sweeps = 0
    for _ in range(hyper.max_mean_field_iters):
        if hard:
            delta = _hard_sweep(q, p, plan)
        else:
            delta = _soft_sweep(q, p, log_p, plan, log_alpha)
        sweeps += 1
        if delta < MEAN_FIELD_TOL:
            break
    return Posterior(q=q, index=post.index, sweeps=post.sweeps + sweeps)


def consistent_mass(posterior: Posterior, constraint: TripletConstraint) -> float:
    """Probability, under the factorized posterior, that the triplet's cluster
    ids are consistent with its observed answer."""
    rows = _row_of(posterior)
    q1, q2, q3 = (posterior.q[rows[i]] for i in constraint.indices)
    yes = float(np.sum(q1 * q2 * (1.0 - q3)))
    no = float(np.sum(q1 * q3 * (1.0 - q2)))
    if constraint.label == YES:
        return yes
    if constraint.label == NO:
        return no
    return 1.0 - yes - no


def _consistent_mass_batch(posterior: Posterior, constraints: ConstraintSet) -> np.ndarray:
    plan = _build_plan(constraints, posterior.index)
    q = posterior.q
    q1 = q[plan.triplet_rows[:, 0]]
    q2 = q[plan.triplet_rows[:, 1]]
    q3 = q[plan.triplet_rows[:, 2]]
    yes = (q1 * q2 * (1.0 - q3)).sum(axis=1)
    no = (q1 * q3 * (1.0 - q2)).sum(axis=1)
    dnk = 1.0 - yes - no
    return np.select(
        [plan.label_codes == 0, plan.label_codes == 1], [yes, no], default=dnk
    )


def expected_answer_loglik(
    posterior: Posterior, constraints: ConstraintSet, epsilon: float
) -> float:
    """Sum over constraints of the expected log answer probability.

    Requires epsilon > 0; the hard limit puts -inf on any violated constraint.
    """
    if epsilon <= 0.0:
        raise ValueError("expected answer log-likelihood needs epsilon > 0")
    if constraints.m == 0:
        return 0.0
    log_err = np.log(epsilon / 2.0)
    log_alpha = np.log(2.0 * (1.0 - epsilon) / epsilon)
    mass = _consistent_mass_batch(posterior, constraints)
    return float(constraints.m * log_err + log_alpha * mass.sum())


def posterior_entropy(posterior: Posterior) -> float:
    """Entropy of the factorized posterior (nats)."""
    q = posterior.q
    return float(-(q * safe_log(q)).sum())


def mean_field_objective(
    posterior: Posterior,
    constraints: ConstraintSet,
    cache: SoftmaxCache,
    hyper: HyperParams,
) -> float:
    """The functional each sweep ascends: expected answer log-likelihood plus
    expected class log-probability plus posterior entropy."""
    prior = float((posterior.q * safe_log(cache.probs[posterior.index])).sum())
    return (
        expected_answer_loglik(posterior, constraints, hyper.epsilon)
        + prior
        + posterior_entropy(posterior)
    )
