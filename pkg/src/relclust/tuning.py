"""Cross-validated grid search over the entropy and ridge coefficients."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ConstraintSet, Dataset, HyperParams
from .em import fit
from .metrics import constraint_accuracy

log = logging.getLogger(__name__)

DEFAULT_TAUS = (0.5, 1.0, 1.5)
DEFAULT_LAMBDAS = (2.0**-10, 2.0**-8, 2.0**-6, 2.0**-4, 2.0**-2)
N_FOLDS = 5

WORKERS_ENV = "RELCLUST_THREADS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        return max(1, int(raw))
    return min(os.cpu_count() or 1, 8)


@dataclass(frozen=True)
class TuneResult:
    """Chosen settings plus the per-fold accuracy table behind the choice."""

    hyper: HyperParams
    records: tuple[tuple[float, float, int, float], ...]  # (tau, lam, fold, accuracy)
    warned: bool = False

    def mean_accuracy(self, tau: float, lam: float) -> float:
        vals = [r[3] for r in self.records if r[0] == tau and r[1] == lam]
        return float(np.mean(vals)) if vals else float("nan")


def stratified_folds(constraints: ConstraintSet, n_folds: int, seed: int) -> list[np.ndarray]:
    """Disjoint, covering folds of triplet positions, stratified by answer label."""
    rng = np.random.default_rng(seed)
    labels = constraints.labels()
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    offset = 0
    for lab in ("yes", "no", "dnk"):
        members = [i for i, l in enumerate(labels) if l == lab]
        rng.shuffle(members)
        for pos, idx in enumerate(members):
            folds[(offset + pos) % n_folds].append(idx)
        offset += len(members)
    return [np.array(sorted(f), dtype=int) for f in folds]


def _split(constraints: ConstraintSet, fold: np.ndarray):
    held = set(int(i) for i in fold)
    train = tuple(t for i, t in enumerate(constraints.triplets) if i not in held)
    val = tuple(constraints.triplets[i] for i in fold)
    return (
        ConstraintSet(train, n=constraints.n),
        ConstraintSet(val, n=constraints.n),
    )


def _score_job(args):
    dataset, train, val, hyper, yn_only = args
    result = fit(dataset, train, hyper)
    return constraint_accuracy(result.assignments, val, yn_only=yn_only)


def tune(
    dataset: Dataset,
    constraints: ConstraintSet,
    hyper_base: HyperParams,
    taus=DEFAULT_TAUS,
    lambdas=DEFAULT_LAMBDAS,
    n_folds: int = N_FOLDS,
    yn_only: bool = False,
    workers: int | None = None,
) -> TuneResult:
    """Pick (tau, lambda) by averaged constraint prediction accuracy.

    Constraints (not instances) are split into stratified folds; each grid
    point is fit on four folds and scored on the fifth. Ties prefer the
    smallest lambda, then the smallest tau. Fewer than ``n_folds`` constraints
    make cross-validation meaningless: the base settings come back unchanged
    with ``warned`` set.
    """
    taus = tuple(taus)
    lambdas = tuple(lambdas)
    if constraints.m < n_folds:
        log.warning(
            "only %d constraints for %d folds; keeping base settings", constraints.m, n_folds
        )
        return TuneResult(hyper=hyper_base, records=(), warned=True)
    folds = stratified_folds(constraints, n_folds, hyper_base.seed)
    splits = [_split(constraints, f) for f in folds]

    jobs = []
    keys = []
    for tau in taus:
        for lam in lambdas:
            hyper = hyper_base.with_(tau=tau, lam=lam)
            for fold_id, (train, val) in enumerate(splits):
                jobs.append((dataset, train, val, hyper, yn_only))
                keys.append((tau, lam, fold_id))

    n_workers = default_workers() if workers is None else max(1, workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            scores = list(pool.map(_score_job, jobs, chunksize=1))
    else:
        scores = [_score_job(j) for j in jobs]

    records = tuple(
        (tau, lam, fold_id, float(acc)) for (tau, lam, fold_id), acc in zip(keys, scores)
    )
    candidates = []
    for tau in taus:
        for lam in lambdas:
            mean = float(np.mean([r[3] for r in records if r[0] == tau and r[1] == lam]))
            candidates.append((-mean, lam, tau))
    candidates.sort()
    _, best_lam, best_tau = candidates[0]
    return TuneResult(hyper=hyper_base.with_(tau=best_tau, lam=best_lam), records=records)


def format_report_csv(result: TuneResult) -> str:
    lines = ["tau,lambda,fold,accuracy"]
    for tau, lam, fold_id, acc in result.records:
        lines.append(f"{tau!r},{lam!r},{fold_id},{acc!r}")
    return "\n".join(lines) + "\n"
