"""EM orchestration: k-means initialization, alternating inference and weight
updates, bound tracking, and model (de)serialization."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ConstraintSet,
    Dataset,
    HyperParams,
    NumericalError,
    Weights,
    softmax,
)
from .estep import (
    Posterior,
    expected_answer_loglik,
    initial_posterior,
    posterior_entropy,
    run_estep,
)
from .mstep import eval_objective, maximize

MODEL_FORMAT = "relclust-model"
MODEL_VERSION = 1

KMEANS_MAX_ITERS = 100
INIT_RESTARTS = 10


@dataclass(frozen=True)
class KmeansResult:
    """Lloyd's algorithm output; assignments are 0-based cluster indices."""

    centers: np.ndarray
    assignments: np.ndarray
    sse: float


@dataclass(frozen=True)
class ClusteringResult:
    """Fitted weights with derived hard assignments (cluster ids 1..k)."""

    weights: Weights
    assignments: np.ndarray
    lb_trace: tuple[float, ...]
    em_iterations: int
    converged: bool


def _kmeans_pp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
        else:
            centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(x: np.ndarray, k: int, rng: np.random.Generator) -> KmeansResult:
    centers = _kmeans_pp_centers(x, k, rng)
    assign = np.full(x.shape[0], -1)
    for _ in range(KMEANS_MAX_ITERS):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        for j in range(k):
            members = new_assign == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its center
                far = d2[np.arange(len(new_assign)), new_assign].argmax()
                centers[j] = x[far]
                new_assign[far] = j
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    sse = float(d2[np.arange(len(assign)), assign].sum())
    return KmeansResult(centers=centers, assignments=assign, sse=sse)


def kmeans(dataset: Dataset, k: int, restarts: int = INIT_RESTARTS, seed: int = 0) -> KmeansResult:
    """Best-of-`restarts` k-means with k-means++ seeding; minimizes SSE."""
    if k > dataset.n:
        raise ValueError(f"k={k} exceeds the number of instances ({dataset.n})")
    if restarts < 1:
        raise ValueError("need at least one restart")
    rng = np.random.default_rng(seed)
    best: KmeansResult | None = None
    for _ in range(restarts):
        res = _lloyd(dataset.instances, k, rng)
        if best is None or res.sse < best.sse:
            best = res
    return best


def init_weights(dataset: Dataset, k: int, hyper: HyperParams, restarts: int = INIT_RESTARTS) -> Weights:
    """Cluster with k-means, then fit a supervised logistic classifier to the
    cluster labels; the learned weights start the EM iterations."""
    km = kmeans(dataset, k, restarts=restarts, seed=hyper.seed)
    q = np.zeros((dataset.n, k))
    q[np.arange(dataset.n), km.assignments] = 1.0
    posterior = Posterior(q=q, index=np.arange(dataset.n), sweeps=0)
    supervised = hyper.with_(tau=0.0)
    w0 = Weights(np.zeros((k, dataset.dim + 1)))
    return maximize(w0, dataset, None, posterior, supervised)


def lower_bound(
    weights: Weights,
    dataset: Dataset,
    constraints: ConstraintSet,
    posterior: Posterior,
    hyper: HyperParams,
) -> float:
    """Variational bound tracked across EM iterations.

    Adds the expected answer log-likelihood and the posterior entropy (scaled
    by 1/m) to the weight objective. With hard answers (epsilon = 0) the
    answer likelihood is an indicator whose log is dropped, leaving a finite
    surrogate with the same convergence behavior.
    """
    j = eval_objective(weights, dataset, constraints, posterior, hyper).total
    if constraints.m == 0:
        return j
    extra = posterior_entropy(posterior)
    if hyper.epsilon > 0.0:
        extra += expected_answer_loglik(posterior, constraints, hyper.epsilon)
    return j + extra / constraints.m


def fit(dataset: Dataset, constraints: ConstraintSet, hyper: HyperParams) -> ClusteringResult:
    """Alternate inference sweeps and weight ascent until the bound stalls.

    With no constraints and tau = 0 nothing beyond the regularizer would
    drive the weights, so the initialization classifier is returned as-is.
    """
    if constraints.n != dataset.n:
        raise ValueError(
            f"constraints were built for n={constraints.n} but the dataset has n={dataset.n}"
        )
    weights = init_weights(dataset, hyper.k, hyper)
    cache = softmax(weights, dataset)
    if constraints.m == 0 and hyper.tau == 0.0:
        post = initial_posterior(constraints, cache)
        j = eval_objective(weights, dataset, constraints, post, hyper).total
        return ClusteringResult(
            weights=weights,
            assignments=cache.probs.argmax(axis=1) + 1,
            lb_trace=(j,),
            em_iterations=0,
            converged=True,
        )

    post = initial_posterior(constraints, cache)
    trace: list[float] = []
    prev = None
    converged = False
    iters = 0
    for it in range(1, hyper.max_em_iters + 1):
        iters = it
        post = run_estep(constraints, cache, hyper, warm_start=post)
        cap = hyper.mstep_warm_cap if it <= 3 else None
        weights = maximize(weights, dataset, constraints, post, hyper, max_iters=cap)
        cache = softmax(weights, dataset)
        lb = lower_bound(weights, dataset, constraints, post, hyper)
        if not np.isfinite(lb):
            raise NumericalError(f"non-finite bound at EM iteration {it}")
        trace.append(lb)
        if prev is not None and abs(lb - prev) < hyper.em_tol * max(1.0, abs(prev)):
            converged = True
            break
        prev = lb
    return ClusteringResult(
        weights=weights,
        assignments=cache.probs.argmax(axis=1) + 1,
        lb_trace=tuple(trace),
        em_iterations=iters,
        converged=converged,
    )


def predict(weights: Weights, dataset: Dataset) -> np.ndarray:
    """Hard assignments (1..k) from fitted weights."""
    return softmax(weights, dataset).probs.argmax(axis=1) + 1


def dataset_checksum(dataset: Dataset) -> str:
    """Order-sensitive digest of the instance matrix (and labels when present)."""
    h = hashlib.sha256()
    h.update(str(dataset.instances.shape).encode())
    h.update(np.ascontiguousarray(dataset.instances, dtype=np.float64).tobytes())
    if dataset.labels is not None:
        h.update(np.ascontiguousarray(dataset.labels, dtype=np.int64).tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class ModelDocument:
    """A saved model: weights, settings, and the training-data fingerprint."""

    weights: Weights
    hyper: HyperParams
    dataset_checksum: str
    standardized: bool
    em_iterations: int
    converged: bool


def save_model(
    path,
    result: ClusteringResult,
    hyper: HyperParams,
    dataset: Dataset,
    checksum: str | None = None,
) -> None:
    """Write a versioned JSON model document."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "weights": result.weights.matrix.tolist(),
        "hyper": {
            "k": hyper.k,
            "epsilon": hyper.epsilon,
            "tau": hyper.tau,
            "lambda": hyper.lam,
            "balance": hyper.balance,
            "max_em_iters": hyper.max_em_iters,
            "max_mean_field_iters": hyper.max_mean_field_iters,
            "max_mstep_iters": hyper.max_mstep_iters,
            "mstep_warm_cap": hyper.mstep_warm_cap,
            "em_tol": hyper.em_tol,
            "seed": hyper.seed,
        },
        "dataset_checksum": checksum if checksum is not None else dataset_checksum(dataset),
        "standardized": dataset.standardized,
        "em_iterations": result.em_iterations,
        "converged": result.converged,
        "lb_trace": list(result.lb_trace),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_model(path) -> ModelDocument:
    """Read a model document written by :func:`save_model`."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a model document: {path}")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    h = doc["hyper"]
    hyper = HyperParams(
        k=h["k"],
        epsilon=h["epsilon"],
        tau=h["tau"],
        lam=h["lambda"],
        balance=h["balance"],
        max_em_iters=h["max_em_iters"],
        max_mean_field_iters=h["max_mean_field_iters"],
        max_mstep_iters=h["max_mstep_iters"],
        mstep_warm_cap=h["mstep_warm_cap"],
        em_tol=h["em_tol"],
        seed=h["seed"],
    )
    return ModelDocument(
        weights=Weights(np.array(doc["weights"], dtype=float)),
        hyper=hyper,
        dataset_checksum=doc["dataset_checksum"],
        standardized=doc.get("standardized", False),
        em_iterations=doc["em_iterations"],
        converged=doc["converged"],
    )
