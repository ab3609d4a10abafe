"""M-step objective, analytic gradient, and limited-memory quasi-Newton ascent."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import (
    ConstraintSet,
    Dataset,
    HyperParams,
    NumericalError,
    Weights,
    safe_log,
)
from .estep import Posterior

GRAD_TOL = 1e-5
LBFGS_HISTORY = 10
ARMIJO_C = 1e-4


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """The four ingredients of the weight objective and their combination.

    total = expected_log_lik - lam * regularizer
            + tau * ((balance_entropy if balance else 0) - separation_entropy)
    """

    expected_log_lik: float
    regularizer: float
    separation_entropy: float
    balance_entropy: float
    total: float


def _target(constraints: ConstraintSet | None, posterior: Posterior, n: int):
    """Resolve which rows feed the likelihood term and its normalizer.

    With constraints the posterior must align with the constrained instances
    and the normalizer is the constraint count. Without constraints the
    posterior is treated as a supervised soft-label target normalized by its
    own row count, and every instance counts as unconstrained-covered.
    """
    if constraints is not None:
        if not np.array_equal(posterior.index, constraints.constrained_index):
            raise ValueError("posterior rows must align with the constrained instances")
        return constraints.constrained_index, constraints.m, constraints.unconstrained_index
    idx = posterior.index
    mask = np.ones(n, dtype=bool)
    mask[idx] = False
    return idx, len(idx), np.flatnonzero(mask)


def _softmax_matrix(wmat: np.ndarray, x_aug: np.ndarray) -> np.ndarray:
    scores = x_aug @ wmat.T
    scores -= scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=1, keepdims=True)
    return p


def _evaluate(
    wmat: np.ndarray,
    x_aug: np.ndarray,
    q: np.ndarray,
    q_rows: np.ndarray,
    m_norm: int,
    u_rows: np.ndarray,
    hyper: HyperParams,
    need_grad: bool,
):
    """Objective breakdown and (optionally) its gradient, on raw arrays."""
    n = x_aug.shape[0]
    p = _softmax_matrix(wmat, x_aug)
    logp = safe_log(p)
    w_feat = wmat.copy()
    w_feat[:, -1] = 0.0

    if m_norm > 0 and len(q_rows):
        ell = float((q * logp[q_rows]).sum()) / m_norm
    else:
        ell = 0.0
    reg = float((w_feat**2).sum())
    if len(u_rows):
        sep = float(-(p[u_rows] * logp[u_rows]).sum()) / len(u_rows)
    else:
        sep = 0.0
    marginal = p.mean(axis=0)
    log_marg = safe_log(marginal)
    bal = float(-(marginal * log_marg).sum())
    total = ell - hyper.lam * reg + hyper.tau * ((bal if hyper.balance else 0.0) - sep)
    breakdown = ObjectiveBreakdown(ell, reg, sep, bal, total)
    if not need_grad:
        return breakdown, None

    g = np.zeros_like(wmat)
    if m_norm > 0 and len(q_rows):
        g += (q - p[q_rows]).T @ x_aug[q_rows] / m_norm
    g -= 2.0 * hyper.lam * w_feat
    if hyper.tau > 0 and len(u_rows):
        s = p[u_rows] * logp[u_rows]
        row = s.sum(axis=1)
        g += hyper.tau / len(u_rows) * (s - p[u_rows] * row[:, None]).T @ x_aug[u_rows]
    if hyper.tau > 0 and hyper.balance:
        t = p * log_marg[None, :]
        row = t.sum(axis=1)
        g -= hyper.tau / n * (t - p * row[:, None]).T @ x_aug
    return breakdown, g


def eval_objective(
    weights: Weights,
    dataset: Dataset,
    constraints: ConstraintSet | None,
    posterior: Posterior,
    hyper: HyperParams,
) -> ObjectiveBreakdown:
    """Evaluate every objective term at the given weights."""
    q_rows, m_norm, u_rows = _target(constraints, posterior, dataset.n)
    breakdown, _ = _evaluate(
        weights.matrix, dataset.augmented, posterior.q, q_rows, m_norm, u_rows, hyper, False
    )
    return breakdown


def gradient(
    weights: Weights,
    dataset: Dataset,
    constraints: ConstraintSet | None,
    posterior: Posterior,
    hyper: HyperParams,
) -> np.ndarray:
    """Ascent gradient of the objective with respect to the weight matrix."""
    q_rows, m_norm, u_rows = _target(constraints, posterior, dataset.n)
    _, g = _evaluate(
        weights.matrix, dataset.augmented, posterior.q, q_rows, m_norm, u_rows, hyper, True
    )
    return g


def _two_loop(g: np.ndarray, pairs: deque) -> np.ndarray:
    """Approximate H^-1 g from stored (s, y, rho) curvature pairs."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return q


def maximize(
    weights_init: Weights,
    dataset: Dataset,
    constraints: ConstraintSet | None,
    posterior: Posterior,
    hyper: HyperParams,
    max_iters: int | None = None,
) -> Weights:
    """Limited-memory quasi-Newton ascent with backtracking line search.

    Stops when the gradient's largest entry drops below 1e-5 or after the
    iteration cap, and returns the best iterate seen (never worse than the
    starting point).
    """
    cap = hyper.max_mstep_iters if max_iters is None else max_iters
    shape = weights_init.matrix.shape
    q_rows, m_norm, u_rows = _target(constraints, posterior, dataset.n)
    x_aug = dataset.augmented
    q = posterior.q

    def fun(vec: np.ndarray):
        breakdown, g = _evaluate(vec.reshape(shape), x_aug, q, q_rows, m_norm, u_rows, hyper, True)
        return breakdown.total, g.ravel()

    x = weights_init.matrix.ravel().copy()
    j, g = fun(x)
    if not (np.isfinite(j) and np.isfinite(g).all()):
        raise NumericalError(
            f"non-finite objective at the initial weights (J={j!r}, "
            f"|grad|max={np.abs(g).max() if g is not None else 'n/a'!r})"
        )
    best_x, best_j = x.copy(), j
    # minimize f = -J internally; fmin gradient is -g
    gmin = -g
    pairs: deque = deque(maxlen=LBFGS_HISTORY)
    for it in range(cap):
        if np.abs(gmin).max() < GRAD_TOL:
            break
        d = -_two_loop(gmin, pairs)
        gd = gmin @ d
        if not np.isfinite(gd) or gd >= 0:
            d = -gmin
            gd = gmin @ d
        step = 1.0 if pairs else min(1.0, 1.0 / max(np.abs(gmin).sum(), 1e-12))
        x_new = f_new = g_new = None
        while step >= 1e-20:
            cand = x + step * d
            j_cand, g_cand = fun(cand)
            if np.isfinite(j_cand) and -j_cand <= -j + ARMIJO_C * step * gd:
                x_new, f_new, g_new = cand, j_cand, g_cand
                break
            step *= 0.5
        if x_new is None:
            break
        s = x_new - x
        y = -g_new - gmin
        if s @ y > 1e-10:
            pairs.append((s, y, 1.0 / (s @ y)))
        x, j, gmin = x_new, f_new, -g_new
        if j > best_j:
            best_x, best_j = x.copy(), j
    return Weights(best_x.reshape(shape))
