"""Closed-form and enumeration-based information content of constraint answers.

All values are mutual information between the (uniformly distributed) cluster
ids of the queried instances and the resulting answer, in nats unless
converted for output.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from itertools import product
from pathlib import Path

from .core import DNK, consistent_label
from .oracle import label_pair

QUERY_TYPES = ("relative", "pairwise", "relative-drop-dnk")

CSV_HEADER = "K,oneRel,twoRel,onePair,threePair,oneRelYN"


def _check_k(k: int) -> None:
    if k < 2:
        raise ValueError(f"need at least 2 clusters, got k={k}")


def dnk_probability(k: int) -> float:
    """Chance a random triplet from balanced clusters draws a don't-know answer."""
    _check_k(k)
    return 1.0 - 2.0 * (k - 1) / k**2


def cl_probability(k: int) -> float:
    """Chance a random pair from balanced clusters draws a cannot-link answer."""
    _check_k(k)
    return 1.0 - 1.0 / k


def relative_mi(k: int) -> float:
    """Information carried by one triplet answer (yes/no/dnk all used)."""
    _check_k(k)
    p_dnk = dnk_probability(k)
    return (
        2.0 * math.log(k)
        - (1.0 - p_dnk) * math.log(k - 1)
        - p_dnk * math.log(k * k - 2 * (k - 1))
    )


def pairwise_mi(k: int) -> float:
    """Information carried by one must-link/cannot-link answer."""
    _check_k(k)
    return math.log(k) - cl_probability(k) * math.log(k - 1)


def relative_yn_mi(k: int) -> float:
    """Information carried by one triplet answer when don't-know is discarded."""
    _check_k(k)
    p_dnk = dnk_probability(k)
    return 2.0 * (1.0 - p_dnk) * math.log(k) - (1.0 - p_dnk) * math.log(k - 1)


def brute_force_mi(k: int, query_type: str) -> float:
    """Exact mutual information by enumerating all equiprobable id assignments.

    Builds the full joint over (id tuple, answer) and evaluates
    I = H(ids) - sum_a P(a) H(ids | a). For "relative-drop-dnk" the
    conditional entropy given a don't-know answer is replaced by the
    unconditional entropy, making those answers carry nothing.
    """
    _check_k(k)
    if query_type not in QUERY_TYPES:
        raise ValueError(f"query_type must be one of {QUERY_TYPES}, got {query_type!r}")
    if query_type == "pairwise":
        arity, answer = 2, label_pair
    else:
        arity, answer = 3, consistent_label

    assignments = list(product(range(k), repeat=arity))
    p_y = 1.0 / len(assignments)
    by_answer: dict[str, int] = {}
    for ids in assignments:
        a = answer(*ids)
        by_answer[a] = by_answer.get(a, 0) + 1

    h_y = arity * math.log(k)
    h_y_given = 0.0
    for a, count in by_answer.items():
        p_a = count * p_y
        # ids are uniform over the `count` assignments producing this answer
        h_cond = math.log(count)
        if query_type == "relative-drop-dnk" and a == DNK:
            h_cond = h_y
        h_y_given += p_a * h_cond
    return h_y - h_y_given


@dataclass(frozen=True)
class MICurve:
    """One row of the information-vs-cluster-count table (nats)."""

    k: int
    p_dnk: float
    p_cl: float
    rel: float
    pair: float
    rel_yn: float

    @property
    def two_rel(self) -> float:
        return 2.0 * self.rel

    @property
    def three_pair(self) -> float:
        return 3.0 * self.pair


def mi_curve(k: int) -> MICurve:
    return MICurve(
        k=k,
        p_dnk=dnk_probability(k),
        p_cl=cl_probability(k),
        rel=relative_mi(k),
        pair=pairwise_mi(k),
        rel_yn=relative_yn_mi(k),
    )


def mi_table(kmax: int, bits: bool = False) -> list[MICurve]:
    """Rows for k = 2..kmax; ``bits`` rescales from nats to bits."""
    if kmax < 2:
        raise ValueError(f"kmax must be >= 2, got {kmax}")
    rows = [mi_curve(k) for k in range(2, kmax + 1)]
    if bits:
        scale = 1.0 / math.log(2)
        rows = [
            MICurve(r.k, r.p_dnk, r.p_cl, r.rel * scale, r.pair * scale, r.rel_yn * scale)
            for r in rows
        ]
    return rows


def format_mi_csv(kmax: int, bits: bool = False) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for r in mi_table(kmax, bits=bits):
        out.write(f"{r.k},{r.rel!r},{r.two_rel!r},{r.pair!r},{r.three_pair!r},{r.rel_yn!r}\n")
    return out.getvalue()


def write_mi_table(path, kmax: int, bits: bool = False) -> None:
    Path(path).write_text(format_mi_csv(kmax, bits=bits), encoding="utf-8")
