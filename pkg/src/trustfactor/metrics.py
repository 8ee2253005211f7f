"""Accuracy metrics (MAE, RMSE) and ranking metrics (P/R@k, AP, NDCG@k)."""

from __future__ import annotations

import math
from dataclasses import dataclass


def mae(pairs) -> float:
    """Mean absolute error over (actual, predicted) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty prediction set")
    return sum(abs(a - p) for a, p in pairs) / len(pairs)


def rmse(pairs) -> float:
    """Root mean squared error over (actual, predicted) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty prediction set")
    return math.sqrt(sum((a - p) ** 2 for a, p in pairs) / len(pairs))


@dataclass(frozen=True)
class RankedList:
    """Ordered candidates reduced to binary relevance flags.

    `total_relevant` counts relevant candidates over the full pool; it
    defaults to the sum of flags, and must be given explicitly when the list
    is truncated.
    """

    flags: tuple
    total_relevant: int = None

    def __post_init__(self):
        flags = tuple(int(f) for f in self.flags)
        if any(f not in (0, 1) for f in flags):
            raise ValueError("relevance flags must be binary")
        object.__setattr__(self, "flags", flags)
        if self.total_relevant is None:
            object.__setattr__(self, "total_relevant", sum(flags))
        elif self.total_relevant < sum(flags):
            raise ValueError("total_relevant smaller than observed relevant count")


def precision_recall_at_k(ranked: RankedList, k: int):
    """(precision@k, recall@k); recall is None when nothing is relevant."""
    if k < 1:
        raise ValueError("k must be at least 1")
    hits = sum(ranked.flags[:k])
    precision = hits / k
    if ranked.total_relevant == 0:
        return precision, None
    return precision, hits / ranked.total_relevant


def average_precision(ranked: RankedList) -> float:
    """Sum of precision at each relevant position, over the relevant count."""
    if ranked.total_relevant == 0:
        raise ValueError("average precision undefined with zero relevant candidates")
    hits = 0
    acc = 0.0
    for pos, flag in enumerate(ranked.flags, start=1):
        if flag:
            hits += 1
            acc += hits / pos
    return acc / ranked.total_relevant


def mean_average_precision(ranked_lists) -> float:
    """Mean AP over lists, skipping those with zero relevant candidates."""
    values = [average_precision(r) for r in ranked_lists if r.total_relevant > 0]
    if not values:
        raise ValueError("no list has a relevant candidate")
    return sum(values) / len(values)


def ndcg_at_k(ranked: RankedList, k: int) -> float:
    """Gain (2^r - 1) with natural-log position discount, normalized by the
    ideal reordering; 0 when the ideal DCG is 0."""
    if k < 1:
        raise ValueError("k must be at least 1")
    dcg = sum(
        (2.0 ** ranked.flags[i] - 1.0) / math.log(i + 2)
        for i in range(min(k, len(ranked.flags)))
    )
    ideal_hits = min(k, ranked.total_relevant)
    idcg = sum(1.0 / math.log(i + 2) for i in range(ideal_hits))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg
