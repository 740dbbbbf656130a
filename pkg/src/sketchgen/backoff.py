"""Shared pieces of the interpolated absolute-discounting count models."""

from __future__ import annotations

import heapq
import itertools
from typing import Callable, Sequence


class SortedRow:
    """One conditional count row with its discounted counts sorted high to low.

    Fractional counts are discounted by ``min(discount, c)`` so that every row
    still normalizes once the held-out mass is handed to the lower order.
    """

    __slots__ = ("counts", "discount", "total", "lam", "words", "vals", "cum")

    def __init__(self, counts: dict | None, discount: float):
        counts = counts or {}
        self.counts = counts
        self.discount = discount
        self.total = sum(counts.values())
        if self.total > 0:
            self.lam = sum(min(discount, c) for c in counts.values()) / self.total
        else:
            self.lam = 1.0
        items = sorted(((w, c - min(discount, c)) for w, c in counts.items()), key=lambda t: (-t[1], t[0]))
        self.words = [w for w, _ in items]
        self.vals = [a for _, a in items]
        self.cum = list(itertools.accumulate(self.vals))

    def adj(self, w) -> float:
        c = self.counts.get(w)
        return 0.0 if c is None else c - min(self.discount, c)

    @property
    def weight(self) -> float:
        """Multiplier turning a discounted count into probability mass."""
        return 1.0 / self.total if self.total > 0 else 0.0


def top_n(
    rows: Sequence[tuple[Sequence, Sequence[float], float]],
    base: tuple[Sequence, Sequence[float], float],
    prob: Callable[[object], float],
    n: int,
    base_const: float = 0.0,
) -> list[tuple[object, float]]:
    """Exact top-n of a weighted sum of sorted terms (threshold algorithm).

    ``rows`` and ``base`` are (words, values sorted descending, weight); the
    base term covers every word, and an unseen word's probability is at most
    the weighted values at the current depth plus ``base_const``.
    """
    words0, vals0, w0 = base
    seen: dict = {}

    def visit(w):
        if w not in seen:
            seen[w] = prob(w)

    best: list = []
    for i in range(len(words0)):
        visit(words0[i])
        bound = w0 * vals0[i] + base_const
        for words, vals, wt in rows:
            if i < len(words):
                visit(words[i])
                bound += wt * vals[i]
        if len(seen) >= n:
            best = heapq.nsmallest(n, seen.items(), key=lambda kv: (-kv[1], kv[0]))
            if best[-1][1] >= bound:
                return best
    return heapq.nsmallest(n, seen.items(), key=lambda kv: (-kv[1], kv[0]))
