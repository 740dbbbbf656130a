"""Deliberately naive reference implementations used to cross-check the package."""

from __future__ import annotations

import itertools
import math

from sketchgen.grammar import Grammar, Symbol
from sketchgen.metrics import HOLE
from sketchgen.models import STOP, SketchState, nonterminals_to_holes


def brute_matches(sketch, gt) -> bool:
    """Try every way of giving each hole one or more tokens."""
    holes = sum(1 for s in sketch if s is HOLE)
    fixed = [s for s in sketch if s is not HOLE]
    spare = len(gt) - len(fixed)
    if holes == 0:
        return list(sketch) == list(gt)
    if spare < holes:
        return False
    # compositions of `spare` into `holes` positive parts
    for cuts in itertools.combinations(range(1, spare), holes - 1):
        sizes = [b - a for a, b in zip((0,) + cuts, cuts + (spare,))]
        out, k = [], 0
        for s in sketch:
            if s is HOLE:
                out.extend(["<fill>"] * sizes[k])
                k += 1
            else:
                out.append(s)
        if all(o == "<fill>" or o == t for o, t in zip(out, gt)):
            return True
    return False


def _ngram_list(seq, n):
    return [tuple(seq[i : i + n]) for i in range(len(seq) - n + 1)]


def naive_rouge_n(pred, gt, n) -> float:
    if not pred and not gt:
        return 1.0
    pg, gg = _ngram_list(pred, n), _ngram_list(gt, n)
    if not pg or not gg:
        # too short for n-grams: only identical sequences get credit
        return 1.0 if list(pred) == list(gt) else 0.0
    remaining = list(gg)
    hit = 0
    for g in pg:
        if g in remaining:
            remaining.remove(g)
            hit += 1
    if hit == 0:
        return 0.0
    p, r = hit / len(pg), hit / len(gg)
    return 2 * p * r / (p + r)


def _is_subseq(a, b) -> bool:
    it = iter(b)
    return all(any(x == y for y in it) for x in a)


def brute_lcs(a, b) -> int:
    """Longest subsequence of ``a`` that is also one of ``b``, by trying all subsets."""
    for size in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), size):
            if _is_subseq([a[i] for i in idx], b):
                return size
    return 0


def naive_rouge_l(pred, gt) -> float:
    if not pred and not gt:
        return 1.0
    if not pred or not gt:
        return 0.0
    l = brute_lcs(pred, gt)
    if l == 0:
        return 0.0
    p, r = l / len(pred), l / len(gt)
    return 2 * p * r / (p + r)


def language(g: Grammar, max_len: int) -> set[tuple[str, ...]]:
    """All terminal strings of length <= max_len, by breadth-first leftmost rewriting.

    Token classes count as terminals named after the class.
    """
    out = set()
    frontier = {(g.start,)}
    seen = set()
    while frontier:
        nxt = set()
        for form in frontier:
            if form in seen:
                continue
            seen.add(form)
            pos = next((i for i, s in enumerate(form) if isinstance(s, Symbol) and s.is_nonterminal), None)
            if pos is None:
                out.add(tuple(s.name if isinstance(s, Symbol) else s for s in form))
                continue
            for p in g.rules[form[pos].name]:
                new = form[:pos] + tuple(s.name if s.is_literal else s for s in p.rhs) + form[pos + 1 :]
                if len(new) <= max_len:
                    nxt.add(new)
        frontier = nxt
    return out


def enumerate_outcomes(models, x0: SketchState, max_steps: int) -> dict[tuple, float]:
    """Best log-probability of every finished sketch, over all selector/expansion paths."""
    best: dict[tuple, float] = {}

    def key(sketch):
        return tuple("\x00" if s is HOLE else s for s in sketch)

    def walk(x: SketchState, score: float, steps: int):
        if steps == max_steps:
            return
        options, probs, _ = models.selector.dist(x, models.expansion)
        for pos, p in zip(options, probs):
            if p <= 0:
                continue
            s = score + math.log(p)
            if pos is STOP:
                k = key(nonterminals_to_holes(x))
                best[k] = max(best.get(k, -math.inf), s)
                continue
            d = models.expansion.dist_at(x, pos)
            for e, pe in d.top(None):
                walk(x.expand(pos, e, pe), s + pe, steps + 1)

    walk(x0, 0.0, 0)
    return best
