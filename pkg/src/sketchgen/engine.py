"""Sketch generation: iterative select-and-expand, sampled, greedy or by beam search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .metrics import render
from .models import STOP, SketchState, nonterminals_to_holes

DEFAULT_MAX_STEPS = 64


class Decoder(NamedTuple):
    """Any selector/expansion pair; a ModelBundle also satisfies this shape."""

    selector: object
    expansion: object


@dataclass
class Step:
    state: SketchState
    position: int | None  # None means the stop action
    expansion: tuple | None
    logp_s: float
    logp_e: float = 0.0
    sig: tuple | None = None
    options: list = field(default_factory=list)
    probs: list = field(default_factory=list)
    feats: list = field(default_factory=list)

    @property
    def choice_index(self) -> int:
        return self.options.index(self.position)


@dataclass
class GenerationTrace:
    steps: list[Step]
    final: SketchState

    @property
    def sketch(self) -> list:
        return nonterminals_to_holes(self.final)

    @property
    def logprob(self) -> float:
        return sum(s.logp_s + s.logp_e for s in self.steps)


def _argmax(probs: list[float]) -> int:
    best = 0
    for j in range(1, len(probs)):
        if probs[j] > probs[best]:
            best = j
    return best


def generate(models, x0: SketchState, rng=None, max_steps: int = DEFAULT_MAX_STEPS, greedy: bool = False):
    """Run the select/expand loop from ``x0``; returns (sketch, trace).

    With ``greedy`` the most probable position and expansion are taken at each
    step, otherwise both are sampled from ``rng``.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    sel, exp = models.selector, models.expansion
    x = x0
    steps: list[Step] = []
    for _ in range(max_steps):
        options, probs, feats = sel.dist(x, exp)
        j = _argmax(probs) if greedy else rng.choices(range(len(options)), weights=probs)[0]
        chosen = options[j]
        logp_s = math.log(probs[j])
        if chosen is STOP:
            steps.append(Step(x, None, None, logp_s, 0.0, None, options, probs, feats))
            break
        sig = x.signatures()[chosen]
        d = exp.dist(x.items[chosen].name, sig)
        e, logp_e = d.top(1)[0] if greedy else d.sample(rng)
        steps.append(Step(x, chosen, e, logp_s, logp_e, sig, options, probs, feats))
        x = x.expand(chosen, e, logp_e)
    trace = GenerationTrace(steps, x)
    return trace.sketch, trace


def greedy_decode(models, x0: SketchState, max_steps: int = DEFAULT_MAX_STEPS):
    return generate(models, x0, None, max_steps, greedy=True)


@dataclass(slots=True)
class _Cand:
    state: SketchState
    score: float
    done: bool
    steps: int

    def key(self) -> tuple:
        # finished candidates compare by sketch: every leftover symbol is a hole
        if self.done:
            return tuple(s if type(s) is str else "\x00" for s in self.state.items)
        return tuple(s if type(s) is str else "\x00" + s.name for s in self.state.items)


def beam_search(
    models,
    x0: SketchState,
    k: int = 5,
    n: int | None = 1,
    m: int | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    dedupe: bool = True,
) -> list[tuple[list, float]]:
    """Two-step beam search: top-m positions from the selector, top-n expansions each.

    ``n`` or ``m`` of None means unlimited. Finished candidates keep their score.
    With ``dedupe`` candidates that reach an identical state are merged,
    keeping the best-scoring path. Returns up to k (sketch, logprob) pairs, best first.
    """
    if k < 1 or (n is not None and n < 1) or (m is not None and m < 1):
        raise ValueError("k, n and m must be >= 1")
    sel, exp = models.selector, models.expansion
    beam = [_Cand(x0, 0.0, False, 0)]

    def rank(c: _Cand):
        return (-c.score, c.steps, c.key())

    for _ in range(max_steps):
        if all(c.done for c in beam):
            break
        nxt: list[_Cand] = []
        for c in beam:
            if c.done:
                nxt.append(c)
                continue
            options, probs, _ = sel.dist(c.state, exp)
            order = sorted(range(len(options)), key=lambda j: -probs[j])
            if m is not None:
                order = order[:m]
            sigs = None
            for j in order:
                if probs[j] <= 0.0:
                    continue
                ps = math.log(probs[j])
                pos = options[j]
                if pos is STOP:
                    nxt.append(_Cand(c.state, c.score + ps, True, c.steps + 1))
                    continue
                if sigs is None:
                    sigs = c.state.signatures()
                d = exp.dist(c.state.items[pos].name, sigs[pos])
                for e, pe in d.top(n):
                    nxt.append(_Cand(c.state.expand(pos, e, pe), c.score + ps + pe, False, c.steps + 1))
        if dedupe:
            best: dict = {}
            for c in nxt:
                key = (c.done, c.key())
                if key not in best or rank(c) < rank(best[key]):
                    best[key] = c
            nxt = list(best.values())
        nxt.sort(key=rank)
        beam = nxt[:k]

    beam.sort(key=rank)
    return [(nonterminals_to_holes(c.state), c.score) for c in beam]


def format_trace(trace: GenerationTrace) -> list[str]:
    """One line per state with the selected position bracketed, then the final sketch."""
    lines = []
    for t, s in enumerate(trace.steps):
        parts = []
        for i, item in enumerate(s.state.items):
            txt = item if type(item) is str else f"<{item.name}>"
            parts.append(f"[{txt}]" if i == s.position else txt)
        if s.position is None:
            action = "i=STOP"
        else:
            action = f"i={s.position} -> " + " ".join(
                e if type(e) is str else f"<{e.name}>" for e in s.expansion
            )
        lines.append(f"x({t}): {' '.join(parts)}    {action}")
    lines.append("sketch: " + render(trace.sketch))
    return lines

