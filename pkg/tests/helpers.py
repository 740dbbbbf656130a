"""Small shared utilities: sketch lexing and scripted models for replaying derivations."""

from __future__ import annotations

import itertools
import random

import numpy as np

from sketchgen.grammar import load_builtin
from sketchgen.engine import generate
from sketchgen.metrics import HOLE
from sketchgen.models import STOP, ExpansionDist, SketchState
from sketchgen.syntax import Lexer

_LEXER = Lexer(load_builtin())


def lex(text: str) -> list[str]:
    return [t.text for t in _LEXER.tokenize(text)]


def lex_sketch(text: str) -> list:
    """MiniLang tokens of ``text`` where every ``■`` becomes a hole."""
    out: list = []
    for k, part in enumerate(text.split("■")):
        if k:
            out.append(HOLE)
        out.extend(lex(part))
    return out


def sketch_language(sketch, alphabet, max_len) -> set[tuple]:
    """Every token tuple up to ``max_len`` obtained by filling each hole with 1+ alphabet tokens."""
    fixed = sum(1 for s in sketch if s is not HOLE)
    holes = len(sketch) - fixed
    out = set()
    spare_max = max_len - fixed
    if holes == 0:
        return {tuple(sketch)} if fixed <= max_len else set()
    fills_by_len = {k: list(itertools.product(alphabet, repeat=k)) for k in range(1, spare_max + 1)}
    for total in range(holes, spare_max + 1):
        for cuts in itertools.combinations(range(1, total), holes - 1):
            sizes = [b - a for a, b in zip((0,) + cuts, cuts + (total,))]
            for fills in itertools.product(*(fills_by_len[s] for s in sizes)):
                seq, k = [], 0
                for s in sketch:
                    if s is HOLE:
                        seq.extend(fills[k])
                        k += 1
                    else:
                        seq.append(s)
                out.add(tuple(seq))
    return out


class ScriptedSelector:
    """Picks a fixed sequence of positions (then STOP) with probability one."""

    def __init__(self, script):
        self.script = list(script)

    def dist(self, x, exp):
        if not x.positions():
            return [STOP], [1.0], [[]]
        choice = self.script[x.step] if x.step < len(self.script) else STOP
        options = x.positions() + [STOP]
        return options, [1.0 if o == choice else 0.0 for o in options], [[] for _ in options]


class ScriptedExpansion:
    """Returns the expansion for step t with probability one."""

    def __init__(self, expansions):
        self.expansions = list(expansions)
        self.t = 0

    def dist(self, kind, sig):
        e = self.expansions[self.t]
        self.t += 1
        return ExpansionDist([e], [1.0])


def finite_diff(sel, x, chosen, exp, h=1e-5):
    """Central differences of the selector log-probability of ``chosen`` at ``x``."""
    w0 = sel.weights.copy()
    g = np.zeros_like(w0)
    for j in range(len(w0)):
        for sgn in (1, -1):
            w = w0.copy()
            w[j] += sgn * h
            sel.set_weights(w)
            g[j] += sgn * sel.log_prob(x, chosen, exp)
        g[j] /= 2 * h
    sel.set_weights(w0)
    return g


def random_states(bundle, n, seed):
    """States with at least one open position, visited by sampled generations."""
    rng = random.Random(seed)
    states = []
    while len(states) < n:
        ctx = [rng.choice(["x", "=", "self", ".", "(", ")", "1"]) for _ in range(rng.randint(0, 4))]
        _, trace = generate(bundle, SketchState.initial(bundle.root, ctx), rng, max_steps=rng.randint(1, 12))
        x = trace.final if rng.random() < 0.3 else rng.choice(trace.steps).state
        if x.positions():
            states.append(x)
    return states
