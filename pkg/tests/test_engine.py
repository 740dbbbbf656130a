import math
import random

import numpy as np
import pytest

from helpers import ScriptedExpansion, ScriptedSelector
from oracles import enumerate_outcomes
from sketchgen.engine import Decoder, beam_search, format_trace, generate, greedy_decode
from sketchgen.grammar import Symbol, parse_grammar
from sketchgen.metrics import HOLE, render
from sketchgen.models import ExpansionModel, SelectorModel, SketchState, UniformSelector
from sketchgen.syntax import EarleyParser

EXPR_GRAMMAR = parse_grammar(
    "start Expr\n"
    'Expr -> Expr "*" ParenthesizedExpr | Expr "-" Expr | Identifier "(" ArgList ")" | Identifier\n'
    'ParenthesizedExpr -> "(" Expr ")"\n'
    "ArgList -> Identifier\n"
    'Identifier -> "foo" | "args" | "x"\n'
)


def _expr_replay():
    s = EXPR_GRAMMAR.symbol
    expr, paren, ident, args = s("Expr"), s("ParenthesizedExpr"), s("Identifier"), s("ArgList")
    positions = [2, 4, 5, 7, 7, 9, 9, 2, 2]
    expansions = [
        (expr, "*", paren),
        ("(", expr, ")"),
        (expr, "-", expr),
        (ident, "(", args, ")"),
        ("foo",),
        (ident,),
        ("args",),
        (ident,),
        ("x",),
    ]
    models = Decoder(ScriptedSelector(positions), ScriptedExpansion(expansions))
    return generate(models, SketchState(("r", "=", expr)), greedy=True)


def test_scripted_expression_replay():
    sketch, trace = _expr_replay()
    assert render(sketch) == "r = x * ( ■ - foo ( args ) )"
    assert len(trace.steps) == 10
    assert trace.steps[-1].position is None
    lines = format_trace(trace)
    assert len(lines) == len(trace.steps) + 1
    assert lines[0].startswith("x(0): r = [<Expr>]")
    assert lines[-2].endswith("i=STOP")
    assert lines[-1] == "sketch: r = x * ( ■ - foo ( args ) )"
    assert sum(1 for s in sketch if s is HOLE) == 1


def test_immediate_stop():
    x0 = SketchState(("a", EXPR_GRAMMAR.symbol("Expr")))
    sketch, trace = generate(Decoder(ScriptedSelector([]), ScriptedExpansion([])), x0, greedy=True)
    assert sketch == ["a", HOLE]
    assert len(format_trace(trace)) == 2


def _check_trace(trace, max_steps):
    assert len(trace.steps) <= max_steps
    for st, nxt in zip(trace.steps, trace.steps[1:] + [None]):
        after = nxt.state if nxt is not None else trace.final
        if st.position is None:
            assert after == st.state
            continue
        i = st.position
        assert isinstance(st.state.items[i], Symbol)
        assert after.items == st.state.items[:i] + tuple(st.expansion) + st.state.items[i + 1 :]


def test_sampled_traces(bundle, corpus):
    rng = random.Random(11)
    contexts = [ex.context for ex in corpus["train"]]
    for _ in range(1000):
        ctx = rng.choice(contexts)
        max_steps = rng.randint(1, 30)
        sketch, trace = generate(bundle, SketchState.initial(bundle.root, ctx), rng, max_steps)
        assert all(s is HOLE or isinstance(s, str) for s in sketch)
        _check_trace(trace, max_steps)


def _replay_logprob(models, trace):
    total = 0.0
    for st in trace.steps:
        options, probs, _ = models.selector.dist(st.state, models.expansion)
        total += math.log(probs[options.index(st.position)])
        if st.position is not None:
            d = models.expansion.dist_at(st.state, st.position)
            total += math.log(d.prob(st.expansion))
    return total


def test_score_additivity(bundle, corpus):
    rng = random.Random(4)
    for ex in corpus["valid"][:40]:
        _, trace = generate(bundle, SketchState.initial(bundle.root, ex.context), rng)
        assert trace.logprob == pytest.approx(_replay_logprob(bundle, trace), abs=1e-9)


def test_greedy_equals_unit_beam(bundle, corpus):
    contexts = [ex.context for ex in corpus["train"][::2]][:100]
    for ctx in contexts:
        x0 = SketchState.initial(bundle.root, ctx)
        sketch, trace = greedy_decode(bundle, x0)
        [(bsk, score)] = beam_search(bundle, x0, 1, 1, 1)
        assert bsk == sketch
        assert score == pytest.approx(trace.logprob, abs=1e-9)


def test_beam_contract(bundle, corpus):
    for ex in corpus["valid"][:20]:
        x0 = SketchState.initial(bundle.root, ex.context)
        out = beam_search(bundle, x0, 5)
        assert 1 <= len(out) <= 5
        scores = [s for _, s in out]
        assert scores == sorted(scores, reverse=True)


def test_beam_monotone_in_k(bundle, corpus):
    for ex in corpus["valid"][:25]:
        x0 = SketchState.initial(bundle.root, ex.context)
        best = [beam_search(bundle, x0, k)[0][1] for k in (1, 2, 3, 5, 8)]
        assert all(b >= a - 1e-12 for a, b in zip(best, best[1:]))


def test_beam_bad_args(bundle):
    x0 = SketchState.initial(bundle.root)
    for args in [(0, 1, 1), (1, 0, 1), (1, 1, 0)]:
        with pytest.raises(ValueError):
            beam_search(bundle, x0, *args)
    with pytest.raises(ValueError):
        generate(bundle, x0, random.Random(0), 0)


TOY = parse_grammar(
    'start S\nS -> A "+" B | B\nA -> "a" | "b" | "(" C ")"\nB -> "c" | "d" A\nC -> "e" | "f"\n'
)


def toy_models(seed):
    rng = random.Random(seed)
    exp = ExpansionModel([])
    toks = ["+", "(", ")", "a", "c", "d"]
    for p in TOY.productions:
        items = tuple(s.name if s.is_literal else s for s in p.rhs)
        for _ in range(rng.randint(1, 3)):
            sig = (rng.choice(toks), rng.choice(toks), rng.choice(toks))
            exp.observe(p.lhs.name, sig, items, float(rng.randint(1, 4)))
    sel = SelectorModel(TOY.expandable_kinds())
    sel.set_weights(np.random.default_rng(seed).normal(0, 1.0, len(sel.weights)))
    return Decoder(sel, exp)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_beam_matches_enumeration(seed):
    models = toy_models(seed)
    x0 = SketchState.initial(TOY.start, ["a", "+"])
    oracle = enumerate_outcomes(models, x0, 30)
    assert 0 < len(oracle) <= 500
    got = beam_search(models, x0, 500, None, None, 30)
    keyed = {tuple("\x00" if s is HOLE else s for s in sk): sc for sk, sc in got}
    assert set(keyed) == set(oracle)
    for k, sc in keyed.items():
        assert abs(sc - oracle[k]) <= 1e-9


def test_no_stop_outputs_parse(bundle, flat, corpus):
    parser = EarleyParser(flat)
    models = Decoder(UniformSelector(None), bundle.expansion)
    rng = random.Random(6)
    complete = 0
    for ex in corpus["train"][:200]:
        sketch, _ = generate(models, SketchState.initial(bundle.root, ex.context), rng, 200)
        if HOLE in sketch:
            continue
        complete += 1
        assert parser.parse_strings(sketch, flat.start).leaves() == sketch
    assert complete > 100
