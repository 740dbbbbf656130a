import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from oracles import language
from sketchgen.grammar import (
    GrammarError,
    apply_step,
    flatten,
    literal,
    nonterminal,
    parse_grammar,
    replay_leftmost,
    sample_derivation,
)
from sketchgen.corpus import FileSampler, CorpusConfig, weights_for
from sketchgen.syntax import EarleyParser


def test_minimal_grammar():
    g = parse_grammar('start S\nS -> "a"')
    assert g.start == nonterminal("S")
    assert len(g.productions) == 1
    p = g.productions[0]
    assert p.lhs == nonterminal("S") and p.rhs == (literal("a"),)


def test_minilang_roundtrip(minilang):
    text = minilang.to_text()
    again = parse_grammar(text)
    assert again.to_text() == text
    assert again.start.name == "Statement"
    assert set(again.token_classes) == {"IDENT", "NUMBER", "STRING"}


def test_production_order_kept():
    g = parse_grammar('start S\nS -> "b" | "a"\n    | "c"\n')
    assert [p.rhs[0].name for p in g.productions] == ["b", "a", "c"]


def test_undefined_nonterminal():
    with pytest.raises(GrammarError, match="undefined nonterminal T"):
        parse_grammar("start S\nS -> T\n")


@pytest.mark.parametrize(
    "text, needle",
    [
        ('start S\nS -> "a"\nS => "b"\n', "line 3"),
        ('token A /a/\ntoken A /b/\nstart S\nS -> A\n', "duplicate token class A"),
        ('S -> "a"\n', "missing start"),
        ('start S\nS -> "a" | \n', "empty alternative"),
    ],
)
def test_load_errors(text, needle):
    with pytest.raises(GrammarError) as info:
        parse_grammar(text)
    assert needle in str(info.value)


def test_unreachable_is_warning():
    with pytest.warns(UserWarning, match="unreachable"):
        g = parse_grammar('start S\nS -> "a"\nU -> "b"\n')
    assert "U" in g.rules


def test_flatten_inlines_single_literal():
    g = parse_grammar('start S\nS -> "x" NotEqualOp "y" | "z"\nNotEqualOp -> "!="\n')
    f = flatten(g)
    assert "NotEqualOp" not in f.rules
    assert [tuple(s.name for s in p.rhs) for p in f.rules["S"]] == [("x", "!=", "y"), ("z",)]


def test_flatten_noop():
    g = parse_grammar('start S\nS -> A A | "a"\nA -> "b" | "c"\n')
    assert flatten(g).to_text() == g.to_text()


def test_flatten_chain():
    g = parse_grammar('start S\nS -> A B\nA -> "x" C\nC -> "y"\nB -> "u" | "v"\n')
    f = flatten(g)
    assert f.to_text().splitlines()[-2:] == ['S -> "x" "y" B', 'B -> "u" | "v"']
    assert language(g, 8) == language(f, 8) == {("x", "y", "u"), ("x", "y", "v")}


def test_flatten_cycle():
    g = parse_grammar('start S\nS -> A | "s"\nA -> B\nB -> A\n')
    with pytest.raises(GrammarError, match="flattening cycle"):
        flatten(g)


def test_flatten_keeps_language(toy_grammar):
    f = flatten(toy_grammar)
    assert language(toy_grammar, 8) == language(f, 8)
    assert flatten(f).to_text() == f.to_text()
    for name, prods in f.rules.items():
        assert name == f.start.name or len(prods) > 1


def test_flatten_minilang_idempotent(minilang, flat):
    assert flatten(flat).to_text() == flat.to_text()
    assert language(minilang, 5) == language(flat, 5)


def test_sample_trivial(rng):
    g = parse_grammar('start S\nS -> "a"')
    toks, trace = sample_derivation(g, None, {}, rng)
    assert toks == ["a"]
    assert len(trace) == 1


def test_sample_weights(rng):
    g = parse_grammar('start S\nS -> "a" | "b"')
    wa, wb = g.rules["S"]
    counts = Counter(sample_derivation(g, {wa: 1000.0, wb: 1.0}, {}, rng)[0][0] for _ in range(10000))
    assert 0.998 <= counts["a"] / 10000 <= 1.0


def test_sample_replays_and_parses(minilang):
    sampler = FileSampler(minilang, CorpusConfig(seed=7))
    parser = EarleyParser(minilang)
    weights = weights_for(minilang)
    for seed in range(1000):
        r = random.Random(seed)
        toks, trace = sample_derivation(minilang, weights, sampler.pools(r), r)
        replayed, _ = replay_leftmost(minilang.start, [c for _, _, c in trace])
        assert replayed == toks
        assert parser.parse_strings(toks, minilang.start).leaves() == toks
        # each recorded state rewrites into the next one
        for (state, pos, choice), nxt in zip(trace, trace[1:] + [(tuple(toks), None, None)]):
            assert apply_step(state, pos, choice) == nxt[0]


def test_sample_deterministic(minilang):
    pools = FileSampler(minilang, CorpusConfig()).pools(random.Random(0))
    a = sample_derivation(minilang, None, pools, random.Random(9))
    b = sample_derivation(minilang, None, pools, random.Random(9))
    assert a == b


def test_sample_too_deep(rng):
    g = parse_grammar('start S\nS -> "(" S ")" | "(" S ")"\n    | "a"\n')
    w = {p: (1.0 if p.rhs[0].name == "a" else 1000.0) for p in g.productions}
    with pytest.raises(GrammarError, match="derivation too deep"):
        sample_derivation(g, w, {}, rng, depth_cap=3, max_tries=5)


def test_sample_needs_pools(rng):
    g = parse_grammar("token ID /[a-z]+/\nstart S\nS -> ID\n")
    with pytest.raises(GrammarError, match="empty lexeme pool"):
        sample_derivation(g, None, {}, rng)


_names = st.sampled_from(["A", "B", "C", "D"])
_lits = st.sampled_from(['"a"', '"b"', '"c"'])


@st.composite
def random_grammars(draw):
    nts = ["S"] + draw(st.lists(_names, min_size=1, max_size=4, unique=True))
    lines = ["start S"]
    for nt in nts:
        alts = draw(st.lists(st.lists(st.one_of(_lits, st.sampled_from(nts)), min_size=1, max_size=3), min_size=1, max_size=3))
        if all(any(s in nts for s in a) for a in alts):
            alts.append([draw(_lits)])  # keep every nonterminal productive
        lines.append(f"{nt} -> " + " | ".join(" ".join(a) for a in alts))
    return "\n".join(lines) + "\n"


@settings(max_examples=60, deadline=None)
@given(random_grammars())
def test_flatten_property(text):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = parse_grammar(text)
        assert parse_grammar(g.to_text()).to_text() == g.to_text()
    try:
        f = flatten(g)
    except GrammarError as exc:
        assert "flattening cycle" in str(exc)
        return
    assert language(g, 6) == language(f, 6)
    assert flatten(f).to_text() == f.to_text()
