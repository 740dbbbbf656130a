import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st

from helpers import lex, lex_sketch
from oracles import brute_matches, naive_rouge_l, naive_rouge_n
from sketchgen.metrics import (
    HOLE,
    erase_holes,
    lcs_length,
    matches,
    n_tokens,
    regex_acc,
    render,
    reward,
    rouge_f1,
    sketch_from_tokens,
    sketch_to_json,
    to_matcher,
)

GT = lex('ap.add_argument("--experimental", action="store_true")')

SCORED_SKETCHES = [
    ('ap.add_argument(■, action="store_true")', 0.9),
    ("ap.add_argument(■, action=■)", 0.8),
    ("ap.add_argument(■, ■)", 0.6),
    ("ap.add_argument(■, required=■)", 0.0),
    ('ap.add_argument(■, action="store_false")', 0.0),
]


def test_ground_truth_token_count():
    assert n_tokens(GT) == 10


@pytest.mark.parametrize("text, score", SCORED_SKETCHES)
def test_scored_sketch_table(text, score):
    assert regex_acc(lex_sketch(text), GT) == score


def test_counts():
    assert n_tokens([HOLE]) == 0
    assert n_tokens(["ap", ".", "add_argument", "(", HOLE, ",", HOLE, ")"]) == 6


def test_matcher_examples():
    assert to_matcher(["a", "b"])(["a", "b"])
    assert not to_matcher(["a", "b"])(["a", "b", "c"])
    m = to_matcher([HOLE])
    assert m(["x"]) and m(["x", "y", "z"]) and not m([])
    assert to_matcher(["ap", ".", "add_argument", "(", HOLE, ")"])(["ap", ".", "add_argument", "(", "x", ")"])
    assert matches(to_matcher(lex_sketch('ap.add_argument(■, action="store_false")')), GT) == 0


def test_two_holes_against_oracle():
    gt = ["a", "b", "a", "c", "b"]
    for sk in itertools.product(["a", "b", "c", HOLE], repeat=4):
        if sum(1 for s in sk if s is HOLE) == 2:
            assert matches(to_matcher(sk), gt) == int(brute_matches(sk, gt))


def test_empty_ground_truth():
    with pytest.raises(ValueError, match="empty ground truth"):
        regex_acc(["a"], [])


def test_empty_sketch_scores_zero():
    assert regex_acc([], ["a"]) == 0.0


def test_erase_holes():
    assert erase_holes([HOLE]) == []
    assert erase_holes(["a", "b"]) == ["a", "b"]
    assert erase_holes(["a", HOLE, "b"]) == ["a", "b"]


def test_rouge_examples():
    for v in ("R1", "R2", "RL"):
        assert rouge_f1(["a", "b", "c"], ["a", "b", "c"], v) == 1.0
        assert rouge_f1([], [], v) == 1.0
        assert rouge_f1([], ["a"], v) == 0.0
    assert rouge_f1(["a", "b", "c"], ["a", "c"], "RL") == pytest.approx(0.8, abs=1e-15)
    assert lcs_length(["a", "b", "c"], ["a", "c"]) == 2


def test_reward_examples():
    assert reward(GT, GT) == 1.0
    assert reward([HOLE], GT) == 0.0
    sk = lex_sketch(SCORED_SKETCHES[0][0])
    expected = 0.5 * (0.9 + naive_rouge_l(erase_holes(sk), GT))
    assert reward(sk, GT) == pytest.approx(expected, abs=1e-15)
    assert reward(sk, GT, "regex") == 0.9
    assert reward(sk, GT, "rouge") == pytest.approx(naive_rouge_l(erase_holes(sk), GT), abs=1e-15)


def test_reward_kind_checked():
    with pytest.raises(ValueError):
        reward(GT, GT, "bleu")


def test_rouge_oracle_random():
    r = random.Random(3)
    for _ in range(200):
        a = [r.choice("abcd") for _ in range(r.randint(0, 9))]
        b = [r.choice("abcd") for _ in range(r.randint(0, 9))]
        assert abs(rouge_f1(a, b, "R1") - naive_rouge_n(a, b, 1)) <= 1e-12
        assert abs(rouge_f1(a, b, "R2") - naive_rouge_n(a, b, 2)) <= 1e-12
        assert abs(rouge_f1(a, b, "RL") - naive_rouge_l(a, b)) <= 1e-12


def test_json_helpers():
    sk = ["a", HOLE]
    assert sketch_to_json(sk) == ["a", "■"]
    assert sketch_from_tokens(["a", "■"]) == sk == sketch_from_tokens(["a", None])
    assert render(sk) == "a ■"


tokens = st.lists(st.sampled_from("abc"), min_size=1, max_size=12)


@st.composite
def sketch_and_gt(draw):
    """A ground truth and a sketch made by holing up to three runs and maybe editing a token."""
    gt = draw(tokens)
    sk: list = list(gt)
    for _ in range(draw(st.integers(0, 3))):
        i = draw(st.integers(0, len(sk) - 1))
        j = draw(st.integers(i, len(sk) - 1))
        sk[i : j + 1] = [HOLE]
    if draw(st.booleans()):
        i = draw(st.integers(0, len(sk) - 1))
        sk[i] = draw(st.sampled_from(["a", "b", "c", HOLE]))
    assume(sum(1 for s in sk if s is HOLE) <= 3)
    return sk, gt


@settings(max_examples=400, deadline=None)
@given(sketch_and_gt())
def test_matches_property(pair):
    sk, gt = pair
    assert matches(to_matcher(sk), gt) == int(brute_matches(sk, gt))


@settings(max_examples=300, deadline=None)
@given(sketch_and_gt())
def test_regex_acc_range(pair):
    sk, gt = pair
    acc = regex_acc(sk, gt)
    assert 0.0 <= acc <= 1.0
    assert (acc == 1.0) == (HOLE not in sk and list(sk) == list(gt))
    if acc > 0:
        holes = len(sk) - n_tokens(sk)
        assert n_tokens(sk) <= n_tokens(gt) - holes
        assert acc == float(Fraction(n_tokens(sk), n_tokens(gt)))


@settings(max_examples=300, deadline=None)
@given(sketch_and_gt(), st.data())
def test_hole_monotonicity(pair, data):
    sk, gt = pair
    assume(matches(to_matcher(sk), gt))
    runs = [(i, j) for i in range(len(sk)) for j in range(i, len(sk)) if all(s is not HOLE for s in sk[i : j + 1])]
    assume(runs)
    i, j = data.draw(st.sampled_from(runs))
    coarser = sk[:i] + [HOLE] + sk[j + 1 :]
    assert matches(to_matcher(coarser), gt) == 1
    assert regex_acc(coarser, gt) < regex_acc(sk, gt)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from("abcd"), max_size=10), st.lists(st.sampled_from("abcd"), max_size=10))
def test_rouge_symmetric(a, b):
    for v in ("R1", "R2", "RL"):
        assert rouge_f1(a, b, v) == pytest.approx(rouge_f1(b, a, v), abs=1e-15)
        assert 0.0 <= rouge_f1(a, b, v) <= 1.0


@settings(max_examples=200, deadline=None)
@given(sketch_and_gt())
def test_reward_range(pair):
    sk, gt = pair
    for kind in ("mixed", "rouge", "regex"):
        assert 0.0 <= reward(sk, gt, kind) <= 1.0
    assert reward(gt, gt) == 1.0
