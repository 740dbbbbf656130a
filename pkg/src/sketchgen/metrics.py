"""Sketch scoring: hole matching, RegexAcc, token-level ROUGE and the training reward."""

from __future__ import annotations

from collections import Counter
from typing import Sequence, Union


class _Hole:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "■"

    def __reduce__(self):
        return (_Hole, ())


HOLE = _Hole()
HOLE_TEXT = "■"

SketchItem = Union[str, _Hole]
Sketch = list  # list[SketchItem]


def is_hole(item) -> bool:
    return item is HOLE


def sketch_from_tokens(items: Sequence) -> list:
    """Decode a JSON token array where holes are ``null`` or the ``■`` marker."""
    return [HOLE if (t is None or t == HOLE_TEXT) else t for t in items]


def sketch_to_json(sketch: Sequence) -> list:
    return [HOLE_TEXT if is_hole(t) else t for t in sketch]


def render(sketch: Sequence) -> str:
    return " ".join(HOLE_TEXT if is_hole(t) else str(t) for t in sketch)


class HoleMatcher:
    """Anchored matcher over token lists; each hole absorbs one or more whole tokens."""

    __slots__ = ("items",)

    def __init__(self, items: Sequence):
        self.items = tuple(items)

    def __call__(self, gt: Sequence[str]) -> bool:
        items = self.items
        m = len(gt)
        # reach[j]: items consumed so far can produce exactly gt[:j]
        reach = [False] * (m + 1)
        reach[0] = True
        for it in items:
            nxt = [False] * (m + 1)
            if it is HOLE:
                seen = False
                for j in range(m + 1):
                    if seen:
                        nxt[j] = True
                    seen = seen or reach[j]
            else:
                for j in range(m):
                    if reach[j] and gt[j] == it:
                        nxt[j + 1] = True
            reach = nxt
            if not any(reach):
                return False
        return reach[m]

    def __repr__(self) -> str:
        return f"HoleMatcher({render(self.items)!r})"


def to_matcher(sketch: Sequence) -> HoleMatcher:
    return HoleMatcher(sketch)


def matches(m: HoleMatcher, gt: Sequence[str]) -> int:
    return 1 if m(gt) else 0


def n_tokens(seq: Sequence) -> int:
    return sum(1 for t in seq if t is not HOLE)


def erase_holes(sketch: Sequence) -> list[str]:
    return [t for t in sketch if t is not HOLE]


def regex_acc(pred: Sequence, gt: Sequence[str]) -> float:
    if not gt:
        raise ValueError("empty ground truth")
    if not matches(to_matcher(pred), gt):
        return 0.0
    # int / int is the correctly rounded value of the exact ratio
    return n_tokens(pred) / n_tokens(gt)


def _f1(overlap: float, n_pred: int, n_gt: int) -> float:
    if overlap == 0:
        return 0.0
    p, r = overlap / n_pred, overlap / n_gt
    return 2 * p * r / (p + r)


def _ngrams(seq: Sequence[str], n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_f1(pred: Sequence[str], gt: Sequence[str], variant: str = "RL") -> float:
    """Token-level ROUGE F1 for variants ``R1``, ``R2`` and ``RL``.

    Two sequences without any n-grams of the requested order score 1.0 when
    they are equal and 0.0 otherwise.
    """
    if not pred or not gt:
        return 1.0 if not pred and not gt else 0.0
    if variant == "RL":
        return _f1(lcs_length(pred, gt), len(pred), len(gt))
    if variant not in ("R1", "R2"):
        raise ValueError(f"unknown ROUGE variant {variant}")
    n = int(variant[1])
    pc, gc = _ngrams(pred, n), _ngrams(gt, n)
    np_, ng = sum(pc.values()), sum(gc.values())
    if np_ == 0 or ng == 0:
        return 1.0 if (np_ == ng and list(pred) == list(gt)) else 0.0
    overlap = sum((pc & gc).values())
    return _f1(overlap, np_, ng)


REWARDS = ("mixed", "rouge", "regex")


def reward(pred: Sequence, gt: Sequence[str], kind: str = "mixed") -> float:
    """Training reward: mean of RegexAcc and ROUGE-L F1 on the hole-erased sketch."""
    if kind == "regex":
        return regex_acc(pred, gt)
    if kind == "rouge":
        if not gt:
            raise ValueError("empty ground truth")
        return rouge_f1(erase_holes(pred), gt, "RL")
    if kind != "mixed":
        raise ValueError(f"unknown reward {kind}")
    return 0.5 * (regex_acc(pred, gt) + rouge_f1(erase_holes(pred), gt, "RL"))
