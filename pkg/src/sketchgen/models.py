"""Selector and expansion models over partially expanded sketch states.

Both models are count/linear stand-ins for the neural pointer network and
decoder: the selector is a softmax over sparse binary features of each
nonterminal position (plus the stop action), and the expansion model is an
interpolated back-off table keyed by the nonterminal kind and nearby tokens.
"""

from __future__ import annotations

import bisect
import copy
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .backoff import SortedRow, top_n
from .grammar import Grammar, Symbol, parse_grammar
from .metrics import HOLE

FORMAT_VERSION = 1
BOS = "<s>"
EOS = "</s>"
CONTEXT_ORDER = 2  # context tokens any model here can see


def context_key(context: Sequence[str]) -> tuple:
    """Everything a model conditions on from the context; equal keys give equal predictions."""
    return tuple(context[-CONTEXT_ORDER:])


def stream_start(context: Sequence[str]) -> tuple[str, str]:
    """The two terminals preceding a completion, padded with BOS."""
    padded = (BOS, BOS) + tuple(context[-2:])
    return padded[-2], padded[-1]


class ModelError(ValueError):
    pass


class _Unknown:
    def __repr__(self) -> str:
        return "<unk>"

    def __reduce__(self):
        return (_unknown, ())


def _unknown():
    return UNK


UNK = _Unknown()
STOP = None  # selector action meaning "expand nothing further"


@dataclass(frozen=True, slots=True)
class SketchState:
    """A sentential form: terminal tokens (str) interleaved with expandable Symbols."""

    items: tuple
    context: tuple = ()
    step: int = 0
    logp_e: float = 0.0  # accumulated expansion log-probability

    @classmethod
    def initial(cls, root: Symbol, context: Sequence[str] = ()) -> "SketchState":
        return cls((root,), tuple(context))

    def positions(self) -> list[int]:
        return [i for i, s in enumerate(self.items) if type(s) is Symbol]

    def expand(self, i: int, expansion: tuple, logp: float = 0.0) -> "SketchState":
        if type(self.items[i]) is not Symbol:
            raise ValueError(f"position {i} holds a terminal")
        return SketchState(
            self.items[:i] + expansion + self.items[i + 1 :],
            self.context,
            self.step + 1,
            self.logp_e + logp,
        )

    def signatures(self) -> dict[int, tuple[str, str, str]]:
        """(second previous, previous, next) terminal around each expandable position.

        The state continues the context's token stream.
        """
        items = self.items
        p2, p1 = stream_start(self.context)
        out: dict[int, list] = {}
        for i, s in enumerate(items):
            if type(s) is str:
                p2, p1 = p1, s
            else:
                out[i] = [p2, p1, EOS]
        nxt = EOS
        for i in range(len(items) - 1, -1, -1):
            s = items[i]
            if type(s) is str:
                nxt = s
            else:
                out[i][2] = nxt
        return {i: tuple(v) for i, v in out.items()}

    def is_complete(self) -> bool:
        return not any(type(s) is Symbol for s in self.items)

    def render(self) -> str:
        return " ".join(s if type(s) is str else f"<{s.name}>" for s in self.items)


def nonterminals_to_holes(x: SketchState) -> list:
    return [s if type(s) is str else HOLE for s in x.items]


def expansion_key(expansion: tuple) -> str:
    return " ".join(json.dumps(t, ensure_ascii=False) if type(t) is str else t.name for t in expansion)


def parse_expansion_key(key: str, g: Grammar) -> tuple:
    out = []
    dec = json.JSONDecoder()
    pos = 0
    while pos < len(key):
        if key[pos] == " ":
            pos += 1
            continue
        if key[pos] == '"':
            val, pos = dec.raw_decode(key, pos)
            out.append(val)
        else:
            end = key.find(" ", pos)
            end = len(key) if end < 0 else end
            out.append(g.symbol(key[pos:end]))
            pos = end
    return tuple(out)


def rhs_items(rhs: Iterable[Symbol]) -> tuple:
    return tuple(s.name if s.is_literal else s for s in rhs)


class ExpansionDist:
    """A finite distribution over expansions; UNK may carry leaf mass that cannot be generated."""

    __slots__ = ("options", "probs", "_order", "_entropy")

    def __init__(self, options: list, probs: list[float]):
        total = sum(probs)
        assert abs(total - 1.0) < 1e-9, f"distribution sums to {total}"
        self.options = options
        self.probs = probs
        self._order: list[int] | None = None
        self._entropy: float | None = None

    @property
    def entropy(self) -> float:
        if self._entropy is None:
            self._entropy = -sum(p * math.log(p) for p in self.probs if p > 0)
        return self._entropy

    def ranked(self) -> list[int]:
        if self._order is None:
            idx = [i for i, o in enumerate(self.options) if o is not UNK and self.probs[i] > 0]
            idx.sort(key=lambda i: -self.probs[i])
            self._order = idx
        return self._order

    def top(self, n: int | None) -> list[tuple[tuple, float]]:
        """Most probable generable expansions with their log-probabilities."""
        order = self.ranked() if n is None else self.ranked()[:n]
        return [(self.options[i], math.log(self.probs[i])) for i in order]

    def sample(self, rng) -> tuple[tuple, float]:
        """Draw an expansion; UNK draws are redrawn among generable options."""
        order = self.ranked()
        if not order:
            raise ModelError("no generable expansion")
        weights = [self.probs[i] for i in order]
        i = rng.choices(order, weights=weights)[0]
        return self.options[i], math.log(self.probs[i])

    def prob(self, expansion) -> float:
        for o, p in zip(self.options, self.probs):
            if o == expansion:
                return p
        return 0.0


class Unigram:
    """Lexeme counts of one token class, sorted for top-n scans and sampling."""

    __slots__ = ("counts", "total", "words", "vals", "cum", "slogs")

    def __init__(self, counts: dict):
        self.counts = counts
        items = sorted(((w, c) for w, c in counts.items() if c > 0), key=lambda t: (-t[1], t[0]))
        self.words = [w for w, _ in items]
        self.vals = [c for _, c in items]
        self.total = sum(self.vals)
        self.cum = list(itertools.accumulate(self.vals))
        self.slogs = sum(c * math.log(c) for c in self.vals)


class LeafDist:
    """Interpolated distribution over the lexemes of a token class, kept sparse.

    Back-off rows are mixed over a unigram base that reserves ``unk`` mass for
    lexemes never seen in training; that mass cannot be generated.
    """

    __slots__ = ("r2", "r1", "uni", "lam_unk", "w2", "w1", "wb", "unk", "_entropy", "_top")

    def __init__(self, r2: SortedRow, r1: SortedRow, uni: Unigram, unk_mass: float):
        self.r2, self.r1, self.uni, self.lam_unk = r2, r1, uni, unk_mass
        self.w2 = r2.weight
        self.w1 = r2.lam * r1.weight
        base = r2.lam * r1.lam
        if uni.total > 0:
            self.wb = base * (1.0 - unk_mass) / uni.total
            self.unk = base * unk_mass
        else:
            self.wb = 0.0
            self.unk = base
        self._entropy: float | None = None
        self._top: dict = {}

    def _p(self, w: str) -> float:
        return self.w2 * self.r2.adj(w) + self.w1 * self.r1.adj(w) + self.wb * max(0.0, self.uni.counts.get(w, 0.0))

    def prob(self, expansion) -> float:
        if expansion is UNK:
            return self.unk
        return self._p(expansion[0])

    def support(self) -> list[tuple]:
        """Every option with its probability (materialized; for checks and small models)."""
        words = dict.fromkeys(self.uni.words)
        words.update(dict.fromkeys(self.r1.words))
        words.update(dict.fromkeys(self.r2.words))
        out = [((w,), self._p(w)) for w in words]
        return out + [(UNK, self.unk)]

    @property
    def entropy(self) -> float:
        if self._entropy is None:
            # ordered union so the float sum is the same under any hash seed
            seen = dict.fromkeys(self.r2.counts)
            seen.update(dict.fromkeys(self.r1.counts))
            h = 0.0
            in_u, in_ulog = 0.0, 0.0
            for w in seen:
                p = self._p(w)
                if p > 0:
                    h -= p * math.log(p)
                u = self.uni.counts.get(w, 0.0)
                if u > 0:
                    in_u += u
                    in_ulog += u * math.log(u)
            k = self.wb
            if k > 0:
                # lexemes outside the rows carry k * count each
                rest_u = self.uni.total - in_u
                h -= k * (self.uni.slogs - in_ulog) + k * math.log(k) * rest_u
            if self.unk > 0:
                h -= self.unk * math.log(self.unk)
            self._entropy = max(0.0, h)
        return self._entropy

    def top(self, n: int | None) -> list[tuple[tuple, float]]:
        if n is None:
            n = len(self.uni.words) + len(self.r1.words) + len(self.r2.words)
        hit = self._top.get(n)
        if hit is None:
            best = top_n(
                ((self.r2.words, self.r2.vals, self.w2), (self.r1.words, self.r1.vals, self.w1)),
                (self.uni.words, self.uni.vals, self.wb),
                self._p,
                n,
            ) if n > 0 else []
            hit = self._top[n] = [((w,), math.log(p)) for w, p in best if p > 0]
        return hit

    def sample(self, rng) -> tuple[tuple, float]:
        """Draw a lexeme; draws of the unknown mass are redrawn."""
        if self.unk >= 1.0 - 1e-12:
            raise ModelError("no generable expansion")
        while True:
            w = None
            for row in (self.r2, self.r1):
                if row.total > 0 and rng.random() >= row.lam:
                    w = row.words[bisect.bisect_right(row.cum, rng.random() * row.cum[-1])]
                    break
            if w is None and self.uni.total > 0 and rng.random() >= self.lam_unk:
                w = self.uni.words[bisect.bisect_right(self.uni.cum, rng.random() * self.uni.cum[-1])]
            if w is not None:
                p = self._p(w)
                if p > 0:
                    return (w,), math.log(p)


@dataclass
class ExpansionConfig:
    discount: float = 0.5
    alpha: float = 0.1
    unk_mass: float = 0.05


class ExpansionModel:
    """Interpolated absolute-discounting back-off over observed expansions.

    Orders, highest first: (kind, 2 previous terminals, next terminal),
    (kind, previous terminal), (kind). Token-class leaves back off to a lexeme
    unigram with reserved unknown mass instead of the smoothed inventory.
    """

    def __init__(self, leaf_kinds: Iterable[str], config: ExpansionConfig | None = None):
        self.config = config or ExpansionConfig()
        self.leaf_kinds = list(leaf_kinds)
        self._leaf_set = set(self.leaf_kinds)
        self.expansions: dict[str, tuple] = {}  # key -> items
        self.order0: dict[str, dict[str, float]] = {}
        self.order1: dict[tuple, dict[str, float]] = {}
        self.order2: dict[tuple, dict[str, float]] = {}
        self.lexemes: dict[str, dict[str, float]] = {k: {} for k in self.leaf_kinds}
        self._inventory: dict[str, list[str]] = {}
        self._memo: dict = {}
        self._rows: dict = {}  # leaf context rows, sorted
        self._unigrams: dict = {}

    # -- counting -------------------------------------------------------
    def _bump(self, table: dict, key, exp_key: str, delta: float):
        row = table.get(key)
        if row is None:
            if delta <= 0:
                return
            row = table[key] = {}
        c = row.get(exp_key)
        if c is None and delta <= 0:
            return
        row[exp_key] = max(0.0, (c or 0.0) + delta)

    def observe(self, kind: str, sig: tuple[str, str, str], expansion: tuple, delta: float = 1.0, unigram: bool = True):
        """Add ``delta`` to the count of ``expansion`` for ``kind`` in context ``sig``.

        For token-class leaves ``unigram`` controls whether the context-free
        lexeme count is bumped as well as the context rows.
        """
        p2, p1, n1 = sig
        if kind in self._leaf_set:
            key = expansion[0]
            if unigram:
                row = self.lexemes[kind]
                if key in row or delta > 0:
                    row[key] = max(0.0, row.get(key, 0.0) + delta)
                    self._unigrams.pop(kind, None)
        else:
            key = expansion_key(expansion)
            if key not in self.expansions:
                if delta <= 0:
                    return
                self.expansions[key] = expansion
                self._inventory.pop(kind, None)
            self._bump(self.order0, kind, key, delta)
        self._bump(self.order1, (kind, p1), key, delta)
        self._bump(self.order2, (kind, p2, p1, n1), key, delta)
        self._rows.pop((kind, p1), None)
        self._rows.pop((kind, p2, p1, n1), None)
        self._memo.clear()

    def inventory(self, kind: str) -> list[str]:
        inv = self._inventory.get(kind)
        if inv is None:
            inv = sorted(self.order0.get(kind, {}))
            self._inventory[kind] = inv
        return inv

    def kinds(self) -> list[str]:
        return list(self.order0) + [k for k in self.leaf_kinds if self.lexemes[k]]

    # -- distributions --------------------------------------------------
    def dist(self, kind: str, sig: tuple[str, str, str]):
        memo_key = (kind,) + sig
        d = self._memo.get(memo_key)
        if d is None:
            d = self._leaf_dist(kind, sig) if kind in self._leaf_set else self._nt_dist(kind, sig)
            self._memo[memo_key] = d
        return d

    def dist_at(self, x: SketchState, i: int, sig=None) -> ExpansionDist:
        sym = x.items[i]
        if type(sym) is not Symbol:
            raise ValueError(f"position {i} is not expandable")
        if sig is None:
            sig = x.signatures()[i]
        return self.dist(sym.name, sig)

    def _row(self, key, table: dict) -> SortedRow:
        r = self._rows.get(key)
        if r is None:
            r = self._rows[key] = SortedRow(table.get(key), self.config.discount)
        return r

    def _leaf_dist(self, kind: str, sig: tuple[str, str, str]) -> LeafDist:
        p2, p1, n1 = sig
        uni = self._unigrams.get(kind)
        if uni is None:
            uni = self._unigrams[kind] = Unigram(self.lexemes[kind])
        return LeafDist(
            self._row((kind, p2, p1, n1), self.order2),
            self._row((kind, p1), self.order1),
            uni,
            self.config.unk_mass,
        )

    def _interp(self, row: dict | None, inv: list[str], lower: list[float]) -> list[float]:
        if not row:
            return lower
        total = sum(row.values())
        if total <= 0:
            return lower
        disc = self.config.discount
        held = sum(min(disc, c) for c in row.values())
        w = held / total
        return [
            (row.get(e, 0.0) - min(disc, row.get(e, 0.0))) / total + w * lo
            for e, lo in zip(inv, lower)
        ]

    def _nt_dist(self, kind: str, sig: tuple[str, str, str]) -> ExpansionDist:
        inv = self.inventory(kind)
        if not inv:
            raise ModelError(f"unknown nonterminal {kind}")
        row0 = self.order0[kind]
        a = self.config.alpha
        norm = sum(row0.values()) + a * len(inv)
        p0 = [(row0.get(e, 0.0) + a) / norm for e in inv]
        p2, p1, n1 = sig
        p = self._interp(self.order1.get((kind, p1)), inv, p0)
        p = self._interp(self.order2.get((kind, p2, p1, n1)), inv, p)
        return ExpansionDist([self.expansions[e] for e in inv], p)

    # -- serialization --------------------------------------------------
    def to_json(self) -> dict:
        return {
            "config": vars(self.config),
            "leaf_kinds": self.leaf_kinds,
            "order0": self.order0,
            "order1": [[list(k), v] for k, v in self.order1.items()],
            "order2": [[list(k), v] for k, v in self.order2.items()],
            "lexemes": self.lexemes,
        }

    @classmethod
    def from_json(cls, data: dict, g: Grammar) -> "ExpansionModel":
        m = cls(data["leaf_kinds"], ExpansionConfig(**data["config"]))
        m.order0 = {k: dict(v) for k, v in data["order0"].items()}
        m.order1 = {tuple(k): dict(v) for k, v in data["order1"]}
        m.order2 = {tuple(k): dict(v) for k, v in data["order2"]}
        m.lexemes = {k: dict(v) for k, v in data["lexemes"].items()}
        for row in m.order0.values():
            for key in row:
                m.expansions[key] = parse_expansion_key(key, g)
        return m


ENTROPY_EDGES = (0.1, 0.5, 1.0, 2.0)
COUNT_EDGES = (1, 2, 3, 6)
STEP_EDGES = (0, 1, 2, 4, 8, 16)


def _bucket(value: float, edges: Sequence[float]) -> int:
    for b, e in enumerate(edges):
        if value <= e:
            return b
    return len(edges)


class SelectorModel:
    """Linear softmax over the expandable positions of a state and the stop action."""

    def __init__(self, kinds: Iterable[str], weights: np.ndarray | None = None):
        names = [f"kind={k}" for k in kinds]
        names += [f"ent={b}" for b in range(len(ENTROPY_EDGES) + 1)]
        names += [f"pos={b}" for b in range(5)]
        names += ["stop"]
        names += [f"stop:cnt={b}" for b in range(len(COUNT_EDGES) + 1)]
        names += [f"stop:step={b}" for b in range(len(STEP_EDGES) + 1)]
        names += [f"stop:minent={b}" for b in range(len(ENTROPY_EDGES) + 1)]
        self.feature_names = names
        self.index = {n: i for i, n in enumerate(names)}
        self.weights = np.zeros(len(names)) if weights is None else np.asarray(weights, float).copy()
        if self.weights.shape != (len(names),):
            raise ModelError("selector weight vector does not match feature set")
        self.allow_stop = True
        self._wl = self.weights.tolist()

    def set_weights(self, w: np.ndarray):
        self.weights = np.asarray(w, float)
        self._wl = self.weights.tolist()

    def features(self, x: SketchState, exp: ExpansionModel) -> tuple[list, list[list[int]]]:
        """Options (positions, then STOP) and the active feature indices of each."""
        idx = self.index
        positions = x.positions()
        options: list = []
        feats: list[list[int]] = []
        min_ent = 0.0
        if positions:
            sigs = x.signatures()
            n = len(x.items)
            for i in positions:
                kind = x.items[i].name
                d = exp.dist(kind, sigs[i])
                h = d.entropy
                min_ent = h if len(options) == 0 or h < min_ent else min_ent
                options.append(i)
                feats.append(
                    [
                        idx[f"kind={kind}"],
                        idx[f"ent={_bucket(h, ENTROPY_EDGES)}"],
                        idx[f"pos={min(4, 5 * i // n)}"],
                    ]
                )
        if self.allow_stop or not positions:
            options.append(STOP)
            feats.append(
                [
                    idx["stop"],
                    idx[f"stop:cnt={_bucket(len(positions), COUNT_EDGES)}"],
                    idx[f"stop:step={_bucket(x.step, STEP_EDGES)}"],
                    # how sure the expansion model is about its easiest position
                    idx[f"stop:minent={_bucket(min_ent, ENTROPY_EDGES)}"],
                ]
            )
        return options, feats

    def probs_from_features(self, feats: list[list[int]]) -> list[float]:
        w = self._wl
        scores = [sum(w[j] for j in f) for f in feats]
        top = max(scores)
        ex = [math.exp(s - top) for s in scores]
        z = sum(ex)
        probs = [e / z for e in ex]
        assert abs(sum(probs) - 1.0) < 1e-9
        return probs

    def dist(self, x: SketchState, exp: ExpansionModel) -> tuple[list, list[float], list[list[int]]]:
        if not x.positions():
            return [STOP], [1.0], [[]]
        options, feats = self.features(x, exp)
        return options, self.probs_from_features(feats), feats

    def log_prob(self, x: SketchState, chosen, exp: ExpansionModel) -> float:
        options, probs, _ = self.dist(x, exp)
        return math.log(probs[options.index(chosen)])

    def grad_from(self, feats: list[list[int]], probs: list[float], k: int, out: np.ndarray | None = None, scale: float = 1.0) -> np.ndarray:
        """Accumulate scale * d log P(option k) / d weights into ``out``."""
        if out is None:
            out = np.zeros(len(self.weights))
        if len(feats) == 1:
            return out
        for j in feats[k]:
            out[j] += scale
        for p, f in zip(probs, feats):
            for j in f:
                out[j] -= scale * p
        return out

    def grad(self, x: SketchState, chosen, exp: ExpansionModel) -> np.ndarray:
        options, probs, feats = self.dist(x, exp)
        return self.grad_from(feats, probs, options.index(chosen))


class UniformSelector:
    """Uniform choice among positions; stops only when nothing is left or below a threshold."""

    def __init__(self, threshold: float | None = None):
        self.threshold = threshold

    def dist(self, x: SketchState, exp: ExpansionModel):
        positions = x.positions()
        if not positions or (self.threshold is not None and x.logp_e < self.threshold):
            return [STOP], [1.0], [[]]
        p = 1.0 / len(positions)
        return positions, [p] * len(positions), [[] for _ in positions]


class NoStopSelector:
    """Wraps a selector and removes the stop action while positions remain."""

    def __init__(self, inner: SelectorModel):
        self.inner = inner

    def dist(self, x: SketchState, exp: ExpansionModel):
        options, probs, feats = self.inner.dist(x, exp)
        if len(options) == 1:
            return options, probs, feats
        keep = [k for k, o in enumerate(options) if o is not STOP]
        z = sum(probs[k] for k in keep)
        return [options[k] for k in keep], [probs[k] / z for k in keep], [feats[k] for k in keep]


@dataclass
class Snapshot:
    weights: np.ndarray
    expansion: dict  # ExpansionModel.to_json()
    reward: float


@dataclass
class ModelBundle:
    grammar: Grammar
    selector: SelectorModel
    expansion: ExpansionModel
    snapshot: Snapshot | None = None
    meta: dict = field(default_factory=dict)

    @property
    def root(self) -> Symbol:
        return self.grammar.start

    def take_snapshot(self, reward: float):
        self.snapshot = Snapshot(self.selector.weights.copy(), copy.deepcopy(self.expansion.to_json()), reward)

    def snapshot_bundle(self) -> "ModelBundle":
        if self.snapshot is None:
            raise ModelError("bundle has no snapshot")
        return ModelBundle(
            self.grammar,
            SelectorModel(self.grammar.expandable_kinds(), self.snapshot.weights),
            ExpansionModel.from_json(copy.deepcopy(self.snapshot.expansion), self.grammar),
            None,
            dict(self.meta),
        )

    def copy(self) -> "ModelBundle":
        b = ModelBundle(
            self.grammar,
            SelectorModel(self.grammar.expandable_kinds(), self.selector.weights),
            ExpansionModel.from_json(copy.deepcopy(self.expansion.to_json()), self.grammar),
            None,
            copy.deepcopy(self.meta),
        )
        if self.snapshot is not None:
            b.snapshot = Snapshot(self.snapshot.weights.copy(), copy.deepcopy(self.snapshot.expansion), self.snapshot.reward)
        return b

    def to_json(self) -> dict:
        snap = None
        if self.snapshot is not None:
            snap = {
                "selector_weights": self.snapshot.weights.tolist(),
                "expansion": self.snapshot.expansion,
                "reward": self.snapshot.reward,
            }
        return {
            "meta": {"version": FORMAT_VERSION, "kind": "grammar", "grammar": self.grammar.to_text(), **self.meta},
            "selector_weights": dict(zip(self.selector.feature_names, self.selector.weights.tolist())),
            "expansion_counts": {k: v for k, v in self.expansion.to_json().items() if k != "lexemes"},
            "lexeme_counts": self.expansion.lexemes,
            "snapshot": snap,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ModelBundle":
        meta = dict(data["meta"])
        check_version(meta)
        g = parse_grammar(meta.pop("grammar"))
        meta.pop("version")
        meta.pop("kind", None)
        sel = SelectorModel(g.expandable_kinds())
        w = data["selector_weights"]
        if set(w) != set(sel.feature_names):
            raise ModelError("selector features do not match the grammar")
        sel.set_weights(np.array([w[n] for n in sel.feature_names]))
        exp = ExpansionModel.from_json({**data["expansion_counts"], "lexemes": data["lexeme_counts"]}, g)
        b = cls(g, sel, exp, None, meta)
        snap = data.get("snapshot")
        if snap is not None:
            b.snapshot = Snapshot(np.array(snap["selector_weights"], float), snap["expansion"], snap["reward"])
        return b


def check_version(meta: dict):
    version = meta.get("version")
    if version != FORMAT_VERSION:
        raise ModelError(f"model format version {version} is not supported (expected {FORMAT_VERSION})")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_json(), fh, ensure_ascii=False)
        fh.write("\n")


def load_model(path):
    """Load a grammar bundle or a sequence baseline from its JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"corrupt model file {path}: {exc}") from exc
    if not isinstance(data, dict) or "meta" not in data:
        raise ModelError(f"corrupt model file {path}")
    check_version(data["meta"])
    try:
        if data["meta"].get("kind") == "sequence":
            from .baselines import SequenceModel

            return SequenceModel.from_json(data)
        return ModelBundle.from_json(data)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"corrupt model file {path}: missing {exc}") from exc
