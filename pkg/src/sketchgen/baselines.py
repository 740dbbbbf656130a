"""Left-to-right sequence baselines: plain, with a learned stop action, and with hole tokens.

All three share one interpolated trigram over target tokens that continues the
context's token stream. ``stop`` adds a logistic stop head that ends generation with a
trailing hole; ``hole`` is trained on sketches where the hole is an ordinary token.
"""

from __future__ import annotations

import bisect
import copy
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from .backoff import SortedRow, top_n
from .metrics import HOLE, HOLE_TEXT, is_hole, n_tokens, reward
from .models import FORMAT_VERSION, ModelError, _bucket, context_key, stream_start

END = "</s>"
VARIANTS = ("L2R", "L2R+stop", "L2R+hole")
MAX_LEN = 64
MAXP_EDGES = (0.2, 0.4, 0.6, 0.8)
LEN_EDGES = (0, 1, 2, 4, 8, 16)


def variant_name(v: str) -> str:
    aliases = {"l2r": "L2R", "l2r+stop": "L2R+stop", "l2r+hole": "L2R+hole", "lr": "L2R", "stop": "L2R+stop", "hole": "L2R+hole"}
    name = aliases.get(v.lower())
    if name is None:
        raise ValueError(f"unknown baseline variant {v}")
    return name


def _bump(row: dict, w: str, delta: float):
    c = row.get(w)
    if c is None and delta <= 0:
        return
    row[w] = max(0.0, (c or 0.0) + delta)


@dataclass
class SeqStep:
    history: tuple
    token: str | None  # None when the stop head fired
    stop_feats: list | None = None
    stop_prob: float = 0.0


class SequenceModel:
    """Interpolated absolute-discounting trigram over target tokens."""

    def __init__(self, variant: str = "L2R", discount: float = 0.5, alpha: float = 0.1):
        self.variant = variant_name(variant)
        self.discount = discount
        self.alpha = alpha
        self.order0: dict[str, float] = {}
        self.order1: dict[str, dict[str, float]] = {}
        self.order2: dict[tuple, dict[str, float]] = {}
        self.stop_names = ["bias"] + [f"maxp={b}" for b in range(len(MAXP_EDGES) + 1)]
        self.stop_names += [f"len={b}" for b in range(len(LEN_EDGES) + 1)]
        self.stop_weights = [0.0] * len(self.stop_names)
        if self.variant == "L2R+stop":
            self.stop_weights[0] = -2.0  # starts out rarely stopping
        self._rows: dict = {}
        self._top: dict = {}
        self._sorted0: tuple | None = None

    @property
    def has_stop(self) -> bool:
        return self.variant == "L2R+stop"

    # -- counting -------------------------------------------------------
    def _add(self, u: str, v: str, w: str, delta: float):
        _bump(self.order0, w, delta)
        _bump(self.order1.setdefault(v, {}), w, delta)
        _bump(self.order2.setdefault((u, v), {}), w, delta)
        self._rows.pop(("1", v), None)
        self._rows.pop(("2", (u, v)), None)

    def _changed(self):
        self._sorted0 = None
        self._top.clear()

    def observe(self, context: Sequence[str], tokens: Sequence[str], delta: float = 1.0):
        u, v = self.start_history(context)
        for w in list(tokens) + [END]:
            self._add(u, v, w, delta)
            u, v = v, w
        self._changed()

    def observe_steps(self, steps: Sequence[SeqStep], delta: float):
        for st in steps:
            if st.token is not None:
                self._add(st.history[0], st.history[1], st.token, delta)
        self._changed()

    @staticmethod
    def start_history(context: Sequence[str]) -> tuple:
        return stream_start(context)

    # -- probabilities --------------------------------------------------
    def _row(self, key) -> SortedRow:
        r = self._rows.get(key)
        if r is None:
            counts = self.order2.get(key[1]) if key[0] == "2" else self.order1.get(key[1])
            r = self._rows[key] = SortedRow(counts, self.discount)
        return r

    def _order0_sorted(self):
        if self._sorted0 is None:
            items = sorted(self.order0.items(), key=lambda kv: (-kv[1], kv[0]))
            counts = [c for _, c in items]
            self._sorted0 = ([w for w, _ in items], counts, sum(counts), list(itertools.accumulate(counts)))
        return self._sorted0

    def _weights(self, hist: tuple):
        """Row objects and the multipliers of each interpolation term."""
        r2, r1 = self._row(("2", hist)), self._row(("1", hist[1]))
        words0, _, n0, _ = self._order0_sorted()
        w2 = 1.0 / r2.total if r2.total > 0 else 0.0
        b2 = r2.lam
        w1 = b2 / r1.total if r1.total > 0 else 0.0
        w0 = b2 * r1.lam / (n0 + self.alpha * len(words0))
        return r2, r1, w2, w1, w0

    def prob(self, hist: tuple, w: str) -> float:
        r2, r1, w2, w1, w0 = self._weights(hist)
        return w2 * r2.adj(w) + w1 * r1.adj(w) + w0 * (self.order0.get(w, 0.0) + self.alpha)

    def top(self, hist: tuple, n: int) -> list[tuple[str, float]]:
        """The n most probable next tokens with log-probabilities.

        Threshold-algorithm scan over the three sorted terms: stops once the
        n-th best candidate beats any unseen word's upper bound.
        """
        key = (hist, n)
        hit = self._top.get(key)
        if hit is not None:
            return hit
        r2, r1, w2, w1, w0 = self._weights(hist)
        words0, counts0, _, _ = self._order0_sorted()
        best = top_n(
            ((r2.words, r2.vals, w2), (r1.words, r1.vals, w1)),
            (words0, counts0, w0),
            lambda w: w2 * r2.adj(w) + w1 * r1.adj(w) + w0 * (self.order0.get(w, 0.0) + self.alpha),
            n,
            w0 * self.alpha,
        )
        out = [(w, math.log(p)) for w, p in best if p > 0]
        self._top[key] = out
        return out

    def sample_token(self, hist: tuple, rng: random.Random) -> str:
        """Draw from the interpolated distribution by descending the back-off mixture."""
        for row in (self._row(("2", hist)), self._row(("1", hist[1]))):
            if row.total > 0 and rng.random() >= row.lam:
                return row.words[bisect.bisect_right(row.cum, rng.random() * row.cum[-1])]
        words, _, n0, cum = self._order0_sorted()
        if rng.random() < n0 / (n0 + self.alpha * len(words)):
            return words[bisect.bisect_right(cum, rng.random() * cum[-1])]
        return rng.choice(words)

    def first_top(self, hist: tuple, n: int) -> list[tuple[str, float]]:
        """Like ``top`` for the first token of a completion, which is never END."""
        cands = [(w, lp) for w, lp in self.top(hist, n + 1) if w != END][:n]
        z = 1.0 - self.prob(hist, END)
        return [(w, lp - math.log(z)) for w, lp in cands]

    def next_top(self, hist: tuple, n: int, length: int) -> list[tuple[str, float]]:
        return self.first_top(hist, n) if length == 0 else self.top(hist, n)

    # -- stop head ------------------------------------------------------
    def stop_features(self, hist: tuple, length: int) -> list[int]:
        maxp = math.exp(self.next_top(hist, 1, length)[0][1])
        return [0, 1 + _bucket(maxp, MAXP_EDGES), 1 + len(MAXP_EDGES) + 1 + _bucket(length, LEN_EDGES)]

    def stop_prob(self, feats: list[int]) -> float:
        z = sum(self.stop_weights[j] for j in feats)
        return 1.0 / (1.0 + math.exp(-z))

    # -- decoding -------------------------------------------------------
    def _finish(self, tokens: list[str], stopped: bool) -> list:
        out = [HOLE if t == HOLE_TEXT else t for t in tokens]
        if stopped:
            out.append(HOLE)
        return out

    def generate(self, context: Sequence[str], rng: random.Random | None = None, greedy: bool = False, max_len: int = MAX_LEN):
        """Sample (or greedily decode) one sketch; returns (sketch, steps)."""
        hist = self.start_history(context)
        toks: list[str] = []
        steps: list[SeqStep] = []
        for _ in range(max_len):
            feats, ps = None, 0.0
            if self.has_stop:
                feats = self.stop_features(hist, len(toks))
                ps = self.stop_prob(feats)
                if greedy:
                    # argmax over the joint next action: stop, or (1 - ps) * P(token)
                    stop = ps > (1.0 - ps) * math.exp(self.next_top(hist, 1, len(toks))[0][1])
                else:
                    stop = rng.random() < ps
                if stop:
                    steps.append(SeqStep(hist, None, feats, ps))
                    return self._finish(toks, True), steps
            if greedy:
                w = self.next_top(hist, 1, len(toks))[0][0]
            else:
                w = self.sample_token(hist, rng)
                while w == END and not toks:
                    w = self.sample_token(hist, rng)
            steps.append(SeqStep(hist, w, feats, ps))
            if w == END:
                break
            toks.append(w)
            hist = (hist[1], w)
        return self._finish(toks, False), steps

    def beam(self, context: Sequence[str], k: int = 5, max_len: int = MAX_LEN) -> list[tuple[list, float]]:
        """Beam search over whole sequences; scores are joint log-probabilities."""
        beam = [((), 0.0, False, False, self.start_history(context))]  # tokens, score, done, stopped, hist

        def rank(c):
            return (-c[1], len(c[0]), c[0], c[3])

        for _ in range(max_len + 1):
            if all(c[2] for c in beam):
                break
            nxt = []
            for toks, score, done, stopped, hist in beam:
                if done:
                    nxt.append((toks, score, done, stopped, hist))
                    continue
                cont = 0.0
                if self.has_stop:
                    ps = self.stop_prob(self.stop_features(hist, len(toks)))
                    if ps > 0:
                        nxt.append((toks, score + math.log(ps), True, True, hist))
                    if ps >= 1.0:
                        continue
                    cont = math.log1p(-ps)
                if len(toks) >= max_len:
                    nxt.append((toks, score + cont, True, False, hist))
                    continue
                for w, lp in self.next_top(hist, k, len(toks)):
                    if w == END:
                        nxt.append((toks, score + cont + lp, True, False, hist))
                    else:
                        nxt.append((toks + (w,), score + cont + lp, False, False, (hist[1], w)))
            nxt.sort(key=rank)
            beam = nxt[:k]
        beam.sort(key=rank)
        return [(self._finish(list(c[0]), c[3]), c[1]) for c in beam]

    # -- serialization --------------------------------------------------
    def to_json(self) -> dict:
        return {
            "meta": {"version": FORMAT_VERSION, "kind": "sequence", "variant": self.variant},
            "config": {"discount": self.discount, "alpha": self.alpha},
            "order0": self.order0,
            "order1": self.order1,
            "order2": [[list(k), v] for k, v in self.order2.items()],
            "stop_weights": dict(zip(self.stop_names, self.stop_weights)),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SequenceModel":
        if data.get("meta", {}).get("version") != FORMAT_VERSION:
            raise ModelError("model format version mismatch")
        m = cls(data["meta"]["variant"], **data["config"])
        m.order0 = dict(data["order0"])
        m.order1 = {k: dict(v) for k, v in data["order1"].items()}
        m.order2 = {tuple(k): dict(v) for k, v in data["order2"]}
        w = data["stop_weights"]
        m.stop_weights = [float(w[n]) for n in m.stop_names]
        return m

    def copy(self) -> "SequenceModel":
        return SequenceModel.from_json(copy.deepcopy(self.to_json()))


# -- training ----------------------------------------------------------------


@dataclass
class BaselineTrainConfig:
    lr: float = 0.05
    batch_size: int = 64
    epochs: int = 10
    batches_per_epoch: int | None = None
    patience: int = 5
    count_lr: float = 1.0
    reward: str = "mixed"
    history: list = field(default_factory=list)


def train_supervised(variant: str, pairs: Sequence[tuple[Sequence[str], Sequence]]) -> SequenceModel:
    """Count trigrams over (context, target-or-sketch) pairs; holes become ordinary tokens."""
    if not pairs:
        raise ValueError("empty corpus")
    m = SequenceModel(variant)
    for ctx, toks in pairs:
        m.observe(ctx, [HOLE_TEXT if is_hole(t) else t for t in toks])
    return m


def greedy_validate(m: SequenceModel, examples, kind: str = "mixed") -> tuple[float, float]:
    cache: dict = {}
    rs, ls = [], []
    for ex in examples:
        key = context_key(ex.context)
        sk = cache.get(key)
        if sk is None:
            sk = cache[key] = m.generate(ex.context, greedy=True)[0]
        rs.append(reward(sk, ex.target, kind))
        ls.append(n_tokens(sk))
    if not rs:
        raise ValueError("empty validation set")
    return sum(rs) / len(rs), sum(ls) / len(ls)


def self_critical_finetune(m: SequenceModel, train, valid, cfg: BaselineTrainConfig, rng: random.Random) -> SequenceModel:
    """Sequence-level self-critical training against the best snapshot's greedy decode.

    The stop variant updates only its stop head; the hole variant applies
    advantage-weighted fractional counts to the sampled n-grams.
    """
    if m.variant == "L2R":
        return m
    best = m.copy()
    best_r = greedy_validate(best, valid, cfg.reward)[0]
    cache: dict = {}
    stale = 0
    cur = m.copy()
    for epoch in range(1, cfg.epochs + 1):
        order = list(range(len(train)))
        rng.shuffle(order)
        batches = [order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        if cfg.batches_per_epoch is not None:
            batches = batches[: cfg.batches_per_epoch]
        rs = []
        for idx in batches:
            grad = [0.0] * len(cur.stop_weights)
            count_updates = []
            for i in idx:
                ex = train[i]
                sk, steps = cur.generate(ex.context, rng)
                r = reward(sk, ex.target, cfg.reward)
                rs.append(r)
                key = context_key(ex.context)
                if key not in cache:
                    cache[key] = best.generate(ex.context, greedy=True)[0]
                adv = r - reward(cache[key], ex.target, cfg.reward)
                if adv == 0.0:
                    continue
                if cur.has_stop:
                    for st in steps:
                        y = 1.0 if st.token is None else 0.0
                        for j in st.stop_feats:
                            grad[j] += adv * (y - st.stop_prob)
                else:
                    count_updates.append((steps, adv))
            if cur.has_stop:
                cur.stop_weights = [w + cfg.lr * g for w, g in zip(cur.stop_weights, grad)]
            for steps, adv in count_updates:
                cur.observe_steps(steps, cfg.count_lr * adv)
        val, mean_len = greedy_validate(cur, valid, cfg.reward)
        if val > best_r:
            best, best_r, stale = cur.copy(), val, 0
            cache.clear()
        else:
            stale += 1
        cfg.history.append(
            {"stage": m.variant, "epoch": epoch, "mean_reward": sum(rs) / max(1, len(rs)),
             "valid_reward": val, "snapshot_reward": best_r, "mean_len": mean_len}
        )
        if stale >= cfg.patience:
            break
    return best


def train_baselines(
    train,
    valid,
    variants: Sequence[str] = VARIANTS,
    hole_data: Sequence[tuple] | None = None,
    cfg: BaselineTrainConfig | None = None,
    seed: int = 0,
) -> dict[str, SequenceModel]:
    cfg = cfg or BaselineTrainConfig()
    out = {}
    for v in variants:
        name = variant_name(v)
        if name == "L2R+hole":
            if hole_data is None:
                raise ValueError("the hole variant needs a hole dataset")
            m = train_supervised(name, hole_data)
        else:
            m = train_supervised(name, [(ex.context, ex.target) for ex in train])
        out[name] = self_critical_finetune(m, train, valid, cfg, random.Random(f"{seed}:{name}"))
    return out
