"""Pretraining data, count pretraining and self-critical policy-gradient fine-tuning."""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import DEFAULT_MAX_STEPS, generate
from .grammar import Grammar
from .metrics import HOLE, n_tokens, reward
from .models import (
    ExpansionConfig,
    ExpansionModel,
    ModelBundle,
    SelectorModel,
    SketchState,
    context_key,
    rhs_items,
)
from .syntax import EarleyParser, Example, ParseTree

log = logging.getLogger(__name__)

MODES = ("selector", "full")


@dataclass
class ExpansionTrace:
    """Uniform-order replay of one target: each state with the true expansion of every position."""

    steps: list[tuple[SketchState, dict[int, tuple]]]
    order: list[int]
    final: SketchState


class TreeIndex:
    """Parses targets under a (flattened) grammar, reusing any tree that already fits it."""

    def __init__(self, g: Grammar):
        self.g = g
        self.parser = EarleyParser(g)
        self._prods = {(p.lhs, p.rhs) for p in g.productions}

    def _fits(self, tree: ParseTree) -> bool:
        return all(
            not node.children or (node.symbol, node.rhs) in self._prods for node in tree.iter_nodes()
        )

    def tree(self, ex: Example) -> ParseTree:
        t = ex.target_tree
        if t is not None and t.symbol == self.g.start and self._fits(t):
            return t
        return self.parser.parse_strings(ex.target, self.g.start)


def _expansion_of(node: ParseTree) -> tuple:
    if node.token is not None:
        return (node.token.text,)
    return rhs_items(node.rhs)


def trace_from_tree(tree: ParseTree, context: Sequence[str], rng: random.Random) -> ExpansionTrace:
    x = SketchState.initial(tree.symbol, context)
    nodes: list = [tree]
    steps, order = [], []
    while True:
        positions = x.positions()
        if not positions:
            break
        steps.append((x, {i: _expansion_of(nodes[i]) for i in positions}))
        i = rng.choice(positions)
        node = nodes[i]
        order.append(i)
        x = x.expand(i, _expansion_of(node))
        if node.token is not None:
            kids = [None]
        else:
            kids = [c if c.symbol.expandable else None for c in node.children]
        nodes = nodes[:i] + kids + nodes[i + 1 :]
    return ExpansionTrace(steps, order, x)


def make_expansion_traces(
    ex: Example, g: Grammar, rng: random.Random, index: TreeIndex | None = None
) -> ExpansionTrace:
    index = index or TreeIndex(g)
    return trace_from_tree(index.tree(ex), ex.context, rng)


def train_expansion_counts(
    traces: Iterable[ExpansionTrace], g: Grammar, config: ExpansionConfig | None = None
) -> ExpansionModel:
    """Count the true expansion of every position at every recorded state.

    Leaf lexemes also feed a context-free unigram; that count is taken once
    per token (at the step it is expanded) rather than once per state it survives.
    """
    m = ExpansionModel(g.token_classes, config)
    for tr in traces:
        for (x, truth), chosen in zip(tr.steps, tr.order):
            sigs = x.signatures()
            for i, e in truth.items():
                m.observe(x.items[i].name, sigs[i], e, 1.0, unigram=(i == chosen))
    if not m.order0:
        raise ValueError("empty training corpus")
    return m


@dataclass
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 64
    epochs: int = 20
    batches_per_epoch: int | None = None  # None: one pass over the training set
    patience: int = 5
    max_steps: int = DEFAULT_MAX_STEPS
    reward: str = "mixed"
    count_lr: float = 1.0  # scale of advantage-weighted count updates in full mode
    valid_size: int | None = None


@dataclass
class TrainState:
    bundle: ModelBundle
    cfg: TrainConfig
    rng: random.Random
    epoch: int = 0
    stale: int = 0
    history: list[dict] = field(default_factory=list)
    _baseline: ModelBundle | None = None
    _cache: dict = field(default_factory=dict)

    @property
    def snapshot_reward(self) -> float:
        return self.bundle.snapshot.reward

    def baseline_sketch(self, ex: Example) -> list:
        """Greedy decode of the best snapshot, shared per context key."""
        key = context_key(ex.context)
        sk = self._cache.get(key)
        if sk is None:
            if self._baseline is None:
                self._baseline = self.bundle.snapshot_bundle()
            sk, _ = generate(self._baseline, _x0(self._baseline, ex), None, self.cfg.max_steps, greedy=True)
            self._cache[key] = sk
        return sk

    def snapshot(self, value: float):
        self.bundle.take_snapshot(value)
        self._baseline = None
        self._cache.clear()


def _x0(bundle, ex: Example) -> SketchState:
    return SketchState.initial(bundle.root, ex.context)


def greedy_rewards(bundle, examples: Sequence[Example], kind: str = "mixed", max_steps: int = DEFAULT_MAX_STEPS):
    """Per-example greedy reward and sketch length (decodes shared per context key)."""
    cache: dict = {}
    rewards, lengths = [], []
    for ex in examples:
        key = context_key(ex.context)
        sk = cache.get(key)
        if sk is None:
            sk, _ = generate(bundle, _x0(bundle, ex), None, max_steps, greedy=True)
            cache[key] = sk
        rewards.append(reward(sk, ex.target, kind))
        lengths.append(n_tokens(sk))
    return rewards, lengths


def validate(bundle, examples: Sequence[Example], kind: str = "mixed", max_steps: int = DEFAULT_MAX_STEPS):
    r, n = greedy_rewards(bundle, examples, kind, max_steps)
    if not r:
        raise ValueError("empty validation set")
    return sum(r) / len(r), sum(n) / len(n)


def self_critical_step(batch: Sequence[Example], ts: TrainState, mode: str = "selector", reward_kind: str | None = None) -> float:
    """One advantage-weighted update from sampled generations; returns the batch mean reward."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode}")
    kind = reward_kind or ts.cfg.reward
    b = ts.bundle
    sel: SelectorModel = b.selector
    grad = np.zeros(len(sel.weights))
    updates: list[tuple] = []
    total = 0.0
    for ex in batch:
        sketch, trace = generate(b, _x0(b, ex), ts.rng, ts.cfg.max_steps)
        r = reward(sketch, ex.target, kind)
        total += r
        adv = r - reward(ts.baseline_sketch(ex), ex.target, kind)
        if adv == 0.0:
            continue
        for st in trace.steps:
            sel.grad_from(st.feats, st.probs, st.choice_index, grad, adv)
            if mode == "full" and st.position is not None:
                updates.append((st.state.items[st.position].name, st.sig, st.expansion, adv))
    if grad.any():
        # the batch loss is the sum of per-example losses
        sel.set_weights(sel.weights + ts.cfg.lr * grad)
    for kind_name, sig, e, adv in updates:
        b.expansion.observe(kind_name, sig, e, ts.cfg.count_lr * adv)
    return total / max(1, len(batch))


def _batches(n: int, cfg: TrainConfig, rng: random.Random) -> list[list[int]]:
    order = list(range(n))
    rng.shuffle(order)
    bs = cfg.batch_size
    out = [order[i : i + bs] for i in range(0, n, bs)]
    if cfg.batches_per_epoch is not None:
        out = out[: cfg.batches_per_epoch]
    return out


def run_rl(
    ts: TrainState,
    train: Sequence[Example],
    valid: Sequence[Example],
    mode: str,
    stage: str = "finetune",
    on_epoch: Callable[[dict], None] | None = None,
) -> ModelBundle:
    """Self-critical training with per-epoch validation and snapshot-based early stopping.

    Returns the best snapshot as a bundle (whose own snapshot is itself).
    """
    if not train:
        raise ValueError("empty training set")
    cfg = ts.cfg
    if ts.bundle.snapshot is None:
        ts.snapshot(validate(ts.bundle, valid, cfg.reward, cfg.max_steps)[0])
    ts.stale = 0
    for _ in range(cfg.epochs):
        ts.epoch += 1
        rs = []
        for idx in _batches(len(train), cfg, ts.rng):
            rs.append(self_critical_step([train[i] for i in idx], ts, mode))
        val, mean_len = validate(ts.bundle, valid, cfg.reward, cfg.max_steps)
        if val > ts.snapshot_reward:
            ts.snapshot(val)
            ts.stale = 0
        else:
            ts.stale += 1
        row = {
            "stage": stage,
            "epoch": ts.epoch,
            "mean_reward": sum(rs) / max(1, len(rs)),
            "valid_reward": val,
            "snapshot_reward": ts.snapshot_reward,
            "mean_len": mean_len,
        }
        ts.history.append(row)
        log.info("%s epoch %d: train %.4f valid %.4f best %.4f len %.2f", stage, ts.epoch, row["mean_reward"], val, ts.snapshot_reward, mean_len)
        if on_epoch:
            on_epoch(row)
        if ts.stale >= cfg.patience:
            break
    best = ts.bundle.snapshot_bundle()
    best.take_snapshot(ts.snapshot_reward)
    return best


def initial_bundle(g: Grammar, expansion: ExpansionModel, meta: dict | None = None) -> ModelBundle:
    return ModelBundle(g, SelectorModel(g.expandable_kinds()), expansion, None, dict(meta or {}))


def pretrain_expansion(train: Sequence[Example], g: Grammar, rng: random.Random, config: ExpansionConfig | None = None) -> ExpansionModel:
    if not train:
        raise ValueError("empty corpus")
    index = TreeIndex(g)
    return train_expansion_counts((make_expansion_traces(ex, g, rng, index) for ex in train), g, config)


def pretrain(
    train: Sequence[Example],
    valid: Sequence[Example],
    g: Grammar,
    cfg: TrainConfig | None = None,
    seed: int = 0,
    config: ExpansionConfig | None = None,
    history: list | None = None,
) -> ModelBundle:
    """Stage 1: expansion counts from uniform-order traces. Stage 2: selector-only RL, expansions frozen."""
    cfg = cfg or TrainConfig()
    rng = random.Random(f"{seed}:pretrain")
    exp = pretrain_expansion(train, g, rng, config)
    bundle = initial_bundle(g, exp, {"stage": "pretrained"})
    ts = TrainState(bundle, cfg, rng)
    out = run_rl(ts, train, valid or train, "selector", "pretrain")
    if history is not None:
        history.extend(ts.history)
    return out


def finetune(
    bundle: ModelBundle,
    train: Sequence[Example],
    valid: Sequence[Example],
    cfg: TrainConfig | None = None,
    seed: int = 0,
    mode: str = "full",
    history: list | None = None,
) -> ModelBundle:
    cfg = cfg or TrainConfig()
    b = bundle.copy()
    b.meta["stage"] = "finetuned"
    ts = TrainState(b, cfg, random.Random(f"{seed}:finetune:{cfg.reward}"))
    # the snapshot reward must be measured on this validation set and reward
    ts.snapshot(validate(b, valid or train, cfg.reward, cfg.max_steps)[0])
    out = run_rl(ts, train, valid or train, mode, "finetune")
    if history is not None:
        history.extend(ts.history)
    return out


LOG_FIELDS = ("stage", "epoch", "mean_reward", "valid_reward", "snapshot_reward", "mean_len")


def write_log(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([r["stage"], r["epoch"]] + [f"{r[k]:.6f}" for k in LOG_FIELDS[2:]])


# -- hole datasets for the sequence baselines --------------------------------


def hole_sketch(tree: ParseTree, p_hole: float, rng: random.Random) -> list:
    """Replace random subtrees (nonterminals and class leaves) by a hole; holed subtrees are not revisited."""
    out: list = []

    def walk(node: ParseTree):
        if node.symbol.expandable and rng.random() < p_hole:
            out.append(HOLE)
            return
        if node.token is not None:
            out.append(node.token.text)
            return
        for c in node.children:
            walk(c)

    walk(tree)
    return out


def synth_hole_dataset(
    examples: Sequence[Example], g: Grammar, p_hole: float = 0.15, rng: random.Random | None = None
) -> list[tuple[list[str], list]]:
    """(context, sketch) pairs whose sketches match their own targets by construction."""
    if not 0.0 < p_hole < 1.0:
        raise ValueError("p_hole must be in (0, 1)")
    rng = rng or random.Random(0)
    index = TreeIndex(g)
    return [(list(ex.context), hole_sketch(index.tree(ex), p_hole, rng)) for ex in examples]
