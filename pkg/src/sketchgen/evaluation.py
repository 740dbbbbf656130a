"""Evaluation protocol: RegexAcc@1/@5, ROUGE, sketch length, length buckets and ablations."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .engine import DEFAULT_MAX_STEPS, Decoder, beam_search
from .metrics import erase_holes, matches, n_tokens, regex_acc, reward, rouge_f1, to_matcher
from .models import NoStopSelector, SketchState, UniformSelector, context_key
from .syntax import Example


@dataclass
class BeamConfig:
    k: int = 5
    n: int | None = 1
    m: int | None = None
    max_steps: int = DEFAULT_MAX_STEPS


class GrammarPredictor:
    """Beam search over derivations for any selector/expansion pair."""

    def __init__(self, models, root, beam: BeamConfig | None = None):
        self.models = models
        self.root = root
        self.beam = beam or BeamConfig()

    def predict(self, context: Sequence[str]) -> list[tuple[list, float]]:
        b = self.beam
        x0 = SketchState.initial(self.root, context)
        return beam_search(self.models, x0, b.k, b.n, b.m, b.max_steps)


class SequencePredictor:
    def __init__(self, model, beam: BeamConfig | None = None):
        self.model = model
        self.beam = beam or BeamConfig()

    def predict(self, context: Sequence[str]) -> list[tuple[list, float]]:
        return self.model.beam(context, self.beam.k, self.beam.max_steps)


def predictor_for(model, beam: BeamConfig | None = None):
    if hasattr(model, "predict"):
        return model
    if hasattr(model, "selector"):
        return GrammarPredictor(model, model.grammar.start, beam)
    return SequencePredictor(model, beam)


@dataclass
class ExampleRecord:
    model: str
    index: int
    gt_len: int
    top1: float
    top5: float
    rouge_l: float
    rouge_1: float
    rouge_2: float
    sketch_len: int
    match: int


@dataclass
class ModelRow:
    model: str
    regex_acc_top1: float
    regex_acc_top5: float
    rouge_l: float
    rouge_1: float
    rouge_2: float
    avg_sketch_length: float
    n: int


@dataclass
class MetricsReport:
    rows: list[ModelRow] = field(default_factory=list)
    records: list[ExampleRecord] = field(default_factory=list)
    split_hash: str = ""

    def row(self, model: str) -> ModelRow:
        for r in self.rows:
            if r.model == model:
                return r
        raise KeyError(model)

    def extend(self, other: "MetricsReport"):
        if self.split_hash and other.split_hash and self.split_hash != other.split_hash:
            raise ValueError("reports come from different test splits")
        self.split_hash = self.split_hash or other.split_hash
        self.rows.extend(other.rows)
        self.records.extend(other.records)


def split_hash(examples: Iterable[Example]) -> str:
    h = hashlib.sha256()
    for ex in examples:
        h.update(json.dumps([ex.context, ex.target], ensure_ascii=False).encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


_worker_pred = None


def _init_worker(pred):
    global _worker_pred
    _worker_pred = pred


def _predict_one(context):
    return _worker_pred.predict(context)


def predict_all(pred, contexts: Sequence[Sequence[str]], jobs: int = 1) -> list:
    """Predictions for each context, in order; ``jobs`` > 1 spreads them over worker processes."""
    if jobs <= 1 or len(contexts) < 2:
        return [pred.predict(c) for c in contexts]
    chunk = max(1, len(contexts) // (4 * jobs))
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(pred,)) as pool:
        return list(pool.map(_predict_one, contexts, chunksize=chunk))


def evaluate(
    model, test: Sequence[Example], name: str = "model", beam: BeamConfig | None = None, jobs: int = 1
) -> MetricsReport:
    """Score the top-k candidates of ``model`` on every test example.

    Models here see only the last few context tokens, so predictions are
    shared between examples with the same context key.
    """
    pred = predictor_for(model, beam)
    first: dict = {}
    for ex in test:
        first.setdefault(context_key(ex.context), ex.context)
    cache = dict(zip(first, predict_all(pred, list(first.values()), jobs)))
    records = []
    for idx, ex in enumerate(test):
        cands = cache[context_key(ex.context)]
        gt = ex.target
        if cands:
            best = cands[0][0]
            top5 = max(regex_acc(s, gt) for s, _ in cands[:5])
        else:
            best, top5 = [], 0.0
        erased = erase_holes(best)
        records.append(
            ExampleRecord(
                name, idx, len(gt), regex_acc(best, gt), top5,
                rouge_f1(erased, gt, "RL"), rouge_f1(erased, gt, "R1"), rouge_f1(erased, gt, "R2"),
                n_tokens(best), matches(to_matcher(best), gt),
            )
        )
    n = len(records)
    if n == 0:
        raise ValueError("empty test set")

    def mean(attr):
        return sum(getattr(r, attr) for r in records) / n

    row = ModelRow(name, mean("top1"), mean("top5"), mean("rouge_l"), mean("rouge_1"), mean("rouge_2"), mean("sketch_len"), n)
    return MetricsReport([row], records, split_hash(test))


def _fmt(x: float) -> str:
    return f"{x:.6f}"


METRIC_FIELDS = ("model", "regex_acc_top1", "regex_acc_top5", "rouge_l", "rouge_1", "rouge_2", "avg_sketch_length", "n")


def metrics_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for r in report.rows:
        w.writerow([r.model] + [_fmt(getattr(r, f)) for f in METRIC_FIELDS[1:-1]] + [r.n])
    return buf.getvalue()


DEFAULT_BUCKETS = (3, 6, 10, 15, 25)


def _bucket_label(lo: int, hi: float) -> str:
    return f"{lo}+" if math.isinf(hi) else f"{lo}-{int(hi)}"


def bucket_rows(report: MetricsReport, edges: Sequence[int] = DEFAULT_BUCKETS) -> list[tuple]:
    """(bucket, model, mean_len, pct_match, n) per ground-truth length bucket, empty buckets included."""
    bounds = []
    lo = 1
    for e in list(edges) + [math.inf]:
        bounds.append((lo, e))
        lo = int(e) + 1 if not math.isinf(e) else lo
    models = list(dict.fromkeys(r.model for r in report.records))
    out = []
    for model in models:
        recs = [r for r in report.records if r.model == model]
        for lo, hi in bounds:
            sel = [r for r in recs if lo <= r.gt_len <= hi]
            n = len(sel)
            mean_len = sum(r.sketch_len for r in sel) / n if n else 0.0
            pct = 100.0 * sum(r.match for r in sel) / n if n else 0.0
            out.append((_bucket_label(lo, hi), model, mean_len, pct, n))
    return out


def bucket_report(report: MetricsReport, edges: Sequence[int] = DEFAULT_BUCKETS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("bucket", "model", "mean_len", "pct_match", "n"))
    for label, model, mean_len, pct, n in bucket_rows(report, edges):
        w.writerow((label, model, _fmt(mean_len), _fmt(pct), n))
    return buf.getvalue()


# -- ablations ---------------------------------------------------------------

THRESHOLDS = (-1.0, -2.0, -3.0, -4.0, -6.0, -8.0, -12.0, -16.0)


@dataclass
class AblationRow:
    variant: str
    row: ModelRow
    param: str = ""


def choose_threshold(expansion, root, valid: Sequence[Example], beam: BeamConfig | None = None, grid: Sequence[float] = THRESHOLDS) -> float:
    """Grid-search the stop threshold by mean validation reward of the top-1 sketch."""
    best_t, best_r = None, -1.0
    for t in grid:
        pred = GrammarPredictor(Decoder(UniformSelector(t), expansion), root, beam)
        cache: dict = {}
        total = 0.0
        for ex in valid:
            key = context_key(ex.context)
            if key not in cache:
                cache[key] = pred.predict(ex.context)[0][0]
            total += reward(cache[key], ex.target)
        r = total / max(1, len(valid))
        if r > best_r:
            best_t, best_r = t, r
    return best_t


def run_ablations(
    bundle,
    test: Sequence[Example],
    valid: Sequence[Example],
    reward_bundles: dict | None = None,
    beam: BeamConfig | None = None,
    grid: Sequence[float] = THRESHOLDS,
    jobs: int = 1,
) -> tuple[list[AblationRow], str]:
    """Evaluate the selector ablations on one test split; returns rows and the split hash.

    ``reward_bundles`` maps a reward name ("rouge", "regex") to a bundle
    trained with that reward alone.
    """
    root = bundle.grammar.start
    exp = bundle.expansion
    rows = []

    def add(variant, models, param=""):
        rep = evaluate(GrammarPredictor(models, root, beam), test, variant, jobs=jobs)
        rows.append(AblationRow(variant, rep.rows[0], param))

    add("grammformer", bundle)
    add("random_expansion_no_stop", Decoder(UniformSelector(None), exp))
    tau = choose_threshold(exp, root, valid, beam, grid)
    add("stop_at_threshold", Decoder(UniformSelector(tau), exp), f"tau={tau:g}")
    add("no_stop", Decoder(NoStopSelector(bundle.selector), exp))
    for kind, b in (reward_bundles or {}).items():
        add(f"reward_{kind}", b)
    return rows, split_hash(test)


ABLATION_FIELDS = ("variant", "regex_acc_top1", "regex_acc_top5", "rouge_l", "avg_sketch_length", "n", "param")


def ablations_csv(rows: Sequence[AblationRow], split: str) -> str:
    buf = io.StringIO()
    buf.write(f"# split_hash={split}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ABLATION_FIELDS)
    for a in rows:
        r = a.row
        w.writerow((a.variant, _fmt(r.regex_acc_top1), _fmt(r.regex_acc_top5), _fmt(r.rouge_l), _fmt(r.avg_sketch_length), r.n, a.param))
    return buf.getvalue()


def summary_table(report: MetricsReport) -> str:
    lines = [f"{'model':<16}{'acc@1':>8}{'acc@5':>8}{'rougeL':>8}{'len':>7}"]
    for r in report.rows:
        lines.append(f"{r.model:<16}{r.regex_acc_top1:>8.3f}{r.regex_acc_top5:>8.3f}{r.rouge_l:>8.3f}{r.avg_sketch_length:>7.2f}")
    return "\n".join(lines)
