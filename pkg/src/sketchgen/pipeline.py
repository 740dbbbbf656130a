"""End-to-end run: corpus, pretraining, fine-tuning, baselines, evaluation and ablations."""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .baselines import BaselineTrainConfig, train_baselines
from .corpus import CorpusConfig, gen_corpus
from .evaluation import (
    DEFAULT_BUCKETS,
    BeamConfig,
    MetricsReport,
    ablations_csv,
    bucket_report,
    evaluate,
    metrics_csv,
    run_ablations,
)
from .grammar import flatten, load_builtin
from .models import ExpansionConfig, save_model
from .training import TrainConfig, finetune, pretrain, synth_hole_dataset, validate, write_log

log = logging.getLogger(__name__)


def _pretrain_defaults() -> TrainConfig:
    return TrainConfig(epochs=4, batches_per_epoch=40)


def _finetune_defaults() -> TrainConfig:
    return TrainConfig(epochs=10, batches_per_epoch=40, count_lr=5.0)


def _corpus_defaults() -> CorpusConfig:
    return CorpusConfig(num_files=6200)  # about 50k examples over the three splits


def _baseline_defaults() -> BaselineTrainConfig:
    return BaselineTrainConfig(epochs=10, batches_per_epoch=40, count_lr=20.0)


@dataclass
class PipelineConfig:
    seed: int = 1
    corpus: CorpusConfig = field(default_factory=_corpus_defaults)
    expansion: ExpansionConfig = field(default_factory=ExpansionConfig)
    pretrain: TrainConfig = field(default_factory=_pretrain_defaults)
    finetune: TrainConfig = field(default_factory=_finetune_defaults)
    baseline: BaselineTrainConfig = field(default_factory=_baseline_defaults)
    beam: BeamConfig = field(default_factory=BeamConfig)
    valid_size: int = 1000
    p_hole: float = 0.15
    buckets: tuple = DEFAULT_BUCKETS
    ablations: bool = True
    jobs: int = 1  # worker processes for evaluation; results do not depend on it

    def to_json(self) -> dict:
        d = asdict(self)
        d["baseline"].pop("history", None)
        return d

    @classmethod
    def from_json(cls, data: dict) -> "PipelineConfig":
        return _build(cls, data)


def _build(tp, data: dict):
    kwargs = {}
    names = {f.name: f for f in fields(tp)}
    for k, v in data.items():
        if k not in names:
            raise ValueError(f"unknown config key {k}")
        default = getattr(tp(), k) if k in names else None
        if is_dataclass(default) and isinstance(v, dict):
            v = _build(type(default), v)
        elif isinstance(default, tuple) and isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    return tp(**kwargs)


@dataclass
class PipelineResult:
    report: MetricsReport
    pretrained_valid_reward: float
    finetuned_valid_reward: float
    ablation_rows: list
    timings: dict


def run_pipeline(cfg: PipelineConfig, out_dir: str | Path) -> PipelineResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    timings = {}

    def lap(name):
        nonlocal t0
        now = time.perf_counter()
        timings[name] = now - t0
        t0 = now
        log.info("%s done in %.1fs", name, timings[name])

    cfg.corpus.seed = cfg.seed
    g_raw = load_builtin()
    data = gen_corpus(cfg.corpus, g_raw, out / "corpus")
    train, valid_all, test = data["train"], data["valid"], data["test"]
    valid = valid_all[: cfg.valid_size]
    g = flatten(g_raw)
    lap("corpus")

    history: list = []
    pre = pretrain(train, valid, g, cfg.pretrain, cfg.seed, cfg.expansion, history)
    save_model(pre, out / "pretrained.json")
    lap("pretrain")
    fine = finetune(pre, train, valid, cfg.finetune, cfg.seed, "full", history)
    save_model(fine, out / "model.json")
    lap("finetune")
    pre_r = validate(pre, valid, cfg.finetune.reward)[0]
    fine_r = validate(fine, valid, cfg.finetune.reward)[0]

    holes = synth_hole_dataset(train, g, cfg.p_hole, random.Random(f"{cfg.seed}:holes"))
    bcfg = cfg.baseline
    baselines = train_baselines(train, valid, hole_data=holes, cfg=bcfg, seed=cfg.seed)
    history.extend(bcfg.history)
    bcfg.history = []
    for name, m in baselines.items():
        save_model(m, out / f"baseline_{name.replace('+', '_')}.json")
    write_log(history, out / "training_log.csv")
    lap("baselines")

    report = MetricsReport()
    report.extend(evaluate(pre, test, "pretrained", cfg.beam, cfg.jobs))
    report.extend(evaluate(fine, test, "grammformer", cfg.beam, cfg.jobs))
    for name, m in baselines.items():
        report.extend(evaluate(m, test, name, cfg.beam, cfg.jobs))
    (out / "metrics.csv").write_text(metrics_csv(report))
    (out / "buckets.csv").write_text(bucket_report(report, cfg.buckets))
    lap("evaluate")

    rows = []
    if cfg.ablations:
        reward_bundles = {}
        # single-reward variants use that reward in both selector pretraining and fine-tuning
        for kind in ("rouge", "regex"):
            pc = TrainConfig(**{**asdict(cfg.pretrain), "reward": kind})
            fc = TrainConfig(**{**asdict(cfg.finetune), "reward": kind})
            pre_k = pretrain(train, valid, g, pc, cfg.seed, cfg.expansion)
            reward_bundles[kind] = finetune(pre_k, train, valid, fc, cfg.seed, "full")
            save_model(reward_bundles[kind], out / f"model_reward_{kind}.json")
        rows, split = run_ablations(fine, test, valid, reward_bundles, cfg.beam, jobs=cfg.jobs)
        (out / "ablations.csv").write_text(ablations_csv(rows, split))
        lap("ablations")

    summary = {
        "pretrained_valid_reward": pre_r,
        "finetuned_valid_reward": fine_r,
        "examples": {k: len(v) for k, v in data.items()},
        "timings": timings,
        "config": cfg.to_json(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return PipelineResult(report, pre_r, fine_r, rows, timings)
