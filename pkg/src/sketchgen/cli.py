"""Command-line front end: corpus generation, training, completion, scoring and evaluation.

Every subcommand accepts ``--config FILE`` (a JSON object keyed by flag
destinations); explicit flags win over the file, the file over defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import random
import sys
from pathlib import Path

from .baselines import VARIANTS, BaselineTrainConfig, train_baselines, variant_name
from .corpus import CorpusConfig, gen_corpus, read_jsonl
from .engine import DEFAULT_MAX_STEPS, format_trace, generate
from .evaluation import (
    DEFAULT_BUCKETS,
    BeamConfig,
    MetricsReport,
    ablations_csv,
    bucket_report,
    evaluate,
    metrics_csv,
    predictor_for,
    run_ablations,
    summary_table,
)
from .grammar import GrammarError, flatten, load_builtin, parse_grammar
from .metrics import erase_holes, matches, n_tokens, regex_acc, render, reward, rouge_f1, sketch_from_tokens, to_matcher
from .models import ExpansionConfig, ModelBundle, ModelError, SketchState, load_model, save_model
from .pipeline import PipelineConfig, run_pipeline
from .syntax import Lexer, TokenizeError
from .training import TrainConfig, finetune, pretrain, synth_hole_dataset, write_log

log = logging.getLogger("sketchgen")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# -- shared option groups ----------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _unit_float(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {text}")
    return v


def _optional_int(text: str) -> int | None:
    if text.lower() in ("inf", "none", "all"):
        return None
    return _positive_int(text)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of option defaults (flag > config > built-in)")
    p.add_argument("--seed", type=int, default=1, help="seed for all randomness (default 1)")
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1, help="worker processes for example-parallel stages")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _grammar_opt(p):
    p.add_argument("--grammar", help="grammar file (default: built-in MiniLang)")


def _beam_opts(p):
    p.add_argument("-k", "--beam-k", type=_positive_int, default=5, help="beam width k (default 5)")
    p.add_argument("-n", "--beam-n", type=_optional_int, default=1, help="expansions kept per position, or inf (default 1)")
    p.add_argument("-m", "--beam-m", type=_optional_int, default=None, help="positions kept per candidate, or inf (default inf)")
    p.add_argument("--max-steps", type=_positive_int, default=DEFAULT_MAX_STEPS, help="selector decisions per generation (default 64)")


def _train_opts(p, epochs: int, count_lr: float):
    p.add_argument("--train", required=True, help="training split (JSON Lines)")
    p.add_argument("--valid", help="validation split (default: the training split)")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--lr", type=float, default=0.05, help="selector learning rate (default 0.05)")
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--epochs", type=_positive_int, default=epochs)
    p.add_argument("--batches-per-epoch", type=_optional_int, default=40, help="batches per epoch, or all")
    p.add_argument("--patience", type=_positive_int, default=5, help="epochs without improvement before stopping")
    p.add_argument("--count-lr", type=float, default=count_lr, help="scale of advantage-weighted count updates")
    p.add_argument("--reward", choices=("mixed", "rouge", "regex"), default="mixed")
    p.add_argument("--valid-size", type=_positive_int, default=1000, help="validation examples used per pass")
    p.add_argument("--log", help="write per-epoch training log CSV here")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sketchgen", description="Grammar-guided code sketch completion.")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("gen-corpus", help="generate a synthetic MiniLang corpus")
    _common(p)
    _grammar_opt(p)
    p.add_argument("--out", required=True, help="output directory for train/valid/test.jsonl")
    p.add_argument("--files", type=_positive_int, default=5000, help="number of synthetic files")
    p.add_argument("--p-local", type=_unit_float, default=0.3, help="chance a leaf lexeme comes from the file-local pool")
    p.add_argument("--context-len", type=_positive_int, default=200, help="context tokens kept per example")
    p.add_argument("--statements-min", type=_positive_int, default=5)
    p.add_argument("--statements-max", type=_positive_int, default=15)
    p.add_argument("--p-idiom", type=_unit_float, default=CorpusConfig.p_idiom, help="chance a statement is drawn from the idiom templates")
    p.add_argument("--p-repeat", type=_unit_float, default=CorpusConfig.p_repeat, help="chance an idiom repeats in the next statement")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("pretrain", help="count-pretrain expansions, then train the selector")
    _common(p)
    _grammar_opt(p)
    _train_opts(p, epochs=4, count_lr=1.0)
    p.add_argument("--discount", type=float, default=0.5, help="absolute discount of the expansion back-off")
    p.add_argument("--alpha", type=float, default=0.1, help="additive smoothing at the lowest order")
    p.add_argument("--unk-mass", type=_unit_float, default=0.05, help="unknown-lexeme mass of leaf distributions")
    p.add_argument("--max-steps", type=_positive_int, default=DEFAULT_MAX_STEPS)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="self-critical fine-tuning of a pretrained bundle")
    _common(p)
    p.add_argument("--model", required=True, help="pretrained bundle")
    _train_opts(p, epochs=10, count_lr=5.0)
    p.add_argument("--mode", choices=("full", "selector"), default="full", help="also update expansion counts (full) or not")
    p.add_argument("--max-steps", type=_positive_int, default=DEFAULT_MAX_STEPS)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("train-baseline", help="train a left-to-right sequence baseline")
    _common(p)
    _grammar_opt(p)
    p.add_argument("--variant", default="L2R", help=f"one of {', '.join(VARIANTS)} (aliases: l2r, stop, hole)")
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--out", required=True)
    p.add_argument("--p-hole", type=float, default=0.15, help="chance a subtree becomes a hole in the synthetic hole data")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--epochs", type=_positive_int, default=10)
    p.add_argument("--batches-per-epoch", type=_optional_int, default=40)
    p.add_argument("--patience", type=_positive_int, default=5)
    p.add_argument("--count-lr", type=float, default=20.0)
    p.add_argument("--reward", choices=("mixed", "rouge", "regex"), default="mixed")
    p.add_argument("--valid-size", type=_positive_int, default=1000)
    p.add_argument("--log")
    p.set_defaults(func=cmd_train_baseline)

    for name, func, text in (
        ("complete", cmd_complete, "print the top-k sketches for a context"),
        ("trace", cmd_trace, "print the step-by-step greedy generation for a context"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--model", required=True)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--context", help="context source text")
        src.add_argument("--context-file", help="file holding the context source text")
        _beam_opts(p)
        if name == "complete":
            p.add_argument("--trace", action="store_true", help="also print the greedy step table")
        p.set_defaults(func=func)

    p = sub.add_parser("score", help="score sketches against ground truths")
    _common(p)
    p.add_argument("--sketch", help="sketch tokens separated by spaces; holes written as ■")
    p.add_argument("--target", help="ground-truth tokens separated by spaces")
    p.add_argument("--pred", help='JSON Lines of sketches: token arrays or {"sketch": [...]}; holes as null or ■')
    p.add_argument("--gold", help='JSON Lines of ground truths: token arrays or corpus records with "target"')
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="compute metrics.csv (and buckets.csv) on a test split")
    _common(p)
    p.add_argument("--model", required=True, action="append", help="model file, optionally NAME=PATH; repeatable")
    p.add_argument("--test", required=True)
    p.add_argument("--out", default="metrics.csv", help="metrics CSV path (default metrics.csv)")
    p.add_argument("--buckets-out", help="also write length-bucket CSV here")
    p.add_argument("--buckets", default=",".join(map(str, DEFAULT_BUCKETS)), help="comma-separated bucket upper edges")
    _beam_opts(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="selector ablations on a test split")
    _common(p)
    p.add_argument("--model", required=True, help="fine-tuned bundle")
    p.add_argument("--test", required=True)
    p.add_argument("--valid", required=True, help="split used to pick the stop threshold")
    p.add_argument("--reward-model", action="append", default=[], help="KIND=PATH bundle trained with one reward; repeatable")
    p.add_argument("--valid-size", type=_positive_int, default=1000)
    p.add_argument("--out", default="ablations.csv")
    _beam_opts(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("reproduce", help="run the whole pipeline into one directory")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--files", type=_positive_int, default=5000)
    p.add_argument("--no-ablations", action="store_true", help="skip the ablation runs")
    p.set_defaults(func=cmd_reproduce)
    return ap


# -- helpers -----------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _grammar(path: str | None):
    if path is None:
        return load_builtin()
    return parse_grammar(Path(path).read_text(encoding="utf-8"))


def _context_tokens(args, model) -> list[str]:
    text = args.context if args.context is not None else Path(args.context_file).read_text(encoding="utf-8")
    g = model.grammar if isinstance(model, ModelBundle) else load_builtin()
    return [t.text for t in Lexer(g).tokenize(text)]


def _beam(args) -> BeamConfig:
    return BeamConfig(args.beam_k, args.beam_n, args.beam_m, args.max_steps)


def _split(path: str | None, limit: int | None = None):
    if path is None:
        return None
    exs = read_jsonl(path)
    if not exs:
        raise ValueError(f"{path}: no examples")
    return exs[:limit] if limit else exs


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        batches_per_epoch=args.batches_per_epoch,
        patience=args.patience,
        max_steps=args.max_steps,
        reward=args.reward,
        count_lr=args.count_lr,
    )


# -- subcommands ---------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    cfg = CorpusConfig(
        num_files=args.files,
        statements_min=args.statements_min,
        statements_max=args.statements_max,
        seed=args.seed,
        p_local=args.p_local,
        context_len=args.context_len,
        p_idiom=args.p_idiom,
        p_repeat=args.p_repeat,
    )
    data = gen_corpus(cfg, _grammar(args.grammar), args.out)
    for split, exs in data.items():
        print(f"{split}: {len(exs)} examples")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    g = flatten(_grammar(args.grammar))
    train = _split(args.train)
    valid = _split(args.valid, args.valid_size) or train[: args.valid_size]
    history: list = []
    cfg = _train_config(args)
    bundle = pretrain(train, valid, g, cfg, args.seed, ExpansionConfig(args.discount, args.alpha, args.unk_mass), history)
    save_model(bundle, args.out)
    if args.log:
        write_log(history, args.log)
    print(f"pretrained bundle written to {args.out} (validation reward {bundle.snapshot.reward:.4f})")
    return EXIT_OK


def cmd_finetune(args) -> int:
    bundle = load_model(args.model)
    if not isinstance(bundle, ModelBundle):
        raise ValueError(f"{args.model} is a sequence baseline, not a grammar bundle")
    train = _split(args.train)
    valid = _split(args.valid, args.valid_size) or train[: args.valid_size]
    history: list = []
    out = finetune(bundle, train, valid, _train_config(args), args.seed, args.mode, history)
    save_model(out, args.out)
    if args.log:
        write_log(history, args.log)
    print(f"fine-tuned bundle written to {args.out} (validation reward {out.snapshot.reward:.4f})")
    return EXIT_OK


def cmd_train_baseline(args) -> int:
    name = variant_name(args.variant)
    train = _split(args.train)
    valid = _split(args.valid, args.valid_size) or train[: args.valid_size]
    holes = None
    if name == "L2R+hole":
        g = flatten(_grammar(args.grammar))
        holes = synth_hole_dataset(train, g, args.p_hole, random.Random(f"{args.seed}:holes"))
    cfg = BaselineTrainConfig(args.lr, args.batch_size, args.epochs, args.batches_per_epoch, args.patience, args.count_lr, args.reward)
    model = train_baselines(train, valid, [name], holes, cfg, args.seed)[name]
    save_model(model, args.out)
    if args.log:
        write_log(cfg.history, args.log)
    print(f"{name} baseline written to {args.out}")
    return EXIT_OK


def _print_trace(bundle, context) -> None:
    if not isinstance(bundle, ModelBundle):
        raise ValueError("traces need a grammar bundle")
    x0 = SketchState.initial(bundle.root, context)
    _, trace = generate(bundle, x0, None, DEFAULT_MAX_STEPS, greedy=True)
    for line in format_trace(trace):
        print(line)


def cmd_complete(args) -> int:
    model = load_model(args.model)
    ctx = _context_tokens(args, model)
    for sketch, score in predictor_for(model, _beam(args)).predict(ctx):
        print(f"{score:.4f}\t{render(sketch)}")
    if args.trace:
        print()
        _print_trace(model, ctx)
    return EXIT_OK


def cmd_trace(args) -> int:
    model = load_model(args.model)
    _print_trace(model, _context_tokens(args, model))
    return EXIT_OK


SCORE_FIELDS = ("index", "regex_acc", "match", "n_tokens", "rouge_l", "rouge_1", "rouge_2", "reward")


def _score_row(sketch, gt) -> list[float]:
    erased = erase_holes(sketch)
    return [
        regex_acc(sketch, gt),
        matches(to_matcher(sketch), gt),
        n_tokens(sketch),
        rouge_f1(erased, gt, "RL"),
        rouge_f1(erased, gt, "R1"),
        rouge_f1(erased, gt, "R2"),
        reward(sketch, gt),
    ]


def _token_records(path: str, key: str) -> list[list]:
    """Token arrays from JSON Lines; each line is an array or an object holding one under ``key``."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                toks = rec[key] if isinstance(rec, dict) else rec
                if not isinstance(toks, list):
                    raise TypeError("expected a token array")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record ({exc})") from exc
            out.append(toks)
    return out


def cmd_score(args) -> int:
    if args.pred or args.gold:
        if not (args.pred and args.gold) or args.sketch or args.target:
            raise UsageError("use --pred with --gold, or --sketch with --target")
        preds = [sketch_from_tokens(t) for t in _token_records(args.pred, "sketch")]
        golds = [list(t) for t in _token_records(args.gold, "target")]
        if len(preds) != len(golds):
            raise ValueError(f"{len(preds)} sketches but {len(golds)} ground truths")
    elif args.sketch is not None and args.target is not None:
        preds, golds = [sketch_from_tokens(args.sketch.split())], [args.target.split()]
    else:
        raise UsageError("score needs --sketch and --target, or --pred and --gold")
    rows = [_score_row(p, g) for p, g in zip(preds, golds)]
    if not rows:
        raise ValueError("nothing to score")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(SCORE_FIELDS)
    for idx, r in enumerate(rows):
        w.writerow([idx] + [f"{v:.6f}" if isinstance(v, float) else v for v in r])
    means = [sum(col) / len(rows) for col in zip(*rows)]
    w.writerow(["mean"] + [f"{v:.6f}" for v in means])
    return EXIT_OK


def _named_models(specs: list[str]) -> list[tuple[str, object]]:
    out = []
    for spec in specs:
        name, _, path = spec.rpartition("=")
        path = path or spec
        model = load_model(path)
        out.append((name or Path(path).stem, model))
    return out


def cmd_evaluate(args) -> int:
    try:
        edges = tuple(int(e) for e in args.buckets.split(",") if e.strip())
    except ValueError:
        raise UsageError(f"bad --buckets value {args.buckets!r}") from None
    test = _split(args.test)
    report = MetricsReport()
    for name, model in _named_models(args.model):
        report.extend(evaluate(model, test, name, _beam(args), args.jobs))
    Path(args.out).write_text(metrics_csv(report))
    if args.buckets_out:
        Path(args.buckets_out).write_text(bucket_report(report, edges))
    print(summary_table(report))
    return EXIT_OK


def cmd_ablate(args) -> int:
    bundle = load_model(args.model)
    if not isinstance(bundle, ModelBundle):
        raise ValueError(f"{args.model} is not a grammar bundle")
    reward_bundles = {}
    for spec in args.reward_model:
        kind, sep, path = spec.partition("=")
        if not sep or kind not in ("rouge", "regex", "mixed"):
            raise UsageError(f"--reward-model expects KIND=PATH with KIND rouge/regex/mixed, got {spec!r}")
        reward_bundles[kind] = load_model(path)
    rows, split = run_ablations(bundle, _split(args.test), _split(args.valid, args.valid_size), reward_bundles, _beam(args), jobs=args.jobs)
    Path(args.out).write_text(ablations_csv(rows, split))
    for a in rows:
        r = a.row
        print(f"{a.variant:<26}{r.regex_acc_top1:>8.3f}{r.avg_sketch_length:>7.2f}  {a.param}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = PipelineConfig()
    if args.pipeline:
        cfg = PipelineConfig.from_json(args.pipeline)
    cfg.seed = args.seed
    cfg.corpus.num_files = args.files
    cfg.jobs = args.jobs
    if args.no_ablations:
        cfg.ablations = False
    res = run_pipeline(cfg, args.out)
    print(summary_table(res.report))
    print(f"validation reward: pretrained {res.pretrained_valid_reward:.4f}, fine-tuned {res.finetuned_valid_reward:.4f}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def _parse(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse argv with values from --config sitting between flags and defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices
    cmd = argv[0] if argv else None
    pipeline = None
    if known.config and cmd in subs:
        config = _load_config(known.config)
        sub = subs[cmd]
        if cmd == "reproduce":
            pipeline = config.pop("pipeline", None)
        actions = {a.dest: a for a in sub._actions}
        unknown = sorted(set(config) - set(actions) - {"help", "config"})
        if unknown:
            raise UsageError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
        for k in config:
            actions[k].required = False
        sub.set_defaults(**config)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise SystemExit(EXIT_USAGE)
    args.pipeline = pipeline
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sketchgen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"sketchgen: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    usage = parser._subparsers._group_actions[0].choices[args.command].format_usage()

    def fail(msg: str, code: int) -> int:
        sys.stderr.write(usage)
        print(f"sketchgen {args.command}: error: {msg}", file=sys.stderr)
        return code

    try:
        return args.func(args)
    except UsageError as exc:
        return fail(str(exc), EXIT_USAGE)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return fail(f"cannot read {exc.filename}: {exc.strerror}", EXIT_DATA)
    except (ModelError, GrammarError, TokenizeError, ValueError, OSError) as exc:
        return fail(str(exc), EXIT_DATA)
    except Exception as exc:  # anything else is a broken invariant
        log.exception("internal error")
        print(f"sketchgen {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
