import os
import random
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from sketchgen.corpus import CorpusConfig, gen_corpus
from sketchgen.grammar import flatten, load_builtin, parse_grammar
from sketchgen.training import TrainConfig, pretrain


@pytest.fixture(scope="session")
def minilang():
    return load_builtin()


@pytest.fixture(scope="session")
def flat(minilang):
    return flatten(minilang)


@pytest.fixture(scope="session")
def corpus(minilang):
    return gen_corpus(CorpusConfig(num_files=40, seed=3), minilang)


@pytest.fixture(scope="session")
def bundle(corpus, flat):
    cfg = TrainConfig(epochs=2, batch_size=16, batches_per_epoch=3)
    return pretrain(corpus["train"], corpus["valid"][:60], flat, cfg, seed=5)


TOY_GRAMMARS = {
    # forced chains, a shared single-production helper, and recursion
    "chain": 'start S\nS -> A B\nA -> "x" C\nC -> "y"\nB -> "u" | "v"\n',
    "shared": 'start S\nS -> P "+" P | Q\nP -> "(" Q ")"\nQ -> R\nR -> "a" | "b" "c"\n',
    "recursive": 'start E\nE -> E Op T | T\nOp -> "-"\nT -> "n" | Par\nPar -> "(" E ")"\n',
}


@pytest.fixture(params=sorted(TOY_GRAMMARS))
def toy_grammar(request):
    return parse_grammar(TOY_GRAMMARS[request.param])


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory):
    """One full default-config pipeline run, shared by every slow test."""
    from sketchgen.pipeline import PipelineConfig, run_pipeline

    out = tmp_path_factory.mktemp("pipeline")
    run_pipeline(PipelineConfig(), out)
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(f"criterion {n}: {results[n]}")
