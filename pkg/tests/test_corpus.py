import json
from collections import Counter

import pytest

from sketchgen.corpus import (
    GLOBAL_IDENTS,
    GLOBAL_NUMBERS,
    GLOBAL_STRINGS,
    IDIOMS,
    CorpusConfig,
    FileSampler,
    gen_corpus,
    read_jsonl,
    split_of,
    zipf_weights,
)
from sketchgen.syntax import EarleyParser, Lexer

TEMPLATE_WORDS = {w for t in IDIOMS for w in t.split() if not w.startswith("$")}


def _leaves_by_class(g, cfg, files):
    sampler = FileSampler(g, cfg)
    lexer = Lexer(g)
    out = []
    for fid in range(files):
        toks = [lexer.classify(t) for t in sampler.sample_file(fid).leaves()]
        out.append(toks)
    return out


def test_deterministic_files(tmp_path, minilang):
    cfg = CorpusConfig(num_files=1, seed=3)
    gen_corpus(cfg, minilang, tmp_path / "a")
    gen_corpus(cfg, minilang, tmp_path / "b")
    for name in ("train.jsonl", "valid.jsonl", "test.jsonl", "corpus.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_jsonl_format(tmp_path, minilang):
    data = gen_corpus(CorpusConfig(num_files=12, seed=2), minilang, tmp_path)
    for split in ("train", "valid", "test"):
        lines = (tmp_path / f"{split}.jsonl").read_text().splitlines()
        assert len(lines) == len(data[split])
        for line in lines:
            rec = json.loads(line)
            assert set(rec) == {"context", "target", "file_id"}
            assert rec["target"]
        back = read_jsonl(tmp_path / f"{split}.jsonl")
        assert [(e.context, e.target) for e in back] == [(e.context, e.target) for e in data[split]]


def test_global_only(minilang):
    pools = {
        "IDENT": set(GLOBAL_IDENTS) | TEMPLATE_WORDS,
        "STRING": set(GLOBAL_STRINGS) | TEMPLATE_WORDS,
        "NUMBER": set(GLOBAL_NUMBERS) | TEMPLATE_WORDS,
    }
    for toks in _leaves_by_class(minilang, CorpusConfig(p_local=0.0, seed=4), 200):
        for t in toks:
            if t.cls is not None:
                assert t.text in pools[t.cls]


@pytest.mark.parametrize("p_idiom", [0.0, 0.7])
def test_local_pools_do_not_overlap(minilang, p_idiom):
    files = _leaves_by_class(minilang, CorpusConfig(p_local=1.0, seed=5, p_idiom=p_idiom), 1000)
    per_file = [{t.text for t in toks if t.cls == "IDENT"} - TEMPLATE_WORDS for toks in files]
    owners = Counter(w for s in per_file for w in s)
    total = sum(len(s) for s in per_file)
    shared = sum(1 for s in per_file for w in s if owners[w] > 1)
    assert total > 1000
    assert shared / total < 0.05


def test_split_ratio():
    s = split_of(list(range(1000)), 7)
    c = Counter(s.values())
    assert (c["train"], c["valid"], c["test"]) == (700, 100, 200)
    assert split_of(list(range(1000)), 7) == s


def test_test_split_one_per_file(corpus):
    ids = [e.file_id for e in corpus["test"]]
    assert len(ids) == len(set(ids))
    train_ids = {e.file_id for e in corpus["train"]}
    assert not train_ids & set(ids)


def test_targets_parse(corpus, minilang):
    parser = EarleyParser(minilang)
    for ex in corpus["train"][:200]:
        assert parser.parse_strings(ex.target, minilang.start).leaves() == ex.target


def test_zipf():
    w = zipf_weights(5, 1.2)
    assert abs(sum(w) - 1.0) < 1e-12
    assert all(a > b for a, b in zip(w, w[1:]))
    assert w[0] / w[1] == pytest.approx(2**1.2)


@pytest.mark.parametrize("kw", [{"p_local": 1.5}, {"p_idiom": -0.1}, {"statements_min": 0}])
def test_bad_config(kw):
    with pytest.raises(ValueError):
        CorpusConfig(**kw)
