"""Synthetic MiniLang corpus: files of sampled statements with file-local identifiers."""

from __future__ import annotations

import json
import random
import string
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

from .grammar import Grammar, load_builtin, nonterminal, sample_derivation
from .syntax import EarleyParser, Example, ParseTree, extract_examples, tree_from_choices

# Sampling weights for the built-in grammar, keyed by production text.
MINILANG_WEIGHTS = {
    'Statement -> Assign': 50,
    'Statement -> AugAssign': 8,
    'Statement -> Call': 32,
    'Statement -> Return': 10,
    'AugOp -> "+="': 3,
    'AugOp -> "-="': 1,
    'Target -> IDENT': 70,
    'Target -> Primary "." IDENT': 25,
    'Target -> Primary "[" Expr "]"': 5,
    'Expr -> Expr BinOp Primary': 18,
    'Expr -> Primary': 82,
    'BinOp -> "+"': 40,
    'BinOp -> "-"': 20,
    'BinOp -> "*"': 25,
    'BinOp -> "/"': 15,
    'Primary -> IDENT': 40,
    'Primary -> NUMBER': 16,
    'Primary -> STRING': 10,
    'Primary -> Paren': 3,
    'Primary -> Call': 12,
    'Primary -> Primary "." IDENT': 15,
    'Primary -> Primary "[" Expr "]"': 4,
    'Call -> Primary "(" Args ")"': 75,
    'Call -> Primary "(" ")"': 25,
    'Args -> Arg': 65,
    'Args -> Arg "," Args': 35,
    'Arg -> Expr': 75,
    'Arg -> KwArg': 25,
}

# Common statement shapes, most frequent first; $I, $S and $N are IDENT,
# STRING and NUMBER slots filled from the file's lexeme pools.
IDIOMS = (
    "$I = $I",
    "self . $I = $I",
    "$I += 1",
    "return $I",
    "$I . append ( $I )",
    "$I = $I ( $I )",
    "logger . info ( $S )",
    "$I = self . $I",
    "print ( $I )",
    "ap . add_argument ( $S , action = \"store_true\" )",
    "$I = $N",
    "return self . $I",
    "$I [ $S ] = $I",
    "$I = len ( $I )",
    "super ( ) . __init__ ( )",
    "$I = $I . get ( $S , $I )",
    "ap . add_argument ( $S , type = int , default = $N )",
    "$I = os . path . join ( $I , $S )",
    "self . $I = $N",
    "$I = np . zeros ( $N )",
    "$I -= 1",
    "return None",
    "$I = open ( $I , \"r\" )",
    "$I . close ( )",
    "logger . info ( $S , $I )",
    "$I = $I + 1",
    "self . $I . update ( $I )",
    "$I = $I [ $N ]",
    "$I = $I . split ( $S )",
    "ap . add_argument ( $S , default = $S )",
)
SLOTS = {"$I": "IDENT", "$S": "STRING", "$N": "NUMBER"}

GLOBAL_IDENTS = (
    "x y i self args data result value name path os np ap add_argument append get items "
    "config model logger info len print range foo bar count total index key item line text "
    "file out buf size parser options state node parent child left right width height start "
    "end msg err user request response client token score weights grad loss step batch epoch "
    "lr rate mean std format join split strip update load save open read write close run main "
    "setdefault pop insert extend copy sort keys values n j k t args2 tmp val obj cls module "
    "env ctx"
).split()
GLOBAL_STRINGS = [
    f'"{w}"'
    for w in (
        "name --verbose --experimental store_true store_false utf-8 r w id type value data "
        "error ok default --input --output %s /tmp key label text debug info warning path "
        "json csv main test train"
    ).split()
]
GLOBAL_NUMBERS = [str(v) for v in (0, 1, 2, 10, 3, 100, 5, 4, 8, 255, 1000, 16, 32, 64, 7, 9)]


@dataclass
class CorpusConfig:
    num_files: int = 5000
    statements_min: int = 5
    statements_max: int = 15
    seed: int = 1
    p_local: float = 0.3
    context_len: int = 200
    zipf_exponent: float = 1.2
    local_idents: int = 6
    local_strings: int = 3
    p_idiom: float = 0.7
    p_repeat: float = 0.8  # chance the next statement reuses the previous idiom

    def __post_init__(self):
        if not 0.0 <= self.p_local <= 1.0:
            raise ValueError("p_local must be in [0, 1]")
        for name in ("p_idiom", "p_repeat"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.statements_min < 1 or self.statements_max < self.statements_min:
            raise ValueError("bad statements_per_file range")


def zipf_weights(n: int, exponent: float) -> list[float]:
    w = [1.0 / (r**exponent) for r in range(1, n + 1)]
    z = sum(w)
    return [v / z for v in w]


def _fresh_name(rng: random.Random, taken: set[str]) -> str:
    while True:
        name = "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(5, 8)))
        if name not in taken:
            taken.add(name)
            return name


def weights_for(g: Grammar, table: dict[str, float] | None = None) -> dict:
    table = MINILANG_WEIGHTS if table is None else table
    return {p: float(table.get(str(p), 1.0)) for p in g.productions}


class FileSampler:
    """Draws the statements of one synthetic file."""

    def __init__(self, g: Grammar, cfg: CorpusConfig, weights: dict | None = None):
        self.g = g
        self.cfg = cfg
        self.weights = weights if weights is not None else weights_for(g)
        z = cfg.zipf_exponent
        self.global_pools = {
            "IDENT": list(zip(GLOBAL_IDENTS, zipf_weights(len(GLOBAL_IDENTS), z))),
            "STRING": list(zip(GLOBAL_STRINGS, zipf_weights(len(GLOBAL_STRINGS), z))),
            "NUMBER": list(zip(GLOBAL_NUMBERS, zipf_weights(len(GLOBAL_NUMBERS), z))),
        }
        self._reserved = set(GLOBAL_IDENTS) | set(g.literals)
        self.idioms = [t.split() for t in IDIOMS] if set(SLOTS.values()) <= set(g.token_classes) else []
        self.idiom_weights = zipf_weights(len(self.idioms), z) if self.idioms else []
        self._parser = EarleyParser(g)

    def pools(self, rng: random.Random) -> dict[str, list[tuple[str, float]]]:
        p = self.cfg.p_local
        taken = set(self._reserved)
        local = {
            "IDENT": [_fresh_name(rng, taken) for _ in range(self.cfg.local_idents)],
            "STRING": [f'"{_fresh_name(rng, taken)}"' for _ in range(self.cfg.local_strings)],
        }
        out = {}
        for cls, pool in self.global_pools.items():
            entries = [(w, (1.0 - p) * q) for w, q in pool] if cls in local else list(pool)
            if cls in local:
                entries += [(w, p / len(local[cls])) for w in local[cls]]
            out[cls] = [(w, q) for w, q in entries if q > 0]
        for cls in self.g.token_classes:
            out.setdefault(cls, [("_", 1.0)])
        return out

    def _idiom(self, tmpl: list[str], pools, rng: random.Random) -> ParseTree:
        toks = []
        for t in tmpl:
            cls = SLOTS.get(t)
            if cls is None:
                toks.append(t)
            else:
                words, w = pools[cls]
                toks.append(rng.choices(words, weights=w)[0])
        return self._parser.parse_strings(toks, self.g.start)

    def sample_file(self, file_id: int) -> ParseTree:
        rng = random.Random(f"{self.cfg.seed}:{file_id}")
        pools = self.pools(rng)
        flat = {cls: tuple(zip(*entries)) for cls, entries in pools.items()}
        n = rng.randint(self.cfg.statements_min, self.cfg.statements_max)
        stmts = []
        prev = None
        for _ in range(n):
            if prev is not None and rng.random() < self.cfg.p_repeat:
                stmts.append(self._idiom(prev, flat, rng))
            elif self.idioms and rng.random() < self.cfg.p_idiom:
                prev = rng.choices(self.idioms, weights=self.idiom_weights)[0]
                stmts.append(self._idiom(prev, flat, rng))
            else:
                prev = None
                _, trace = sample_derivation(self.g, self.weights, pools, rng)
                stmts.append(tree_from_choices(self.g.start, [c for _, _, c in trace]))
        return ParseTree(nonterminal("File"), tuple(stmts))


def split_of(file_ids: list[int], seed: int) -> dict[int, str]:
    ids = list(file_ids)
    random.Random(f"{seed}:split").shuffle(ids)
    n = len(ids)
    n_train, n_valid = round(0.7 * n), round(0.1 * n)
    out = {}
    for rank, fid in enumerate(ids):
        out[fid] = "train" if rank < n_train else "valid" if rank < n_train + n_valid else "test"
    return out


def gen_corpus(cfg: CorpusConfig, g: Grammar | None = None, out_dir: str | Path | None = None) -> dict:
    """Generate train/valid/test JSON-Lines splits; the test split keeps one statement per file."""
    g = g or load_builtin()
    sampler = FileSampler(g, cfg)
    splits = split_of(list(range(cfg.num_files)), cfg.seed)
    data: dict[str, list[Example]] = {"train": [], "valid": [], "test": []}
    for fid in range(cfg.num_files):
        tree = sampler.sample_file(fid)
        exs = extract_examples(tree, g.start, cfg.context_len, fid)
        split = splits[fid]
        if split == "test":
            exs = [random.Random(f"{cfg.seed}:test:{fid}").choice(exs)]
        data[split].extend(exs)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for split, exs in data.items():
            write_jsonl(exs, out / f"{split}.jsonl")
        (out / "corpus.json").write_text(json.dumps(asdict(cfg), indent=2) + "\n")
    return data


def write_jsonl(examples: Iterable[Example], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[Example]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(Example(list(rec["context"]), list(rec["target"]), None, int(rec.get("file_id", -1))))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad corpus record ({exc})") from exc
    return out
