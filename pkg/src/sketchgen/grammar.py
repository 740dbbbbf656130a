"""Context-free grammars: the grammar-file format, flattening and random derivations."""

from __future__ import annotations

import enum
import json
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class GrammarError(ValueError):
    """Raised for malformed grammar files and invalid grammar operations."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class Kind(enum.Enum):
    TERMINAL = "terminal"
    NONTERMINAL = "nonterminal"


NONTERMINAL_NAME = re.compile(r"[A-Z][A-Za-z0-9_]*\Z")


@dataclass(frozen=True, slots=True)
class Symbol:
    """A grammar symbol.

    Terminals are either literal lexemes (``is_class`` false, e.g. ``"="``) or
    token classes such as ``IDENT`` whose concrete lexeme is chosen later.
    """

    name: str
    kind: Kind
    is_class: bool = False

    @property
    def is_nonterminal(self) -> bool:
        return self.kind is Kind.NONTERMINAL

    @property
    def is_literal(self) -> bool:
        return self.kind is Kind.TERMINAL and not self.is_class

    @property
    def expandable(self) -> bool:
        """Nonterminals and token classes both still need a decision to become tokens."""
        return self.kind is Kind.NONTERMINAL or self.is_class

    def render(self) -> str:
        if self.is_literal:
            return json.dumps(self.name, ensure_ascii=False)
        return self.name

    def __repr__(self) -> str:
        if self.is_nonterminal:
            return f"<{self.name}>"
        return self.render()


def nonterminal(name: str) -> Symbol:
    return Symbol(name, Kind.NONTERMINAL)


def literal(text: str) -> Symbol:
    return Symbol(text, Kind.TERMINAL)


def token_class(name: str) -> Symbol:
    return Symbol(name, Kind.TERMINAL, is_class=True)


@dataclass(frozen=True, slots=True)
class Production:
    lhs: Symbol
    rhs: tuple[Symbol, ...]

    def render_rhs(self) -> str:
        return " ".join(s.render() for s in self.rhs)

    def __str__(self) -> str:
        return f"{self.lhs.name} -> {self.render_rhs()}"


@dataclass(frozen=True)
class Grammar:
    """An epsilon-free CFG.

    ``rules`` maps each nonterminal name to its productions in source order;
    the per-nonterminal index is what parse disambiguation refers to.
    """

    start: Symbol
    rules: Mapping[str, tuple[Production, ...]]
    token_classes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.start.is_nonterminal or self.start.name not in self.rules:
            raise GrammarError(f"start symbol {self.start.name} has no productions")
        for name, prods in self.rules.items():
            if not prods:
                raise GrammarError(f"nonterminal {name} has no productions")
            for p in prods:
                if not p.rhs:
                    raise GrammarError(f"empty production for {name}")
                for s in p.rhs:
                    if s.is_nonterminal and s.name not in self.rules:
                        raise GrammarError(f"undefined nonterminal {s.name}")
                    if s.is_class and s.name not in self.token_classes:
                        raise GrammarError(f"undeclared token class {s.name}")

    @property
    def productions(self) -> list[Production]:
        return [p for prods in self.rules.values() for p in prods]

    @property
    def nonterminals(self) -> list[Symbol]:
        return [nonterminal(n) for n in self.rules]

    @property
    def terminals(self) -> list[Symbol]:
        seen: dict[Symbol, None] = {}
        for p in self.productions:
            for s in p.rhs:
                if not s.is_nonterminal:
                    seen.setdefault(s, None)
        return list(seen)

    @property
    def literals(self) -> list[str]:
        return [s.name for s in self.terminals if s.is_literal]

    def expandable_kinds(self) -> list[str]:
        """Names of every symbol that can sit unexpanded in a sketch state."""
        return list(self.rules) + list(self.token_classes)

    def symbol(self, name: str) -> Symbol:
        """Resolve a bare (unquoted) name the same way the file parser does."""
        if name in self.token_classes:
            return token_class(name)
        return nonterminal(name)

    def reachable(self) -> list[str]:
        seen = [self.start.name]
        i = 0
        while i < len(seen):
            for p in self.rules[seen[i]]:
                for s in p.rhs:
                    if s.is_nonterminal and s.name not in seen:
                        seen.append(s.name)
            i += 1
        return seen

    def to_text(self) -> str:
        """Normalized grammar-file text; parse_grammar(g.to_text()) == g."""
        lines = [f"token {name} /{pat}/" for name, pat in self.token_classes.items()]
        lines.append(f"start {self.start.name}")
        for name, prods in self.rules.items():
            lines.append(f"{name} -> " + " | ".join(p.render_rhs() for p in prods))
        return "\n".join(lines) + "\n"


_LEX = re.compile(r'\s*(?:("(?:[^"\\]|\\.)*")|(->)|(\|)|([A-Za-z_][A-Za-z0-9_]*))')


def _split_line(line: str, lineno: int) -> list[tuple[str, str]]:
    out = []
    pos = 0
    line = line.rstrip()
    while pos < len(line):
        m = _LEX.match(line, pos)
        if not m or m.end() == pos:
            raise GrammarError(f"syntax error at column {pos + 1}", lineno)
        if m.group(1) is not None:
            try:
                out.append(("lit", json.loads(m.group(1))))
            except json.JSONDecodeError as exc:
                raise GrammarError(f"bad literal {m.group(1)}", lineno) from exc
        elif m.group(2):
            out.append(("arrow", "->"))
        elif m.group(3):
            out.append(("bar", "|"))
        else:
            out.append(("name", m.group(4)))
        pos = m.end()
    return out


def parse_grammar(text: str) -> Grammar:
    """Parse the line-oriented grammar-file format."""
    token_classes: dict[str, str] = {}
    start: str | None = None
    # (lineno, lhs, alternatives as raw token lists)
    raw: list[tuple[int, str, list[list[tuple[str, str]]]]] = []
    last_lhs: str | None = None

    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("token "):
            m = re.fullmatch(r"token\s+([A-Za-z_][A-Za-z0-9_]*)\s+/(.*)/", stripped)
            if not m:
                raise GrammarError("malformed token declaration", lineno)
            name, pattern = m.groups()
            if name in token_classes:
                raise GrammarError(f"duplicate token class {name}", lineno)
            try:
                re.compile(pattern)
            except re.error as exc:
                raise GrammarError(f"bad pattern for {name}: {exc}", lineno) from exc
            token_classes[name] = pattern
            continue
        if stripped.startswith("start ") or stripped == "start":
            parts = stripped.split()
            if len(parts) != 2:
                raise GrammarError("malformed start declaration", lineno)
            if start is not None:
                raise GrammarError("start declared more than once", lineno)
            start = parts[1]
            continue

        toks = _split_line(stripped, lineno)
        if toks[0][0] == "bar":
            if last_lhs is None:
                raise GrammarError("continuation line without a rule", lineno)
            lhs, body = last_lhs, toks
        else:
            if len(toks) < 2 or toks[0][0] != "name" or toks[1][0] != "arrow":
                raise GrammarError("expected 'Name -> ...'", lineno)
            lhs, body = toks[0][1], [("bar", "|")] + toks[2:]
            if not NONTERMINAL_NAME.match(lhs):
                raise GrammarError(f"bad nonterminal name {lhs}", lineno)
            last_lhs = lhs
        alts: list[list[tuple[str, str]]] = []
        for kind, val in body:
            if kind == "bar":
                alts.append([])
            elif kind == "arrow":
                raise GrammarError("unexpected '->'", lineno)
            else:
                alts[-1].append((kind, val))
        if any(not a for a in alts):
            raise GrammarError(f"empty alternative for {lhs}", lineno)
        raw.append((lineno, lhs, alts))

    if start is None:
        raise GrammarError("missing start declaration")
    lhs_names = list(dict.fromkeys(lhs for _, lhs, _ in raw))
    defined = set(lhs_names)
    for name in token_classes:
        if name in defined:
            raise GrammarError(f"{name} is both a token class and a nonterminal")

    rules: dict[str, list[Production]] = {n: [] for n in lhs_names}
    for lineno, lhs, alts in raw:
        for alt in alts:
            rhs = []
            for kind, val in alt:
                if kind == "lit":
                    if not val:
                        raise GrammarError("empty literal", lineno)
                    rhs.append(literal(val))
                elif val in token_classes:
                    rhs.append(token_class(val))
                elif val in defined:
                    rhs.append(nonterminal(val))
                else:
                    raise GrammarError(f"undefined nonterminal {val}", lineno)
            rules[lhs].append(Production(nonterminal(lhs), tuple(rhs)))

    if start not in defined:
        raise GrammarError(f"undefined start symbol {start}")
    g = Grammar(nonterminal(start), {k: tuple(v) for k, v in rules.items()}, token_classes)
    unreachable = [n for n in g.rules if n not in g.reachable()]
    if unreachable:
        warnings.warn(f"nonterminals unreachable from {start}: {', '.join(unreachable)}", stacklevel=2)
    return g


def flatten(g: Grammar) -> Grammar:
    """Inline every non-start nonterminal that has exactly one production, to a fixpoint."""
    rules = {name: list(prods) for name, prods in g.rules.items()}
    while True:
        target = next(
            (n for n, prods in rules.items() if n != g.start.name and len(prods) == 1), None
        )
        if target is None:
            break
        body = rules.pop(target)[0].rhs
        if any(s.is_nonterminal and s.name == target for s in body):
            raise GrammarError(f"flattening cycle through {target}")
        for name, prods in rules.items():
            new: list[Production] = []
            for p in prods:
                if any(s.is_nonterminal and s.name == target for s in p.rhs):
                    rhs: list[Symbol] = []
                    for s in p.rhs:
                        rhs.extend(body if s.is_nonterminal and s.name == target else (s,))
                    p = Production(p.lhs, tuple(rhs))
                if p not in new:
                    new.append(p)
            rules[name] = new
    return Grammar(g.start, {k: tuple(v) for k, v in rules.items()}, dict(g.token_classes))


class _TooDeep(Exception):
    pass


# One replayable leftmost-derivation step: the sentential form before the step,
# the position rewritten, and the production or lexeme used.
TraceStep = tuple[tuple, int, "Production | str"]


def sample_derivation(
    g: Grammar,
    weights: Mapping[Production, float] | None,
    lexeme_pools: Mapping[str, Sequence[tuple[str, float]]],
    rng,
    depth_cap: int = 24,
    max_tries: int = 50,
) -> tuple[list[str], list[TraceStep]]:
    """Sample a random derivation from the start symbol.

    Returns the terminal tokens and a leftmost-derivation trace; replaying the
    trace from ``(start,)`` reproduces the tokens exactly.
    """
    weights = weights or {}
    for cls in g.token_classes:
        if not lexeme_pools.get(cls):
            raise GrammarError(f"empty lexeme pool for token class {cls}")

    def expand(sym: Symbol, depth: int, steps: list):
        if depth > depth_cap:
            raise _TooDeep
        if sym.is_class:
            lexemes, w = zip(*lexeme_pools[sym.name])
            steps.append(rng.choices(lexemes, weights=w)[0])
            return
        prods = g.rules[sym.name]
        p = rng.choices(prods, weights=[weights.get(q, 1.0) for q in prods])[0]
        steps.append(p)
        for s in p.rhs:
            if s.expandable:
                expand(s, depth + 1, steps)

    for _ in range(max_tries):
        steps: list = []
        try:
            expand(g.start, 0, steps)
        except _TooDeep:
            continue
        return replay_leftmost(g.start, steps)
    raise GrammarError("derivation too deep")


def apply_step(state: tuple, pos: int, choice) -> tuple:
    """Rewrite the expandable symbol at ``pos`` with a production or a lexeme."""
    if isinstance(choice, Production):
        body = tuple(s.name if s.is_literal else s for s in choice.rhs)
    else:
        body = (choice,)
    return state[:pos] + body + state[pos + 1 :]


def replay_leftmost(start: Symbol, choices: Iterable) -> tuple[list[str], list[TraceStep]]:
    state: tuple = (start,)
    trace: list[TraceStep] = []
    for choice in choices:
        pos = next(i for i, s in enumerate(state) if isinstance(s, Symbol))
        trace.append((state, pos, choice))
        state = apply_step(state, pos, choice)
    if any(isinstance(s, Symbol) for s in state):
        raise GrammarError("derivation trace is incomplete")
    return list(state), trace


def load_builtin(name: str = "minilang") -> Grammar:
    from importlib import resources

    text = resources.files("sketchgen.data").joinpath(f"{name}.g").read_text(encoding="utf-8")
    return parse_grammar(text)
