"""Tokenizing, Earley parsing and (context, target) example extraction."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .grammar import Grammar, Production, Symbol, nonterminal

_WS = re.compile(r"\s+")


class TokenizeError(ValueError):
    def __init__(self, offset: int, char: str):
        super().__init__(f"cannot lex {char!r} at offset {offset}")
        self.offset = offset


class ParseError(ValueError):
    def __init__(self, index: int):
        super().__init__(f"unparseable at token {index}")
        self.index = index


@dataclass(frozen=True, slots=True)
class Token:
    text: str
    cls: str | None  # token-class name, or None for a literal terminal
    offset: int = -1

    def matches(self, sym: Symbol) -> bool:
        if sym.is_class:
            return self.cls == sym.name
        return self.cls is None and self.text == sym.name


@dataclass(frozen=True)
class ParseTree:
    symbol: Symbol
    children: tuple["ParseTree", ...] = ()
    token: Token | None = None

    def leaves(self) -> list[str]:
        if self.token is not None:
            return [self.token.text]
        out: list[str] = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def iter_nodes(self) -> Iterator["ParseTree"]:
        yield self
        for c in self.children:
            yield from c.iter_nodes()

    @property
    def rhs(self) -> tuple[Symbol, ...]:
        return tuple(c.symbol for c in self.children)


@dataclass
class Example:
    context: list[str]
    target: list[str]
    target_tree: ParseTree | None = None
    file_id: int = -1

    def to_json(self) -> dict:
        return {"context": self.context, "target": self.target, "file_id": self.file_id}


class Lexer:
    """Maximal-munch lexer for a grammar's literals and token classes."""

    def __init__(self, g: Grammar):
        self.literals = sorted(set(g.literals), key=lambda s: (-len(s), s))
        self.classes = [(name, re.compile(pat)) for name, pat in g.token_classes.items()]
        self._literal_set = set(self.literals)

    def tokenize(self, text: str) -> list[Token]:
        out: list[Token] = []
        pos = 0
        while True:
            m = _WS.match(text, pos)
            if m:
                pos = m.end()
            if pos >= len(text):
                return out
            best_len, best_cls = 0, None
            for lit in self.literals:
                if len(lit) > best_len and text.startswith(lit, pos):
                    best_len = len(lit)
                    break  # sorted longest first
            for name, rx in self.classes:
                m = rx.match(text, pos)
                if m and m.end() - pos > best_len:
                    best_len, best_cls = m.end() - pos, name
            if best_len == 0:
                raise TokenizeError(pos, text[pos])
            out.append(Token(text[pos : pos + best_len], best_cls, pos))
            pos += best_len

    def classify(self, text: str) -> Token:
        """Recover the lexical class of a single already-split token."""
        if text in self._literal_set:
            return Token(text, None)
        for name, rx in self.classes:
            if rx.fullmatch(text):
                return Token(text, name)
        raise TokenizeError(0, text[:1] or " ")


def tokenize(text: str, g: Grammar) -> list[Token]:
    return Lexer(g).tokenize(text)


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


class EarleyParser:
    def __init__(self, g: Grammar):
        self.g = g
        self.prods: list[Production] = g.productions
        self.by_lhs: dict[str, list[int]] = {}
        for pid, p in enumerate(self.prods):
            self.by_lhs.setdefault(p.lhs.name, []).append(pid)
        self.lexer = Lexer(g)
        self._shape_cache: dict[tuple, ParseTree] = {}

    def _chart(self, toks: Sequence[Token], root: str) -> tuple[set, int]:
        n = len(toks)
        prods = self.prods
        charts: list[list[tuple[int, int, int]]] = [[] for _ in range(n + 1)]
        seen: list[set] = [set() for _ in range(n + 1)]
        waiting: list[dict[str, list[tuple[int, int, int]]]] = [{} for _ in range(n + 1)]
        completed: set[tuple[str, int, int]] = set()

        def add(k, item):
            if item not in seen[k]:
                seen[k].add(item)
                charts[k].append(item)

        for pid in self.by_lhs[root]:
            add(0, (pid, 0, 0))
        last = 0
        for k in range(n + 1):
            agenda = charts[k]
            if not agenda:
                break
            last = k
            i = 0
            while i < len(agenda):
                pid, dot, org = agenda[i]
                i += 1
                rhs = prods[pid].rhs
                if dot < len(rhs):
                    sym = rhs[dot]
                    if sym.is_nonterminal:
                        lst = waiting[k].setdefault(sym.name, [])
                        lst.append((pid, dot, org))
                        if len(lst) == 1:
                            for q in self.by_lhs[sym.name]:
                                add(k, (q, 0, k))
                        elif (sym.name, k, k) in completed:  # unreachable: no epsilon rules
                            add(k, (pid, dot + 1, org))
                    elif k < n and toks[k].matches(sym):
                        add(k + 1, (pid, dot + 1, org))
                else:
                    lhs = prods[pid].lhs.name
                    if (lhs, org, k) in completed:
                        continue
                    completed.add((lhs, org, k))
                    for q, d, o in waiting[org].get(lhs, ()):
                        add(k, (q, d + 1, o))
        return completed, last

    def parse(self, toks: Sequence[Token], root: Symbol | str | None = None) -> ParseTree:
        root_name = (root.name if isinstance(root, Symbol) else root) or self.g.start.name
        if root_name not in self.by_lhs:
            raise ValueError(f"{root_name} is not a nonterminal")
        n = len(toks)
        completed, last = self._chart(toks, root_name)
        if n == 0 or (root_name, 0, n) not in completed:
            raise ParseError(min(last, n))
        return self._build(toks, completed, root_name, 0, n)

    def parse_strings(self, tokens: Sequence[str], root: Symbol | str | None = None) -> ParseTree:
        """Parse bare token strings; trees are cached by lexical shape."""
        toks = [self.lexer.classify(t) for t in tokens]
        shape = (root.name if isinstance(root, Symbol) else root,) + tuple(
            t.cls or t.text for t in toks
        )
        tree = self._shape_cache.get(shape)
        if tree is None:
            tree = self.parse(toks, root)
            self._shape_cache[shape] = tree
        return _relabel(tree, iter(toks))

    def _build(self, toks, completed, name, i, j) -> ParseTree:
        prods = self.prods
        memo: dict[tuple[int, int, int], list | None] = {}

        def match(pid: int, d: int, a: int) -> list | None:
            key = (pid, d, a)
            if key in memo:
                return memo[key]
            rhs = prods[pid].rhs
            res = None
            if d == len(rhs):
                res = [] if a == j_cur[0] else None
            else:
                sym = rhs[d]
                room = j_cur[0] - (len(rhs) - d - 1)
                if not sym.is_nonterminal:
                    if a < room and toks[a].matches(sym):
                        rest = match(pid, d + 1, a + 1)
                        if rest is not None:
                            res = [(sym, a, a + 1)] + rest
                else:
                    for e in range(a + 1, room + 1):
                        if (sym.name, a, e) in completed:
                            rest = match(pid, d + 1, e)
                            if rest is not None:
                                res = [(sym, a, e)] + rest
                                break
            memo[key] = res
            return res

        j_cur = [j]

        def build(nm: str, a: int, b: int) -> ParseTree:
            for pid in self.by_lhs[nm]:
                memo.clear()
                j_cur[0] = b
                spans = match(pid, 0, a)
                if spans is not None:
                    children = []
                    for sym, s, e in spans:
                        if sym.is_nonterminal:
                            children.append(build(sym.name, s, e))
                        else:
                            children.append(ParseTree(sym, (), toks[s]))
                    return ParseTree(nonterminal(nm), tuple(children))
            raise AssertionError(f"chart inconsistency for {nm} [{a},{b})")

        return build(name, i, j)


def _relabel(tree: ParseTree, toks: Iterator[Token]) -> ParseTree:
    if tree.token is not None:
        return ParseTree(tree.symbol, (), next(toks))
    return ParseTree(tree.symbol, tuple(_relabel(c, toks) for c in tree.children))


def parse(tokens: Sequence[Token], g: Grammar, root: Symbol | str | None = None) -> ParseTree:
    return EarleyParser(g).parse(tokens, root)


def tree_from_choices(start: Symbol, choices: Iterable) -> ParseTree:
    """Rebuild the tree of a leftmost derivation (productions and lexemes in pre-order)."""
    it = iter(choices)
    offset = [0]

    def leaf(sym: Symbol, text: str) -> ParseTree:
        tok = Token(text, sym.name if sym.is_class else None, offset[0])
        offset[0] += len(text) + 1
        return ParseTree(sym, (), tok)

    def build(sym: Symbol) -> ParseTree:
        choice = next(it)
        if sym.is_class:
            return leaf(sym, choice)
        assert isinstance(choice, Production) and choice.lhs == sym
        kids = []
        for s in choice.rhs:
            kids.append(build(s) if s.expandable else leaf(s, s.name))
        return ParseTree(sym, tuple(kids))

    return build(start)


def extract_examples(
    tree: ParseTree, target_nt: Symbol | str, context_len: int = 200, file_id: int = -1
) -> list[Example]:
    """One example per occurrence of ``target_nt``: the preceding tokens and the subtree's tokens."""
    if context_len < 1:
        raise ValueError("context_len must be >= 1")
    name = target_nt.name if isinstance(target_nt, Symbol) else target_nt
    leaves: list[str] = []
    found: list[tuple[int, ParseTree]] = []

    def walk(node: ParseTree):
        if node.symbol.is_nonterminal and node.symbol.name == name:
            found.append((len(leaves), node))
        if node.token is not None:
            leaves.append(node.token.text)
        for c in node.children:
            walk(c)

    walk(tree)
    return [
        Example(leaves[max(0, start - context_len) : start], node.leaves(), node, file_id)
        for start, node in found
    ]
