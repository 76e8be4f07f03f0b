"""Grammar loading: a Lark-like text format desugared into select/join/byte nodes.

The surface format is line oriented::

    // comment
    start: "classdiagram " name ws "{" item* "}"
    name: ("a".."z" | "A".."Z")
        ("a".."z" | "0".."9")*

A rule starts at column 1 with ``name:``; indented lines continue the
previous rule. After loading, a grammar only contains :class:`Select`,
:class:`Join`, :class:`ByteTerminal`, :class:`ByteRange`, :class:`RuleRef`
and :class:`Epsilon` nodes. Repetition is rewritten into fresh
right-recursive rules named ``__rep<k>``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union

__all__ = [
    "Select",
    "Join",
    "ByteTerminal",
    "ByteRange",
    "RuleRef",
    "Epsilon",
    "EPSILON",
    "GrammarNode",
    "Grammar",
    "GrammarError",
    "GrammarSyntaxError",
    "UnknownRule",
    "MissingStart",
    "UselessRule",
    "DuplicateRule",
    "parse_grammar",
    "parse_sugared",
    "load_grammar",
    "desugar",
    "compute_nullable",
    "REP_PREFIX",
]

REP_PREFIX = "__rep"


# ---------------------------------------------------------------------------
# Normalized nodes


@dataclass(frozen=True)
class Select:
    children: tuple


@dataclass(frozen=True)
class Join:
    children: tuple


@dataclass(frozen=True)
class ByteTerminal:
    value: int


@dataclass(frozen=True)
class ByteRange:
    low: int
    high: int

    def __post_init__(self):
        if not 0 <= self.low <= self.high <= 255:
            raise ValueError(f"bad byte range {self.low}..{self.high}")


@dataclass(frozen=True)
class RuleRef:
    name: str


@dataclass(frozen=True)
class Epsilon:
    pass


EPSILON = Epsilon()

GrammarNode = Union[Select, Join, ByteTerminal, ByteRange, RuleRef, Epsilon]


@dataclass(frozen=True, eq=False)
class Grammar:
    """A normalized grammar. Immutable; safe to share between decoders."""

    rules: dict
    start: str = "start"
    nullable: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.start not in self.rules:
            raise MissingStart(f"start rule {self.start!r} is not defined")

    @property
    def user_rules(self) -> list[str]:
        return [n for n in self.rules if not n.startswith(REP_PREFIX)]


# ---------------------------------------------------------------------------
# Errors


class GrammarError(ValueError):
    pass


class GrammarSyntaxError(GrammarError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class UnknownRule(GrammarError):
    def __init__(self, name: str):
        super().__init__(f"reference to undefined rule {name!r}")
        self.name = name


class MissingStart(GrammarError):
    pass


class UselessRule(GrammarError):
    def __init__(self, name: str):
        super().__init__(f"rule {name!r} derives no finite string")
        self.name = name


class DuplicateRule(GrammarSyntaxError):
    pass


# ---------------------------------------------------------------------------
# Sugared syntax tree, as written in the file


@dataclass(frozen=True)
class Lit:
    data: bytes


@dataclass(frozen=True)
class Range:
    low: int
    high: int


@dataclass(frozen=True)
class Ref:
    name: str
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class Seq:
    items: tuple


@dataclass(frozen=True)
class Alt:
    options: tuple


@dataclass(frozen=True)
class Opt:
    item: object


@dataclass(frozen=True)
class Star:
    item: object


@dataclass(frozen=True)
class Plus:
    item: object


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>//[^\n]*)
  | (?P<nl>\n)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<name>[a-zA-Z_][a-zA-Z0-9_]*)
  | (?P<dots>\.\.)
  | (?P<op>[:|?*+()])
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    column: int
    bol: bool  # first token on its line and not indented


def _tokenize(text: str) -> Iterator[_Tok]:
    pos, line, line_start = 0, 1, 0
    at_bol = True
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise GrammarSyntaxError(line, col, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
            at_bol = True
        elif kind == "ws":
            at_bol = False
        elif kind != "comment":
            yield _Tok(kind, m.group(), line, col, at_bol and col == 1)
            at_bol = False
        pos = m.end()
    yield _Tok("eof", "", line, pos - line_start + 1, True)


def _unescape(tok: _Tok) -> bytes:
    out, body, i = [], tok.text[1:-1], 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            esc = body[i + 1]
            if esc not in _ESCAPES:
                raise GrammarSyntaxError(tok.line, tok.column + i + 1, f"unknown escape \\{esc}")
            out.append(_ESCAPES[esc])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out).encode("utf-8")


class _Parser:
    def __init__(self, text: str):
        self.toks = list(_tokenize(text))
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise GrammarSyntaxError(tok.line, tok.column, message)

    def take(self, kind: str, text: str | None = None) -> _Tok:
        tok = self.tok
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            got = tok.text or "end of input"
            self.error(f"expected {want!r}, got {got!r}")
        self.i += 1
        return tok

    def at_rule_start(self) -> bool:
        return self.tok.bol or self.tok.kind == "eof"

    def grammar(self) -> dict:
        rules: dict = {}
        while self.tok.kind != "eof":
            if not self.tok.bol:
                self.error("rule definitions must start at column 1")
            name_tok = self.take("name")
            self.take("op", ":")
            if name_tok.text in rules:
                raise DuplicateRule(name_tok.line, name_tok.column,
                                    f"duplicate rule {name_tok.text!r}")
            rules[name_tok.text] = self.expansion()
            if not self.at_rule_start():
                self.error(f"unexpected {self.tok.text!r}")
        return rules

    def expansion(self):
        options = [self.sequence()]
        while self.tok.kind == "op" and self.tok.text == "|":
            self.i += 1
            options.append(self.sequence())
        return options[0] if len(options) == 1 else Alt(tuple(options))

    def sequence(self):
        items = []
        while not self.at_rule_start() and (
            self.tok.kind in ("string", "name") or self.tok.text == "("
        ):
            items.append(self.item())
        return items[0] if len(items) == 1 else Seq(tuple(items))

    def item(self):
        node = self.atom()
        while self.tok.kind == "op" and self.tok.text in "?*+" and not self.tok.bol:
            op = self.take("op").text
            node = {"?": Opt, "*": Star, "+": Plus}[op](node)
        return node

    def atom(self):
        tok = self.tok
        if tok.kind == "string":
            self.i += 1
            data = _unescape(tok)
            if self.tok.kind == "dots":
                self.i += 1
                hi_tok = self.take("string")
                hi = _unescape(hi_tok)
                if len(data) != 1 or len(hi) != 1:
                    self.error("range bounds must be single bytes", tok)
                if data[0] > hi[0]:
                    self.error("empty range: low bound exceeds high bound", tok)
                return Range(data[0], hi[0])
            return Lit(data)
        if tok.kind == "name":
            self.i += 1
            return Ref(tok.text, tok.line, tok.column)
        if tok.text == "(":
            self.i += 1
            node = self.expansion()
            self.take("op", ")")
            return node
        self.error(f"unexpected {tok.text or 'end of input'!r}")


def parse_sugared(source: str) -> dict:
    """Parse grammar text into the sugared tree (before desugaring)."""
    return _Parser(source).grammar()


# ---------------------------------------------------------------------------
# Desugaring


def _join(children) -> GrammarNode:
    flat = []
    for c in children:
        if isinstance(c, Join):
            flat.extend(c.children)
        elif not isinstance(c, Epsilon):
            flat.append(c)
    if not flat:
        return EPSILON
    return flat[0] if len(flat) == 1 else Join(tuple(flat))


def _select(children) -> GrammarNode:
    flat = []
    for c in children:
        flat.extend(c.children if isinstance(c, Select) else [c])
    return flat[0] if len(flat) == 1 else Select(tuple(flat))


class FreshNames:
    """Supplies ``__rep<k>`` names that avoid a set of taken names."""

    def __init__(self, taken=()):
        self.taken = set(taken)
        self.counter = 0

    def __call__(self) -> str:
        while True:
            name = f"{REP_PREFIX}{self.counter}"
            self.counter += 1
            if name not in self.taken:
                self.taken.add(name)
                return name


def desugar(node, fresh: FreshNames, aux: dict) -> GrammarNode:
    """Rewrite a sugared node; repetition rules are added to ``aux``."""
    if isinstance(node, Lit):
        return _join([ByteTerminal(b) for b in node.data])
    if isinstance(node, Range):
        return ByteRange(node.low, node.high)
    if isinstance(node, Ref):
        return RuleRef(node.name)
    if isinstance(node, Seq):
        return _join([desugar(c, fresh, aux) for c in node.items])
    if isinstance(node, Alt):
        return _select([desugar(c, fresh, aux) for c in node.options])
    if isinstance(node, Opt):
        return _select([desugar(node.item, fresh, aux), EPSILON])
    if isinstance(node, (Star, Plus)):
        inner = desugar(node.item, fresh, aux)
        name = fresh()
        aux[name] = Select((EPSILON, _join([inner, RuleRef(name)])))
        if isinstance(node, Star):
            return RuleRef(name)
        return _join([inner, RuleRef(name)])
    raise TypeError(f"not a grammar node: {node!r}")


# ---------------------------------------------------------------------------
# Analyses


def _refs(node) -> Iterator[str]:
    if isinstance(node, RuleRef):
        yield node.name
    elif isinstance(node, (Select, Join)):
        for c in node.children:
            yield from _refs(c)


def _fixpoint(rules: dict, leaf_value, join_all: bool) -> set:
    """Least fixpoint of a boolean property over rules.

    ``leaf_value(node)`` decides terminals and epsilon; ``join_all`` selects
    whether Join needs all children (True) or Select needs any.
    """
    holds: set = set()

    def value(node) -> bool:
        if isinstance(node, RuleRef):
            return node.name in holds
        if isinstance(node, Join):
            return all(value(c) for c in node.children)
        if isinstance(node, Select):
            return any(value(c) for c in node.children)
        return leaf_value(node)

    changed = True
    while changed:
        changed = False
        for name, body in rules.items():
            if name not in holds and value(body):
                holds.add(name)
                changed = True
    return holds


def compute_nullable(rules: dict) -> frozenset:
    """Rules deriving the empty string."""
    return frozenset(_fixpoint(rules, lambda n: isinstance(n, Epsilon), True))


def _productive(rules: dict) -> set:
    return _fixpoint(rules, lambda n: True, True)


def node_nullable(node, nullable) -> bool:
    if isinstance(node, Epsilon):
        return True
    if isinstance(node, RuleRef):
        return node.name in nullable
    if isinstance(node, Join):
        return all(node_nullable(c, nullable) for c in node.children)
    if isinstance(node, Select):
        return any(node_nullable(c, nullable) for c in node.children)
    return False


def build_grammar(sugared: dict, start: str = "start") -> Grammar:
    if start not in sugared:
        raise MissingStart(f"no {start!r} rule defined")

    def check_refs(node):
        if isinstance(node, Ref):
            if node.name not in sugared:
                raise UnknownRule(node.name)
        elif isinstance(node, (Seq, Alt)):
            for c in (node.items if isinstance(node, Seq) else node.options):
                check_refs(c)
        elif isinstance(node, (Opt, Star, Plus)):
            check_refs(node.item)

    for body in sugared.values():
        check_refs(body)

    fresh = FreshNames(sugared)
    rules: dict = {}
    aux: dict = {}
    for name, body in sugared.items():
        rules[name] = desugar(body, fresh, aux)
    rules.update(aux)

    productive = _productive(rules)
    for name in rules:
        if name not in productive:
            raise UselessRule(name)
    return Grammar(rules=rules, start=start, nullable=compute_nullable(rules))


def parse_grammar(source: str | bytes) -> Grammar:
    """Load grammar text into a normalized :class:`Grammar`."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return build_grammar(parse_sugared(source))


def load_grammar(path) -> Grammar:
    return parse_grammar(Path(path).read_text(encoding="utf-8"))
