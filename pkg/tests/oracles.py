"""Brute-force reference implementations used as test oracles.

Nothing here touches the Earley recognizer; languages are enumerated by
bounded fixpoint iteration directly over grammar trees.
"""
from __future__ import annotations

from itertools import product

from grammask.grammar import (
    Alt,
    ByteRange,
    ByteTerminal,
    Epsilon,
    Join,
    Lit,
    Opt,
    Plus,
    Range,
    Ref,
    RuleRef,
    Select,
    Seq,
    Star,
)


def _concat(xs, ys, maxlen):
    return {x + y for x in xs for y in ys if len(x) + len(y) <= maxlen}


def _star(xs, maxlen):
    out = {b""}
    frontier = {b""}
    while frontier:
        frontier = _concat(frontier, xs, maxlen) - out
        out |= frontier
    return out


def _fix(rules, lang_of, maxlen):
    langs = {name: set() for name in rules}
    changed = True
    while changed:
        changed = False
        for name, body in rules.items():
            new = lang_of(body, langs, maxlen)
            if new != langs[name]:
                langs[name] = new
                changed = True
    return langs


def _sugared(node, langs, maxlen):
    if isinstance(node, Lit):
        return {node.data} if len(node.data) <= maxlen else set()
    if isinstance(node, Range):
        return {bytes([b]) for b in range(node.low, node.high + 1)} if maxlen else set()
    if isinstance(node, Ref):
        return langs[node.name]
    if isinstance(node, Seq):
        out = {b""}
        for item in node.items:
            out = _concat(out, _sugared(item, langs, maxlen), maxlen)
        return out
    if isinstance(node, Alt):
        return set().union(*(_sugared(o, langs, maxlen) for o in node.options))
    if isinstance(node, Opt):
        return {b""} | _sugared(node.item, langs, maxlen)
    if isinstance(node, Star):
        return _star(_sugared(node.item, langs, maxlen), maxlen)
    if isinstance(node, Plus):
        x = _sugared(node.item, langs, maxlen)
        return _concat(x, _star(x, maxlen), maxlen)
    raise TypeError(node)


def _normal(node, langs, maxlen):
    if isinstance(node, ByteTerminal):
        return {bytes([node.value])} if maxlen else set()
    if isinstance(node, ByteRange):
        return {bytes([b]) for b in range(node.low, node.high + 1)} if maxlen else set()
    if isinstance(node, Epsilon):
        return {b""}
    if isinstance(node, RuleRef):
        return langs[node.name]
    if isinstance(node, Join):
        out = {b""}
        for c in node.children:
            out = _concat(out, _normal(c, langs, maxlen), maxlen)
        return out
    if isinstance(node, Select):
        return set().union(*(_normal(c, langs, maxlen) for c in node.children))
    raise TypeError(node)


def sugared_language(rules: dict, maxlen: int, start: str = "start") -> set:
    """All strings of length <= maxlen derivable from a sugared rule dict."""
    return _fix(rules, _sugared, maxlen)[start]


def grammar_language(grammar, maxlen: int) -> set:
    """Same, for a normalized :class:`Grammar`."""
    return _fix(grammar.rules, _normal, maxlen)[grammar.start]


def nullable_by_enumeration(rules: dict) -> set:
    return {name for name, lang in _fix(rules, _sugared, 0).items() if b"" in lang}


def all_strings(alphabet: bytes, maxlen: int):
    for n in range(maxlen + 1):
        for tup in product(alphabet, repeat=n):
            yield bytes(tup)


def prefixes(words) -> set:
    return {w[:i] for w in words for i in range(len(w) + 1)}


class DerivationCounter:
    """Tallies of chosen rules over every derivation of a text.

    ``ends(node, i)`` maps each ``j`` such that ``node`` derives
    ``text[i:j]`` to the set of count vectors of those derivations. This is
    plain memoized top-down enumeration, so it refuses left recursion.
    """

    def __init__(self, grammar, text: bytes, counted):
        self.g = grammar
        self.text = text
        self.counted = list(counted)
        self.memo: dict = {}
        self.busy: set = set()
        self.zero = (0,) * len(self.counted)

    def _add(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def rule(self, name, i):
        key = (name, i)
        if key in self.memo:
            return self.memo[key]
        if key in self.busy:
            raise RecursionError(f"left recursion through {name} at {i}")
        self.busy.add(key)
        inner = self.ends(self.g.rules[name], i)
        self.busy.discard(key)
        bump = tuple(int(name == c) for c in self.counted)
        out = {j: {self._add(v, bump) for v in vs} for j, vs in inner.items()}
        self.memo[key] = out
        return out

    def ends(self, node, i):
        t = self.text
        if isinstance(node, ByteTerminal):
            return {i + 1: {self.zero}} if i < len(t) and t[i] == node.value else {}
        if isinstance(node, ByteRange):
            return {i + 1: {self.zero}} if i < len(t) and node.low <= t[i] <= node.high else {}
        if isinstance(node, Epsilon):
            return {i: {self.zero}}
        if isinstance(node, RuleRef):
            return self.rule(node.name, i)
        if isinstance(node, Select):
            out: dict = {}
            for c in node.children:
                for j, vs in self.ends(c, i).items():
                    out.setdefault(j, set()).update(vs)
            return out
        if isinstance(node, Join):
            cur = {i: {self.zero}}
            for c in node.children:
                nxt: dict = {}
                for k, left in cur.items():
                    for j, right in self.ends(c, k).items():
                        nxt.setdefault(j, set()).update(self._add(a, b) for a in left for b in right)
                cur = nxt
            return cur
        raise TypeError(node)

    def counts(self) -> set:
        return self.rule(self.g.start, 0).get(len(self.text), set())
