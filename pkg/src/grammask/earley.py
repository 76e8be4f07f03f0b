"""Incremental byte-level Earley recognition over a normalized grammar.

The grammar tree is flattened into productions whose right-hand sides hold
either nonterminal ids (``int``) or inclusive byte ranges (``(lo, hi)``).
Nested selects inside a join get an internal nonterminal. Empty derivations
are handled by advancing over nullable nonterminals at prediction time.
"""
from __future__ import annotations

import json
import sys
import threading
import weakref
from dataclasses import dataclass, field

from .grammar import ByteRange, ByteTerminal, Epsilon, Grammar, Join, RuleRef, Select

__all__ = [
    "CompiledGrammar",
    "compile_grammar",
    "ParserState",
    "RejectedByte",
    "ParseReport",
    "recognize",
    "is_prefix",
    "Derivation",
    "extract_derivation",
]


class CompiledGrammar:
    """Flat production form of a :class:`Grammar` used by the recognizer."""

    def __init__(self, grammar: Grammar):
        self.grammar = grammar
        self.names: list[str] = []  # nonterminal id -> name
        self.user: list[bool] = []  # nonterminal is a rule of the grammar
        self.ids: dict[str, int] = {}
        self.lhs: list[int] = []
        self.rhs: list[tuple] = []
        self.by_lhs: list[list[int]] = []

        for name in grammar.rules:
            self._new_nt(name, True)
        # production 0 is the augmented start: __accept -> start
        self.accept = self._new_nt("__accept", False)
        self._add(self.accept, (self.ids[grammar.start],))
        for name, body in grammar.rules.items():
            nt = self.ids[name]
            step = _repetition_step(name, body)
            if step is not None:
                # R -> eps | X R recognized as R -> eps | R X: same language,
                # but completing a long repetition no longer walks a chain
                self._add(nt, ())
                self._add(nt, (nt,) + self._symbols(_join_of(step)))
                continue
            alts = body.children if isinstance(body, Select) else (body,)
            for alt in alts:
                self._add(nt, self._symbols(alt))

        self.nullable = self._nullable()
        self.templates = [_Template(self, nt) for nt in range(len(self.names))]

    def _new_nt(self, name: str, user: bool) -> int:
        nt = len(self.names)
        self.names.append(name)
        self.user.append(user)
        self.ids[name] = nt
        self.by_lhs.append([])
        return nt

    def _add(self, nt: int, rhs: tuple) -> None:
        self.by_lhs[nt].append(len(self.rhs))
        self.lhs.append(nt)
        self.rhs.append(rhs)

    def _symbols(self, node) -> tuple:
        if isinstance(node, ByteTerminal):
            return ((node.value, node.value),)
        if isinstance(node, ByteRange):
            return ((node.low, node.high),)
        if isinstance(node, RuleRef):
            return (self.ids[node.name],)
        if isinstance(node, Epsilon):
            return ()
        if isinstance(node, Join):
            out = ()
            for c in node.children:
                out += self._symbols(c)
            return out
        if isinstance(node, Select):
            nt = self._new_nt(f"__group{len(self.names)}", False)
            for alt in node.children:
                self._add(nt, self._symbols(alt))
            return (nt,)
        raise TypeError(node)

    def _nullable(self) -> frozenset:
        nullable: set = set()
        changed = True
        while changed:
            changed = False
            for p, rhs in enumerate(self.rhs):
                nt = self.lhs[p]
                if nt not in nullable and all(type(s) is int and s in nullable for s in rhs):
                    nullable.add(nt)
                    changed = True
        return frozenset(nullable)


def _repetition_step(name: str, body):
    """The repeated part X if ``body`` is ``Select[Epsilon, Join[X..., RuleRef(name)]]``."""
    if not (isinstance(body, Select) and len(body.children) == 2):
        return None
    eps, rec = body.children
    if not (isinstance(eps, Epsilon) and isinstance(rec, Join)):
        return None
    *step, last = rec.children
    if last != RuleRef(name) or any(_mentions(c, name) for c in step):
        return None
    return step


def _mentions(node, name: str) -> bool:
    if isinstance(node, RuleRef):
        return node.name == name
    if isinstance(node, (Select, Join)):
        return any(_mentions(c, name) for c in node.children)
    return False


def _join_of(children):
    return children[0] if len(children) == 1 else Join(tuple(children))


_compiled: "weakref.WeakKeyDictionary[Grammar, CompiledGrammar]" = weakref.WeakKeyDictionary()
_compile_lock = threading.Lock()


def compile_grammar(grammar: Grammar) -> CompiledGrammar:
    with _compile_lock:
        cg = _compiled.get(grammar)
        if cg is None:
            cg = _compiled[grammar] = CompiledGrammar(grammar)
        return cg


# Items are (production, dot, origin) tuples. Items whose origin is the
# column's own position carry HERE instead, so prediction templates can be
# shared constants across columns.
HERE = -1


class _Template:
    """Prediction closure of one nonterminal, independent of position.

    Columns refer to templates instead of copying their items, so predicting
    a large nonterminal costs one list append.
    """

    __slots__ = ("items", "predicted", "mask", "waiting", "step")

    def __init__(self, cg: "CompiledGrammar", nt: int):
        self.predicted = set()
        self.mask = 0
        self.waiting: dict = {}  # nonterminal -> items (origin HERE) waiting on it
        self.step: dict = {}  # byte -> [(p, d)] advanced past that byte
        items = set()
        todo = [nt]
        agenda = []
        while todo or agenda:
            if not agenda:
                m = todo.pop()
                if m in self.predicted:
                    continue
                self.predicted.add(m)
                agenda = [(q, 0) for q in cg.by_lhs[m]]
                continue
            p, d = agenda.pop()
            if (p, d, HERE) in items:
                continue
            item = (p, d, HERE)
            items.add(item)
            rhs = cg.rhs[p]
            if d == len(rhs):
                continue
            if type(rhs[d]) is int:
                s = rhs[d]
                self.waiting.setdefault(s, []).append(item)
                todo.append(s)
                if s in cg.nullable:
                    agenda.append((p, d + 1))
            else:
                lo, hi = rhs[d]
                for b in range(lo, hi + 1):
                    self.step.setdefault(b, []).append((p, d + 1))
                self.mask |= (1 << (hi + 1)) - (1 << lo)
        self.items = frozenset(items)


class _Column:
    """One Earley column: its own items plus shared prediction templates."""

    __slots__ = ("own", "waiting", "scans", "templates", "mask", "_allowed", "succ", "by_kernel")

    def __init__(self):
        self.own: set = set()
        self.waiting: dict = {}
        self.scans: list = []
        self.templates: list = []
        self.mask = 0
        self._allowed = None
        # successor columns by byte and by kernel; bytes that advance the same
        # items (say, all letters inside an identifier) share one column
        self.succ: dict = {}
        self.by_kernel: dict = {}

    def __contains__(self, item) -> bool:
        if item in self.own:
            return True
        return item[2] == HERE and any(item in t.items for t in self.templates)

    @property
    def items(self) -> set:
        out = set(self.own)
        for t in self.templates:
            out |= t.items
        return out

    def waiting_on(self, nt: int) -> list:
        out = list(self.waiting.get(nt, ()))
        for t in self.templates:
            out += t.waiting.get(nt, ())
        return out

    def allowed(self) -> frozenset:
        if self._allowed is None:
            m, out = self.mask, []
            while m:
                low = m & -m
                out.append(low.bit_length() - 1)
                m ^= low
            self._allowed = frozenset(out)
        return self._allowed


def _closure(cg: CompiledGrammar, kernel, pos: int, history: list) -> _Column:
    col = _Column()
    items = col.own
    rhs_of, lhs_of, nullable, templates = cg.rhs, cg.lhs, cg.nullable, cg.templates
    waiting, scans, used = col.waiting, col.scans, col.templates
    mask = 0
    agenda = []
    for it in kernel:
        if it not in items:
            items.add(it)
            agenda.append(it)
    while agenda:
        item = agenda.pop()
        p, d, o = item
        rhs = rhs_of[p]
        if d < len(rhs):
            s = rhs[d]
            if type(s) is not int:
                scans.append((s[0], s[1], p, d, o))
                mask |= (1 << (s[1] + 1)) - (1 << s[0])
                continue
            waiting.setdefault(s, []).append(item)
            for t in used:
                if s in t.predicted:
                    break
            else:
                t = templates[s]
                used.append(t)
                mask |= t.mask
            if s in nullable:
                it = (p, d + 1, o)
                if it not in items:
                    items.add(it)
                    agenda.append(it)
        elif o != HERE:
            # empty-span completions (origin HERE) are covered by the nullable set
            src = history[o]
            lhs = lhs_of[p]
            waiters = src.waiting.get(lhs, ())
            for t in src.templates:
                extra = t.waiting.get(lhs)
                if extra:
                    waiters = [*waiters, *extra]
            for q, e, r in waiters:
                it = (q, e + 1, o if r == HERE else r)
                if it not in items:
                    items.add(it)
                    agenda.append(it)
    col.mask = mask
    return col


class RejectedByte(Exception):
    def __init__(self, position: int, byte: int, expected: frozenset):
        exp = "".join(chr(b) if 32 <= b < 127 else f"\\x{b:02x}" for b in sorted(expected))
        super().__init__(f"byte {byte!r} rejected at position {position}; expected one of [{exp}]")
        self.position = position
        self.byte = byte
        self.expected = expected


class ParserState:
    """Recognizer state after consuming some bytes.

    States are never mutated: :meth:`advance` returns a new state and earlier
    columns are shared between a state and its successors. Probing several
    bytes from the same state is therefore cheap and leaves it reusable.
    """

    __slots__ = ("cg", "consumed", "_col", "_history")

    def __init__(self, cg: CompiledGrammar, consumed: int, col: _Column, history: list):
        self.cg = cg
        self.consumed = consumed
        self._col = col
        # columns 0..consumed-1 are history[0..consumed-1]; entries past that
        # may belong to sibling states and are never read from here
        self._history = history

    @classmethod
    def initial(cls, grammar: Grammar) -> "ParserState":
        cg = compile_grammar(grammar)
        return cls(cg, 0, _closure(cg, [(0, 0, HERE)], 0, []), [])

    @property
    def is_complete(self) -> bool:
        return (0, 1, 0 if self.consumed else HERE) in self._col

    def allowed_next_bytes(self) -> frozenset:
        return self._col.allowed()

    @property
    def byte_mask(self) -> int:
        """Allowed next bytes as a 256-bit integer (bit b set iff b allowed)."""
        return self._col.mask

    def column(self, position: int) -> _Column:
        if position == self.consumed:
            return self._col
        return self._history[position]

    def try_advance(self, b: int, reuse: bool = True) -> "ParserState | None":
        """State after byte ``b``, or None if the grammar forbids it.

        ``reuse=False`` bypasses the successor caches and rebuilds the column.
        """
        col = self._col
        if not (col.mask >> b) & 1:
            return None
        n = self.consumed
        hist = self._history
        if len(hist) == n:
            hist.append(col)
        elif hist[n] is not col:
            hist = hist[:n] + [col]
        nxt = col.succ.get(b) if reuse else None
        if nxt is None:
            kernel = [(p, d + 1, n if o == HERE else o) for lo, hi, p, d, o in col.scans if lo <= b <= hi]
            for t in col.templates:
                kernel += [(p, d, n) for p, d in t.step.get(b, ())]
            if not reuse:
                return ParserState(self.cg, n + 1, _closure(self.cg, kernel, n + 1, hist), hist)
            key = tuple(kernel)
            nxt = col.by_kernel.get(key)
            if nxt is None:
                nxt = col.by_kernel[key] = _closure(self.cg, kernel, n + 1, hist)
            col.succ[b] = nxt
        return ParserState(self.cg, n + 1, nxt, hist)

    def advance(self, b: int) -> "ParserState":
        nxt = self.try_advance(b)
        if nxt is None:
            raise RejectedByte(self.consumed, b, self.allowed_next_bytes())
        return nxt

    def advance_bytes(self, data: bytes) -> "ParserState":
        state = self
        for b in data:
            state = state.advance(b)
        return state

    def forget_probes(self, since: int = 0) -> None:
        """Drop cached successor columns of positions ``since..consumed-1``.

        Columns that lie on this state's own history stay reachable; only
        the side branches explored while probing are released.
        """
        for pos in range(since, self.consumed):
            self._history[pos].succ.clear()
            self._history[pos].by_kernel.clear()

    def clone(self) -> "ParserState":
        return ParserState(self.cg, self.consumed, self._col, self._history)

    def frontier(self) -> list:
        """Items of the current column as ``(rule, alternative, dot, origin)``."""
        out = []
        for p, d, o in self._col.items:
            nt = self.cg.lhs[p]
            alt = self.cg.by_lhs[nt].index(p)
            out.append((self.cg.names[nt], alt, d, self.consumed if o == HERE else o))
        return sorted(out)


def init(grammar: Grammar) -> ParserState:
    return ParserState.initial(grammar)


@dataclass
class ParseReport:
    accepted: bool
    failure_position: int | None = None
    expected: frozenset = field(default_factory=frozenset)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "failure_position": self.failure_position,
            "expected_bytes": sorted(self.expected),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _run(grammar: Grammar, text: bytes):
    state = ParserState.initial(grammar)
    for i, b in enumerate(text):
        nxt = state.try_advance(b)
        if nxt is None:
            return state, i
        state = nxt
    return state, None


def recognize(grammar: Grammar, text: bytes) -> ParseReport:
    """Check whether ``text`` is a sentence of ``grammar``."""
    state, failed_at = _run(grammar, bytes(text))
    if failed_at is not None:
        return ParseReport(False, failed_at, state.allowed_next_bytes())
    if state.is_complete:
        return ParseReport(True)
    return ParseReport(False, len(text), state.allowed_next_bytes())


def is_prefix(grammar: Grammar, text: bytes) -> bool:
    """True iff ``text`` can be extended to a sentence."""
    return _run(grammar, bytes(text))[1] is None


# ---------------------------------------------------------------------------
# Derivation extraction


@dataclass
class Derivation:
    rule: str
    start: int
    end: int
    children: list = field(default_factory=list)

    def walk(self):
        """Nodes in pre-order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


class _Extractor:
    def __init__(self, state: ParserState, text: bytes):
        self.state = state
        self.cg = state.cg
        self.text = text
        self.active: set = set()
        # completed[(j, nt)] -> sorted list of (origin, production)
        self._completed: dict = {}

    def completed(self, j: int, nt: int) -> list:
        key = (j, nt)
        got = self._completed.get(key)
        if got is None:
            col = self.state.column(j)
            got = sorted(
                (j if o == HERE else o, p) for p, d, o in col.items
                if d == len(self.cg.rhs[p]) and self.cg.lhs[p] == nt
            )
            self._completed[key] = got
        return got

    def has(self, k: int, p: int, d: int, origin: int) -> bool:
        return (p, d, HERE if origin == k else origin) in self.state.column(k)

    def nonterminal(self, nt: int, i: int, j: int):
        """Derivations of ``nt`` over text[i:j]; yields lists of children."""
        key = (nt, i, j)
        if key in self.active:
            return
        self.active.add(key)
        try:
            for o, p in self.completed(j, nt):
                if o != i:
                    continue
                yield from self.sequence(p, len(self.cg.rhs[p]), i, j)
        finally:
            self.active.discard(key)

    def sequence(self, p: int, d: int, i: int, j: int):
        if d == 0:
            if i == j:
                yield []
            return
        s = self.cg.rhs[p][d - 1]
        if type(s) is not int:
            if j > i and s[0] <= self.text[j - 1] <= s[1] and self.has(j - 1, p, d - 1, i):
                yield from self.sequence(p, d - 1, i, j - 1)
            return
        # smallest origin first, i.e. the longest span for the last symbol
        for k in sorted({o for o, _ in self.completed(j, s) if i <= o}):
            if not self.has(k, p, d - 1, i):
                continue
            for sub in self.nonterminal(s, k, j):
                node = self._wrap(s, k, j, sub)
                for rest in self.sequence(p, d - 1, i, k):
                    yield rest + node
                    return
                break

    def _wrap(self, nt: int, i: int, j: int, children: list) -> list:
        if self.cg.user[nt]:
            return [Derivation(self.cg.names[nt], i, j, children)]
        return children


def _extract(grammar: Grammar, text: bytes):
    state = ParserState.initial(grammar)
    for b in text:
        state = state.advance(b)
    if not state.is_complete:
        raise RejectedByte(len(text), -1, state.allowed_next_bytes())
    ex = _Extractor(state, text)
    start = ex.cg.ids[grammar.start]
    for children in ex.nonterminal(start, 0, len(text)):
        return Derivation(grammar.start, 0, len(text), children)
    raise AssertionError("complete chart without a derivation")


def extract_derivation(grammar: Grammar, text: bytes) -> Derivation:
    """One derivation of an accepted text.

    Ties are broken by the smallest origin for each nonterminal, then the
    lowest alternative index. Raises :class:`RejectedByte` if the text is
    not a sentence.
    """
    result: dict = {}

    def work():
        limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(limit, 200_000))
        try:
            result["value"] = _extract(grammar, bytes(text))
        except BaseException as exc:  # re-raised in the caller thread
            result["error"] = exc
        finally:
            sys.setrecursionlimit(limit)

    # deep right-recursive repetition needs more stack than the main thread has
    old = threading.stack_size()
    threading.stack_size(256 * 1024 * 1024)
    try:
        t = threading.Thread(target=work)
        t.start()
    finally:
        threading.stack_size(old)
    t.join()
    if "error" in result:
        raise result["error"]
    return result["value"]
