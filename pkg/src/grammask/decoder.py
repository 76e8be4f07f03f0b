"""Constrained and unconstrained greedy decoding loops."""
from __future__ import annotations

import enum
import time
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .earley import ParserState
from .grammar import Grammar
from .masking import (
    IncrementalTokenizer,
    TokenTrie,
    Vocabulary,
    build_token_trie,
    compute_mask,
    forced_continuation,
)

__all__ = [
    "LogitProvider",
    "Status",
    "DecodeSession",
    "DecodeResult",
    "EmptyMask",
    "softmax",
    "select_token",
    "decode",
    "decode_unconstrained",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 512


class LogitProvider(Protocol):
    def next_logits(self, context: Sequence[int]) -> np.ndarray: ...


class Status(str, enum.Enum):
    COMPLETE = "Complete"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    DEAD_END = "DeadEnd"


class EmptyMask(ValueError):
    pass


@dataclass
class DecodeSession:
    grammar: Grammar | None
    vocab: Vocabulary
    provider: LogitProvider
    prompt_tokens: Sequence[int] = ()
    budget: int = DEFAULT_BUDGET
    trie: TokenTrie | None = None

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.trie is None:
            self.trie = build_token_trie(self.vocab)


@dataclass
class DecodeResult:
    output: bytes
    status: Status
    tokens_used: int = 0
    lm_calls: int = 0
    forced_bytes: int = 0
    wall_time: float = 0.0
    token_ids: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["output"] = self.output.decode("utf-8", errors="replace")
        d["status"] = self.status.value
        return d


def softmax(logits) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    e = np.exp(x - x.max())
    return e / e.sum()


def select_token(probs, mask) -> int:
    """Most probable allowed token; ties go to the lowest id."""
    allowed = np.flatnonzero(mask)
    if allowed.size == 0:
        raise EmptyMask("no admissible token")
    # argmax returns the first maximum, i.e. the lowest id
    return int(allowed[np.argmax(np.asarray(probs)[allowed])])


def _logits(session: DecodeSession, out: bytes, tok: IncrementalTokenizer) -> np.ndarray:
    context = list(session.prompt_tokens) + tok(out)
    logits = np.asarray(session.provider.next_logits(context), dtype=np.float64)
    if logits.shape != (len(session.vocab),):
        raise ValueError(f"provider returned {logits.shape} logits for a vocabulary of {len(session.vocab)}")
    return logits


def decode(session: DecodeSession, shortcut: bool = True, on_step=None) -> DecodeResult:
    """Greedy generation restricted to the session grammar.

    With ``shortcut`` the forced continuation is appended without calling the
    model. Without it the model is still consulted at forced states but may
    only pick tokens lying inside the forced bytes, so both settings produce
    the same output. Forced bytes never count against the budget in either
    setting. ``on_step(output_bytes)`` is called after every append.
    """
    t0 = time.perf_counter()
    vocab, trie = session.vocab, session.trie
    state = ParserState.initial(session.grammar)
    out = bytearray()
    chosen: list[int] = []
    lm_calls = used = forced = 0
    retok = IncrementalTokenizer(trie)

    def result(status: Status) -> DecodeResult:
        return DecodeResult(bytes(out), status, used, lm_calls, forced,
                            time.perf_counter() - t0, chosen)

    while True:
        pending = b""
        if shortcut:
            extra, state = forced_continuation(state)
            if extra:
                out += extra
                forced += len(extra)
                if on_step:
                    on_step(bytes(out))
        else:
            pending, _ = forced_continuation(state)
        if state.is_complete and not state.allowed_next_bytes():
            return result(Status.COMPLETE)
        if used >= session.budget and not pending:
            return result(Status.BUDGET_EXHAUSTED)

        probs = softmax(_logits(session, bytes(out), retok))
        lm_calls += 1
        mask = compute_mask(state, trie, vocab)
        if pending:
            inside = np.zeros_like(mask)
            inside[trie.prefixes(pending)] = True
            mask &= inside
        if not mask.any():
            return result(Status.DEAD_END)
        tok = select_token(probs, mask)
        chosen.append(tok)
        if tok == vocab.eos_id:
            return result(Status.COMPLETE)
        data = vocab[tok]
        before = state.consumed
        state = state.advance_bytes(data)
        state.forget_probes(before)
        out += data
        if pending:
            forced += len(data)
        else:
            used += 1
        if on_step:
            on_step(bytes(out))


def decode_unconstrained(session: DecodeSession) -> DecodeResult:
    """The same greedy loop with every token allowed and no parser."""
    t0 = time.perf_counter()
    vocab = session.vocab
    out = bytearray()
    chosen: list[int] = []
    lm_calls = used = 0
    retok = IncrementalTokenizer(session.trie)
    status = Status.BUDGET_EXHAUSTED
    while used < session.budget:
        probs = softmax(_logits(session, bytes(out), retok))
        lm_calls += 1
        tok = int(np.argmax(probs))
        chosen.append(tok)
        if tok == vocab.eos_id:
            status = Status.COMPLETE
            break
        out += vocab[tok]
        used += 1
    return DecodeResult(bytes(out), status, used, lm_calls, 0, time.perf_counter() - t0, chosen)
