"""Vocabulary handling, the token trie and per-step token masks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .earley import ParserState

__all__ = [
    "Vocabulary",
    "VocabularyError",
    "TrieNode",
    "TokenTrie",
    "build_token_trie",
    "compute_mask",
    "mask_by_replay",
    "forced_continuation",
    "tokenize",
    "IncrementalTokenizer",
]


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Token byte strings indexed by id; the single empty entry is EOS."""

    tokens: tuple
    eos_id: int = field(init=False)

    def __post_init__(self):
        empties = [i for i, t in enumerate(self.tokens) if len(t) == 0]
        if len(empties) != 1:
            raise VocabularyError(f"need exactly one EOS (empty) token, found {len(empties)}")
        object.__setattr__(self, "eos_id", empties[0])

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token_id: int) -> bytes:
        return self.tokens[token_id]

    def check_coverage(self) -> None:
        singles = {t[0] for t in self.tokens if len(t) == 1}
        missing = sorted(set(range(256)) - singles)
        if missing:
            raise VocabularyError(f"vocabulary lacks {len(missing)} single-byte tokens, e.g. {missing[:5]}")

    @classmethod
    def from_entries(cls, entries, check: bool = True) -> "Vocabulary":
        """Build from ``(id, bytes)`` pairs in any order; ids must be dense."""
        by_id = {}
        for tid, data in entries:
            if tid in by_id:
                raise VocabularyError(f"duplicate token id {tid}")
            by_id[tid] = bytes(data)
        if sorted(by_id) != list(range(len(by_id))):
            raise VocabularyError("token ids must be dense 0..N-1")
        vocab = cls(tuple(by_id[i] for i in range(len(by_id))))
        if check:
            vocab.check_coverage()
        return vocab

    @classmethod
    def load(cls, path, check: bool = True) -> "Vocabulary":
        entries = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    entries.append((int(rec["id"]), bytes.fromhex(rec["bytes_hex"])))
                except (KeyError, ValueError, TypeError) as exc:
                    raise VocabularyError(f"{path}:{lineno}: bad vocabulary record ({exc})") from exc
        return cls.from_entries(entries, check=check)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, t in enumerate(self.tokens):
                f.write(json.dumps({"id": i, "bytes_hex": t.hex()}) + "\n")


class TrieNode:
    __slots__ = ("children", "ids")

    def __init__(self):
        self.children: dict[int, TrieNode] = {}
        self.ids: list[int] = []


class TokenTrie:
    def __init__(self):
        self.root = TrieNode()
        self.size = 1
        self.depth = 0

    def insert(self, data: bytes, token_id: int) -> None:
        node = self.root
        for b in data:
            nxt = node.children.get(b)
            if nxt is None:
                nxt = node.children[b] = TrieNode()
                self.size += 1
            node = nxt
        node.ids.append(token_id)
        self.depth = max(self.depth, len(data))

    def lookup(self, data: bytes) -> list[int]:
        node = self.root
        for b in data:
            node = node.children.get(b)
            if node is None:
                return []
        return list(node.ids)

    def prefixes(self, data: bytes) -> list[int]:
        """Ids of all non-empty tokens that are prefixes of ``data``."""
        out = []
        node = self.root
        for b in data:
            node = node.children.get(b)
            if node is None:
                break
            out.extend(node.ids)
        return out


def build_token_trie(vocab: Vocabulary) -> TokenTrie:
    trie = TokenTrie()
    for tid, data in enumerate(vocab.tokens):
        if tid != vocab.eos_id:
            trie.insert(data, tid)
    return trie


def compute_mask(state: ParserState, trie: TokenTrie, vocab: Vocabulary) -> np.ndarray:
    """Boolean admissibility vector over the vocabulary for ``state``.

    Walks the trie depth first alongside the parser. A subtree is dropped at
    the first byte the parser rejects; leaves only need a membership test in
    the allowed-byte set, so no parser state is built for them.
    """
    mask = np.zeros(len(vocab), dtype=bool)
    if state.is_complete:
        mask[vocab.eos_id] = True
    stack = [(trie.root, state)]
    while stack:
        node, st = stack.pop()
        allowed = st.byte_mask
        for b, child in node.children.items():
            if not (allowed >> b) & 1:
                continue
            if child.ids:
                mask[child.ids] = True
            if child.children:
                stack.append((child, st.try_advance(b)))
    return mask


def mask_by_replay(state: ParserState, vocab: Vocabulary) -> np.ndarray:
    """Reference mask: replay every token byte by byte, no trie and no caches."""
    mask = np.zeros(len(vocab), dtype=bool)
    for tid, data in enumerate(vocab.tokens):
        if tid == vocab.eos_id:
            mask[tid] = state.is_complete
            continue
        st = state
        for b in data:
            st = st.try_advance(b, reuse=False)
            if st is None:
                break
        mask[tid] = st is not None
    return mask


def forced_continuation(state: ParserState) -> tuple[bytes, ParserState]:
    """Bytes the grammar forces next, and the state after them.

    Stops at a complete state even when one byte is allowed, since ending
    is then a legal alternative.
    """
    out = bytearray()
    while not state.is_complete:
        m = state.byte_mask
        if m == 0 or m & (m - 1):
            break
        b = m.bit_length() - 1
        state = state.advance(b)
        out.append(b)
    return bytes(out), state


def _longest_match(data: bytes, i: int, root: TrieNode) -> tuple[int, int]:
    node, best, best_len = root, None, 0
    j, n = i, len(data)
    while j < n:
        node = node.children.get(data[j])
        if node is None:
            break
        j += 1
        if node.ids:
            best, best_len = min(node.ids), j - i
    if best is None:
        raise VocabularyError(f"byte {data[i]:#04x} at offset {i} has no token")
    return best, best_len


def tokenize(data: bytes, trie: TokenTrie) -> list[int]:
    """Greedy longest-match tokenization; ties go to the lowest id."""
    out = []
    i = 0
    while i < len(data):
        tok, size = _longest_match(data, i, trie.root)
        out.append(tok)
        i += size
    return out


class IncrementalTokenizer:
    """:func:`tokenize` for a byte string that only grows at the end.

    The match at offset ``i`` depends only on ``data[i:i + trie.depth]``, so
    tokens whose window lies inside the previously seen bytes are kept and
    only the tail is re-tokenized.
    """

    def __init__(self, trie: TokenTrie):
        self.trie = trie
        self.data = b""
        self.spans: list[tuple[int, int]] = []  # (start, end) per token
        self.ids: list[int] = []

    def __call__(self, data: bytes) -> list[int]:
        if not data.startswith(self.data):
            self.data, self.spans, self.ids = b"", [], []
        old = len(self.data)
        keep = len(self.spans)
        while keep and self.spans[keep - 1][0] + self.trie.depth > old:
            keep -= 1
        del self.spans[keep:], self.ids[keep:]
        i = self.spans[-1][1] if keep else 0
        while i < len(data):
            tok, size = _longest_match(data, i, self.trie.root)
            self.spans.append((i, i + size))
            self.ids.append(tok)
            i += size
        self.data = bytes(data)
        return list(self.ids)
