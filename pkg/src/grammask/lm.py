"""Logit providers: an add-one n-gram model, seeded noise, external processes."""
from __future__ import annotations

import hashlib
import json
import shlex
import socket
import subprocess
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NGramModel",
    "OrderTooLarge",
    "train_ngram",
    "NoiseWrapper",
    "ProviderProtocolError",
    "ExternalProvider",
    "serve_stream",
]


class OrderTooLarge(ValueError):
    pass


@dataclass(eq=False)
class NGramModel:
    """Add-one smoothed n-gram counts over token ids.

    ``logit(t | ctx) = ln((count(ctx, t) + 1) / (total(ctx) + vocab_size))``
    where ``ctx`` is the last ``order - 1`` tokens of the context.
    """

    order: int
    vocab_size: int
    counts: dict = field(default_factory=dict)  # context tuple -> {token: count}

    shareable = True

    def __post_init__(self):
        self._cache: dict = {}
        self._lock = threading.Lock()

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        k = self.order - 1
        ctx = tuple(context[len(context) - k:]) if k else ()
        if len(ctx) < k:
            ctx = None
        with self._lock:
            hit = self._cache.get(ctx)
        if hit is not None:
            return hit.copy()
        row = self.counts.get(ctx, {}) if ctx is not None else {}
        c = np.zeros(self.vocab_size, dtype=np.float64)
        for tok, n in row.items():
            c[tok] = n
        logits = np.log((c + 1.0) / (c.sum() + self.vocab_size))
        with self._lock:
            self._cache[ctx] = logits
        return logits.copy()

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "vocab_size": self.vocab_size,
            "counts": [[list(ctx), {str(t): n for t, n in sorted(row.items())}]
                       for ctx, row in sorted(self.counts.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NGramModel":
        counts = {tuple(ctx): {int(t): int(n) for t, n in row.items()} for ctx, row in d["counts"]}
        return cls(int(d["order"]), int(d["vocab_size"]), counts)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "NGramModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def train_ngram(corpus: Iterable[Sequence[int]], n: int, vocab_size: int) -> NGramModel:
    if n < 1:
        raise ValueError("order must be >= 1")
    corpus = [list(s) for s in corpus]
    counts: dict = defaultdict(lambda: defaultdict(int))
    for seq in corpus:
        for tok in seq:
            if not 0 <= tok < vocab_size:
                raise ValueError(f"token id {tok} outside vocabulary of size {vocab_size}")
        for i in range(n - 1, len(seq)):
            counts[tuple(seq[i - n + 1:i])][seq[i]] += 1
    if corpus and not counts and any(corpus):
        raise OrderTooLarge(f"no sequence is long enough for order {n}")
    return NGramModel(n, vocab_size, {ctx: dict(row) for ctx, row in counts.items()})


class NoiseWrapper:
    """Adds seeded Gaussian noise to another provider's logits.

    The noise for a context is drawn from numpy's PCG64 generator seeded with
    ``seed`` and a BLAKE2b digest of the context ids, so a fixed context always
    sees the same perturbation while different contexts see independent draws.
    """

    shareable = True

    def __init__(self, inner, seed: int = 0, noise_scale: float = 1.0):
        if noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        self.inner = inner
        self.seed = seed
        self.noise_scale = noise_scale

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        logits = np.asarray(self.inner.next_logits(context), dtype=np.float64)
        if self.noise_scale == 0:
            return logits
        digest = hashlib.blake2b(np.asarray(context, dtype="<i8").tobytes(), digest_size=16).digest()
        entropy = [self.seed, *np.frombuffer(digest, dtype="<u8").tolist()]
        rng = np.random.Generator(np.random.PCG64(entropy))
        return logits + self.noise_scale * rng.standard_normal(logits.shape[0])


class ProviderProtocolError(RuntimeError):
    pass


class ExternalProvider:
    """Newline-delimited JSON client for an external model.

    ``address`` is either ``HOST:PORT`` for a TCP socket or ``exec:COMMAND``
    to spawn a process and talk over its stdin/stdout.
    """

    shareable = False

    def __init__(self, address: str, vocab_size: int, timeout: float | None = 60.0):
        self.vocab_size = vocab_size
        self._next_id = 0
        self._proc = None
        self._sock = None
        if address.startswith("exec:"):
            self._proc = subprocess.Popen(
                shlex.split(address[5:]), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True,
            )
            self._rfile, self._wfile = self._proc.stdout, self._proc.stdin
        else:
            host, _, port = address.rpartition(":")
            if not host or not port.isdigit():
                raise ValueError(f"bad provider address {address!r}; expected HOST:PORT or exec:COMMAND")
            self._sock = socket.create_connection((host, int(port)), timeout=timeout)
            self._rfile = self._sock.makefile("r", encoding="utf-8")
            self._wfile = self._sock.makefile("w", encoding="utf-8")

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        rid = self._next_id
        self._next_id += 1
        try:
            self._wfile.write(json.dumps({"id": rid, "context": [int(t) for t in context]}) + "\n")
            self._wfile.flush()
            line = self._rfile.readline()
        except OSError as exc:
            raise ProviderProtocolError(f"provider connection failed: {exc}") from exc
        if not line:
            raise ProviderProtocolError("provider closed the connection")
        try:
            resp = json.loads(line)
            logits = np.asarray(resp["logits"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderProtocolError(f"malformed provider response: {line[:80]!r}") from exc
        if resp.get("id") != rid:
            raise ProviderProtocolError(f"response id {resp.get('id')!r} does not match request {rid}")
        if logits.shape != (self.vocab_size,) or not np.all(np.isfinite(logits)):
            raise ProviderProtocolError(f"expected {self.vocab_size} finite logits, got shape {logits.shape}")
        return logits

    def close(self) -> None:
        if self._proc is not None:
            self._wfile.close()
            self._proc.wait(timeout=10)
            self._proc = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_stream(provider, rfile, wfile) -> None:
    """Answer provider-protocol requests from ``rfile`` until EOF."""
    for line in rfile:
        if not line.strip():
            continue
        req = json.loads(line)
        logits = provider.next_logits(req["context"])
        wfile.write(json.dumps({"id": req["id"], "logits": [float(x) for x in logits]}) + "\n")
        wfile.flush()
