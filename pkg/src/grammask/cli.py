"""Command-line front end.

    grammask generate --grammar G.g --prompt "..." --out model.txt
    grammask validate --bundle cd4a model.txt
    grammask bench --bundle cd4a --out reports/
    grammask train --bundle cd4a --out bigram.json
    grammask serve --provider ngram:bigram.json

Exit codes for ``generate``: 0 Complete, 2 BudgetExhausted, 3 DeadEnd and
1 for unreadable or malformed inputs. ``validate`` exits 0 when the text is
accepted and 4 when it is rejected.
"""
from __future__ import annotations

import argparse
import json
import logging
import socketserver
import sys
from pathlib import Path

import numpy as np

from .bench import (
    SEPARATOR,
    BenchConfig,
    PromptBundle,
    assemble_prompt,
    fsl_examples,
    load_tasks,
    run_bench,
    summarize,
    train_on_bundle,
    write_reports,
    format_summary,
)
from .decoder import DEFAULT_BUDGET, DecodeSession, Status, decode, decode_unconstrained
from .dsl import BUNDLE_NAMES, DslBundle, bundled, data_path, load_bundle, validate
from .earley import recognize
from .grammar import GrammarError, load_grammar
from .lm import ExternalProvider, NGramModel, NoiseWrapper, ProviderProtocolError, serve_stream
from .masking import Vocabulary, VocabularyError, build_token_trie

log = logging.getLogger("grammask")

EXIT_CODES = {Status.COMPLETE: 0, Status.BUDGET_EXHAUSTED: 2, Status.DEAD_END: 3}
EXIT_INPUT_ERROR = 1
EXIT_REJECTED = 4


class UniformProvider:
    """All-zero logits; greedy choice then falls to the lowest allowed id."""

    shareable = True

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def next_logits(self, context):
        return np.zeros(self.vocab_size)


def _bundle(spec: str) -> DslBundle:
    if spec in BUNDLE_NAMES or spec == "cd4a_flawed":
        return bundled(spec)
    return load_bundle(spec)


def _provider_factory(args, vocab: Vocabulary, bundle: DslBundle | None = None):
    spec = args.provider
    if spec == "uniform":
        base = UniformProvider(len(vocab))
    elif spec.startswith("ngram:"):
        base = NGramModel.load(spec[6:])
        if base.vocab_size != len(vocab):
            raise ValueError(f"model vocabulary size {base.vocab_size} != {len(vocab)}")
    elif spec.startswith("external:"):
        addr = spec[9:]
        return lambda: ExternalProvider(addr, len(vocab))
    elif spec == "bundle":
        if bundle is None:
            raise ValueError("--provider bundle needs --bundle")
        base = train_on_bundle(bundle, vocab, args.order)
    else:
        raise ValueError(f"unknown provider {spec!r}; use uniform, bundle, ngram:PATH or external:ADDR")
    if args.noise > 0:
        wrapped = NoiseWrapper(base, seed=args.seed, noise_scale=args.noise)
        return lambda: wrapped
    return lambda: base


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vocab", type=Path, default=None, help="vocabulary JSONL (default: bundled)")
    p.add_argument("--provider", default="uniform",
                   help="uniform | bundle | ngram:PATH | external:HOST:PORT | external:exec:CMD")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian logit noise scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order", type=int, default=2, help="n-gram order for --provider bundle")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)


def _vocab(args) -> Vocabulary:
    return Vocabulary.load(args.vocab or data_path("vocab.jsonl"))


def cmd_generate(args) -> int:
    vocab = _vocab(args)
    trie = build_token_trie(vocab)
    bundle = _bundle(args.bundle) if args.bundle else None
    if args.grammar:
        grammar = load_grammar(args.grammar)
    elif bundle is not None:
        grammar = bundle.grammar
    else:
        raise ValueError("need --grammar or --bundle")
    task = args.prompt or ""
    if args.prompt_file:
        task = Path(args.prompt_file).read_text(encoding="utf-8")
    examples = fsl_examples(bundle) if bundle is not None and not args.no_examples else []
    prompt = assemble_prompt(PromptBundle(examples, task), trie, args.sep.encode())
    provider = _provider_factory(args, vocab, bundle)()
    session = DecodeSession(grammar, vocab, provider, prompt, args.budget, trie)
    try:
        if args.mode == "constrained":
            res = decode(session, shortcut=not args.no_shortcut)
        else:
            res = decode_unconstrained(session)
    finally:
        if hasattr(provider, "close"):
            provider.close()
    out = Path(args.out)
    out.write_bytes(res.output)
    sidecar = out.with_name(out.name + ".json")
    meta = res.to_dict()
    meta["mode"] = args.mode
    meta["parsed"] = recognize(grammar, res.output).accepted
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    print(f"{res.status.value}: {len(res.output)} bytes, {res.lm_calls} LM calls -> {out}", file=sys.stderr)
    return EXIT_CODES[res.status]


def cmd_validate(args) -> int:
    if args.grammar:
        grammar = load_grammar(args.grammar)
    elif args.bundle:
        grammar = _bundle(args.bundle).grammar
    else:
        raise ValueError("need --grammar or --bundle")
    text = sys.stdin.buffer.read() if args.file == "-" else Path(args.file).read_bytes()
    report = recognize(grammar, text)
    print(report.to_json())
    return 0 if report.accepted else EXIT_REJECTED


def cmd_bench(args) -> int:
    vocab = _vocab(args)
    bundle = _bundle(args.bundle)
    tasks = load_tasks(args.tasks or data_path("tasks.jsonl"))
    if args.limit:
        tasks = tasks[: args.limit]
    cfg = BenchConfig(
        bundle=bundle,
        vocab=vocab,
        provider_factory=_provider_factory(args, vocab, bundle),
        tasks=tasks,
        modes=args.modes.split(","),
        budget=args.budget,
        jobs=args.jobs,
        check_shortcut=args.check_shortcut,
        sep=args.sep.encode(),
    )
    rows = run_bench(cfg)
    summary = summarize(rows, bundle.countable)
    if args.out:
        write_reports(rows, summary, args.out, bundle.countable)
    print(format_summary(summary, bundle.countable))
    return 0


def cmd_train(args) -> int:
    vocab = _vocab(args)
    model = train_on_bundle(_bundle(args.bundle), vocab, args.order)
    model.save(args.out)
    print(f"order-{model.order} model with {len(model.counts)} contexts -> {args.out}", file=sys.stderr)
    return 0


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        rfile = (line.decode("utf-8") for line in self.rfile)

        class W:
            def write(_, s):
                self.wfile.write(s.encode("utf-8"))

            def flush(_):
                self.wfile.flush()

        serve_stream(self.server.provider, rfile, W())


def cmd_serve(args) -> int:
    vocab = _vocab(args)
    provider = _provider_factory(args, vocab)()
    if args.port is None:
        serve_stream(provider, sys.stdin, sys.stdout)
        return 0
    with socketserver.ThreadingTCPServer((args.host, args.port), _Handler) as srv:
        srv.provider = provider
        print(f"serving on {srv.server_address[0]}:{srv.server_address[1]}", file=sys.stderr, flush=True)
        srv.serve_forever()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="grammask", description="Grammar-masked generation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate one artifact")
    _shared(g)
    g.add_argument("--grammar", type=Path)
    g.add_argument("--bundle", help="bundle name or directory; supplies grammar and few-shot examples")
    g.add_argument("--prompt", default="")
    g.add_argument("--prompt-file", type=Path)
    g.add_argument("--no-examples", action="store_true", help="skip the bundle's few-shot examples")
    g.add_argument("--sep", default=SEPARATOR.decode(), help="separator between prompt parts")
    g.add_argument("--mode", choices=["constrained", "unconstrained"], default="constrained")
    g.add_argument("--no-shortcut", action="store_true", help="consult the model even at forced bytes")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="check a file against a grammar")
    v.add_argument("--grammar", type=Path)
    v.add_argument("--bundle")
    v.add_argument("file", help="path, or - for stdin")
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("bench", help="constrained vs unconstrained benchmark")
    _shared(b)
    b.set_defaults(provider="bundle", noise=0.5)
    b.add_argument("--bundle", default="cd4a")
    b.add_argument("--tasks", type=Path)
    b.add_argument("--limit", type=int, default=0, help="use only the first N tasks")
    b.add_argument("--modes", default="constrained,unconstrained")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--check-shortcut", action="store_true",
                   help="rerun constrained tasks without the forced-byte shortcut and compare")
    b.add_argument("--sep", default=SEPARATOR.decode())
    b.add_argument("--out", type=Path)
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("train", help="fit an n-gram model on a bundle's samples")
    t.add_argument("--bundle", default="cd4a")
    t.add_argument("--vocab", type=Path)
    t.add_argument("--order", type=int, default=2)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("serve", help="answer provider requests over stdio or TCP")
    _shared(s)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int)
    s.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, GrammarError, VocabularyError, ProviderProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
