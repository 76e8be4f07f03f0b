"""Few-shot prompt assembly and the constrained vs. unconstrained benchmark."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean
from typing import Callable, Sequence

from .decoder import DecodeResult, DecodeSession, Status, decode, decode_unconstrained
from .dsl import DslBundle, count_rule_occurrences, validate
from .lm import NGramModel, train_ngram
from .masking import TokenTrie, Vocabulary, build_token_trie, tokenize

__all__ = [
    "SEPARATOR",
    "PromptBundle",
    "assemble_prompt",
    "fsl_examples",
    "load_tasks",
    "train_on_bundle",
    "BenchConfig",
    "run_bench",
    "summarize",
    "write_reports",
    "ROW_FIELDS",
    "format_summary",
]

log = logging.getLogger(__name__)

SEPARATOR = b"\n\n"
ROW_FIELDS = ["mode", "task_id", "status", "time_s", "parsed", "lm_calls", "tokens_used"]
MODES = ("constrained", "unconstrained")


@dataclass
class PromptBundle:
    examples: list = field(default_factory=list)  # (question, answer) pairs
    task: str = ""

    def text(self, sep: bytes = SEPARATOR) -> bytes:
        parts = []
        for q, a in self.examples:
            parts += [_b(q), _b(a)]
        parts.append(_b(self.task))
        return sep.join(parts)


def _b(s) -> bytes:
    return s if isinstance(s, bytes) else s.encode("utf-8")


def assemble_prompt(bundle: PromptBundle, trie: TokenTrie, sep: bytes = SEPARATOR) -> list[int]:
    """Examples then task, joined by ``sep``, tokenized by longest match."""
    return tokenize(bundle.text(sep), trie)


def fsl_examples(bundle: DslBundle) -> list[tuple[str, bytes]]:
    """Question/answer pairs from ``fsl.json`` in the bundle, if present."""
    path = bundle.root / "fsl.json"
    if not path.exists():
        return []
    return [(e["question"], (bundle.root / e["answer"]).read_bytes())
            for e in json.loads(path.read_text())]


def load_tasks(path) -> list[dict]:
    tasks = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                tasks.append({"id": int(rec["id"]), "prompt": str(rec["prompt"])})
    return tasks


def train_on_bundle(bundle: DslBundle, vocab: Vocabulary, order: int = 2,
                    trie: TokenTrie | None = None) -> NGramModel:
    """n-gram model over the bundle's valid samples in few-shot layout.

    Each training sequence is ``question, separator, model, EOS``; samples
    without a question in ``fsl.json`` get a generic one.
    """
    trie = trie or build_token_trie(vocab)
    questions = {}
    path = bundle.root / "fsl.json"
    if path.exists():
        questions = {(bundle.root / e["answer"]).resolve(): e["question"]
                     for e in json.loads(path.read_text())}
    corpus = []
    for sample in bundle.valid_samples:
        q = questions.get(sample.resolve(), "Create the model.")
        corpus.append(tokenize(q.encode(), trie) + tokenize(SEPARATOR, trie)
                      + tokenize(sample.read_bytes(), trie) + [vocab.eos_id])
    return train_ngram(corpus, order, len(vocab))


@dataclass
class BenchConfig:
    bundle: DslBundle
    vocab: Vocabulary
    provider_factory: Callable[[], object]
    tasks: Sequence[dict]
    modes: Sequence[str] = MODES
    budget: int = 512
    jobs: int = 1
    check_shortcut: bool = False
    sep: bytes = SEPARATOR


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


def _run_one(cfg: BenchConfig, trie: TokenTrie, mode: str, task: dict, provider) -> dict:
    prompt = PromptBundle(fsl_examples(cfg.bundle), task["prompt"])
    session = DecodeSession(cfg.bundle.grammar, cfg.vocab, provider,
                            assemble_prompt(prompt, trie, cfg.sep), cfg.budget, trie)
    row = {"mode": mode, "task_id": task["id"]}
    try:
        if mode == "constrained":
            res = decode(session)
        elif mode == "unconstrained":
            res = decode_unconstrained(session)
        else:
            raise ValueError(f"unknown mode {mode!r}")
    except Exception as exc:  # recorded per row, the run continues
        log.warning("task %s (%s) failed: %s", task["id"], mode, exc)
        row.update(status="Error", time_s=0.0, parsed=False, lm_calls=0, tokens_used=0,
                   forced_bytes=0, output_sha=None, error=str(exc), counts={})
        return row
    parsed = res.status is Status.COMPLETE and validate(cfg.bundle, res.output).accepted
    row.update(
        status=res.status.value,
        time_s=round(res.wall_time, 6),
        parsed=parsed,
        lm_calls=res.lm_calls,
        tokens_used=res.tokens_used,
        forced_bytes=res.forced_bytes,
        output_sha=_digest(res.output),
        counts=count_rule_occurrences(cfg.bundle, res.output) if parsed else {},
    )
    if cfg.check_shortcut and mode == "constrained":
        off = decode(session, shortcut=False)
        row["shortcut_off_lm_calls"] = off.lm_calls
        row["shortcut_identical"] = off.output == res.output and off.status == res.status
    row["output"] = res.output.decode("utf-8", errors="replace")
    return row


def run_bench(cfg: BenchConfig) -> list[dict]:
    """Every task in every mode; rows come back ordered by (mode, task)."""
    trie = build_token_trie(cfg.vocab)
    jobs = [(m, t) for m in cfg.modes for t in cfg.tasks]

    def work(job):
        mode, task = job
        provider = cfg.provider_factory()
        try:
            return _run_one(cfg, trie, mode, task, provider)
        finally:
            if hasattr(provider, "close"):
                provider.close()

    if cfg.jobs <= 1:
        rows = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(work, jobs))
    return rows


def summarize(rows: list[dict], countable: Sequence[str]) -> dict:
    summary = {}
    for mode in dict.fromkeys(r["mode"] for r in rows):
        mine = [r for r in rows if r["mode"] == mode]
        aborted = sum(r["status"] == Status.BUDGET_EXHAUSTED.value for r in mine)
        done = [r for r in mine if r["status"] != Status.BUDGET_EXHAUSTED.value]
        parsed = [r for r in done if r["parsed"]]
        entry = {
            "total": len(mine),
            "aborted_count": aborted,
            "completed": len(done),
            "parsed": len(parsed),
            "parsed_pct": round(100.0 * len(parsed) / len(done), 4) if done else None,
            "time_s": round(mean(r["time_s"] for r in done), 6) if done else None,
        }
        for rule in countable:
            entry[f"mean_{rule}"] = round(mean(r["counts"][rule] for r in parsed), 6) if parsed else None
        summary[mode] = entry
    c, u = summary.get("constrained"), summary.get("unconstrained")
    if c and u and c["time_s"] and u["time_s"]:
        summary["overhead_factor"] = round(c["time_s"] / u["time_s"], 4)
    return summary


def write_reports(rows: list[dict], summary: dict, out_dir, countable: Sequence[str]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ROW_FIELDS)
        for r in rows:
            w.writerow([r["mode"], r["task_id"], r["status"], f"{r['time_s']:.6f}",
                        int(r["parsed"]), r["lm_calls"], r["tokens_used"]])
    cols = ["mode", "time_s", "parsed", "completed", "parsed_pct", "aborted_count", "total"]
    cols += [f"mean_{c}" for c in countable]
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for mode in MODES:
            if mode in summary:
                vals = [summary[mode][c] for c in cols[1:]]
                w.writerow([mode] + ["" if v is None else v for v in vals])
    with open(out / "report.json", "w") as f:
        json.dump({"summary": summary, "rows": rows},
                  f, indent=2)


def format_summary(summary: dict, countable: Sequence[str]) -> str:
    lines = [f"{'':22}{'Unconstrained':>16}{'Constrained':>16}"]
    u, c = summary.get("unconstrained", {}), summary.get("constrained", {})

    def cell(e, key, fmt):
        v = e.get(key)
        return f"{'N/A' if v is None else format(v, fmt):>16}"

    def parsed_cell(e):
        if not e or e.get("parsed_pct") is None:
            return f"{'N/A':>16}"
        return f"{e['parsed']}/{e['completed']} ({e['parsed_pct']:.2f}%)".rjust(16)

    lines.append(f"{'Time (s)':22}{cell(u, 'time_s', '.4f')}{cell(c, 'time_s', '.4f')}")
    lines.append(f"{'Parsed (%)':22}{parsed_cell(u)}{parsed_cell(c)}")
    lines.append(f"{'Aborted (budget)':22}{cell(u, 'aborted_count', 'd')}{cell(c, 'aborted_count', 'd')}")
    for rule in countable:
        key = f"mean_{rule}"
        lines.append(f"{rule.capitalize() + ' Count':22}{cell(u, key, '.4f')}{cell(c, key, '.4f')}")
    if "overhead_factor" in summary:
        lines.append(f"overhead factor (constrained / unconstrained time): {summary['overhead_factor']:.2f}x")
    return "\n".join(lines)
