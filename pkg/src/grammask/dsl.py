"""Bundled DSLs: grammar, sample models, validation and construct counting.

A bundle directory looks like::

    <name>/grammar.g
    <name>/countable.json            list of rule names to tally
    <name>/samples/valid/*.txt
    <name>/samples/invalid/*.txt     each with <stem>.expect.json
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

from .earley import ParseReport, RejectedByte, extract_derivation, recognize
from .grammar import Grammar, load_grammar

__all__ = [
    "DslBundle",
    "NotParsable",
    "load_bundle",
    "bundled",
    "data_path",
    "validate",
    "count_rule_occurrences",
    "BUNDLE_NAMES",
]

BUNDLE_NAMES = ("cd4a", "sen", "automata")


class NotParsable(ValueError):
    def __init__(self, report: ParseReport):
        super().__init__(f"text rejected at byte {report.failure_position}")
        self.report = report


@dataclass(eq=False)
class DslBundle:
    name: str
    root: Path
    grammar: Grammar
    countable: list = field(default_factory=list)

    def _samples(self, kind: str) -> list[Path]:
        return sorted((self.root / "samples" / kind).glob("*.txt"))

    @cached_property
    def valid_samples(self) -> list[Path]:
        return self._samples("valid")

    @cached_property
    def invalid_samples(self) -> list[Path]:
        return self._samples("invalid")

    def expected_failure(self, sample: Path) -> int:
        sidecar = sample.with_name(sample.stem + ".expect.json")
        return json.loads(sidecar.read_text())["failure_position"]


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("grammask") / "data")).joinpath(*parts)


def load_bundle(path) -> DslBundle:
    root = Path(path)
    countable_file = root / "countable.json"
    countable = json.loads(countable_file.read_text()) if countable_file.exists() else []
    grammar = load_grammar(root / "grammar.g")
    for rule in countable:
        if rule not in grammar.rules:
            raise ValueError(f"{countable_file}: {rule!r} is not a rule of the grammar")
    return DslBundle(root.name, root, grammar, list(countable))


def bundled(name: str) -> DslBundle:
    return load_bundle(data_path(name))


def validate(bundle: DslBundle, text: bytes) -> ParseReport:
    return recognize(bundle.grammar, text)


def count_rule_occurrences(bundle: DslBundle, text: bytes) -> dict:
    """Occurrences of each countable rule in one derivation of ``text``."""
    try:
        tree = extract_derivation(bundle.grammar, text)
    except RejectedByte:
        raise NotParsable(recognize(bundle.grammar, text)) from None
    tally = Counter(node.rule for node in tree.walk())
    return {rule: tally.get(rule, 0) for rule in bundle.countable}
