import sys

import pytest

from grammask.dsl import (
    BUNDLE_NAMES,
    NotParsable,
    bundled,
    count_rule_occurrences,
    load_bundle,
    validate,
)
from oracles import DerivationCounter


@pytest.fixture(autouse=True)
def deep_stack():
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(20_000)
    yield
    sys.setrecursionlimit(old)


ALL = BUNDLE_NAMES + ("cd4a_flawed",)


def _cases(kind):
    return [(name, p) for name in ALL for p in getattr(bundled(name), kind)]


@pytest.mark.parametrize("name, path", _cases("valid_samples"), ids=lambda x: getattr(x, "stem", x))
def test_valid_samples_accepted(name, path):
    report = validate(bundled(name), path.read_bytes())
    assert report.accepted, report.to_dict()


@pytest.mark.parametrize("name, path", _cases("invalid_samples"), ids=lambda x: getattr(x, "stem", x))
def test_invalid_samples_rejected_where_recorded(name, path):
    bundle = bundled(name)
    report = validate(bundle, path.read_bytes())
    assert not report.accepted
    assert report.failure_position == bundle.expected_failure(path)


def test_library_diagram():
    bundle = bundled("cd4a")
    text = (bundle.root / "samples/valid/library.txt").read_bytes()
    assert text.startswith(b"classdiagram LibraryDiagram")
    assert b"class Librarian extends Member" in text
    assert validate(bundle, text).accepted


def test_empty_input_rejected_at_zero():
    r = validate(bundled("cd4a"), b"")
    assert (r.accepted, r.failure_position) == (False, 0)


def test_flawed_and_corrected_modifier_grammars():
    exploit = (bundled("cd4a").root / "samples/invalid/modifier_exploit.txt").read_bytes()
    assert b"//" in exploit and b"Wheel   ;" in exploit
    assert validate(bundled("cd4a_flawed"), exploit).accepted
    fixed = validate(bundled("cd4a"), exploit)
    assert not fixed.accepted
    assert exploit[fixed.failure_position:fixed.failure_position + 1] == b"/"


def test_countable_columns():
    assert bundled("cd4a").countable == ["composition", "association", "class"]


HANDCRAFTED = b"""classdiagram Shop {
  class Customer { String name; }
  class Order;
  association [1] Customer -> Order [*];
}
"""


def test_count_handcrafted():
    bundle = bundled("cd4a")
    assert count_rule_occurrences(bundle, HANDCRAFTED) == {"composition": 0, "association": 1, "class": 2}
    oracle = DerivationCounter(bundle.grammar, HANDCRAFTED, bundle.countable).counts()
    assert oracle == {(0, 1, 2)}


def test_count_empty_body():
    counts = count_rule_occurrences(bundled("cd4a"), b"classdiagram D { }")
    assert counts == {"composition": 0, "association": 0, "class": 0}


def test_count_rejects_invalid():
    with pytest.raises(NotParsable) as err:
        count_rule_occurrences(bundled("cd4a"), b"classdiagram {")
    assert err.value.report.failure_position == 13


@pytest.mark.parametrize("name, path", _cases("valid_samples"), ids=lambda x: getattr(x, "stem", x))
def test_counts_match_derivation_enumeration(name, path):
    bundle = bundled(name)
    text = path.read_bytes()
    oracle = DerivationCounter(bundle.grammar, text, bundle.countable).counts()
    assert len(oracle) == 1, "counts differ between derivations"
    (expected,) = oracle
    assert count_rule_occurrences(bundle, text) == dict(zip(bundle.countable, expected))


def test_load_bundle_checks_countable(tmp_path):
    (tmp_path / "grammar.g").write_text('start: "x"\n')
    (tmp_path / "countable.json").write_text('["nope"]')
    with pytest.raises(ValueError):
        load_bundle(tmp_path)
    (tmp_path / "countable.json").write_text('["start"]')
    b = load_bundle(tmp_path)
    assert b.valid_samples == [] and count_rule_occurrences(b, b"x") == {"start": 1}


GOLDEN_COUNTS = {
    ("cd4a", "library"): (0, 1, 4),
    ("cd4a", "shop"): (1, 1, 3),
    ("cd4a", "school"): (1, 2, 5),
    ("cd4a", "garage"): (2, 1, 4),
    ("cd4a", "farm"): (2, 0, 3),
    ("sen", "indicator"): (1, 3),
    ("sen", "two"): (2, 6),
    ("automata", "door"): (3, 3),
    ("automata", "light"): (2, 2),
    ("automata", "turnstile"): (2, 3),
}


@pytest.mark.parametrize("name, stem", sorted(GOLDEN_COUNTS))
def test_hand_counted_samples(name, stem):
    bundle = bundled(name)
    text = (bundle.root / "samples" / "valid" / f"{stem}.txt").read_bytes()
    assert tuple(count_rule_occurrences(bundle, text).values()) == GOLDEN_COUNTS[name, stem]
