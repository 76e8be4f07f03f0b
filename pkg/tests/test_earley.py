import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grammask.earley import (
    ParserState,
    RejectedByte,
    compile_grammar,
    extract_derivation,
    init,
    is_prefix,
    recognize,
)
from grammask.grammar import parse_grammar, parse_sugared
from oracles import all_strings, prefixes, sugared_language

TOY = parse_grammar('start: "a" | "a" "b"')

# (source, alphabet) pairs; each alphabet includes one byte the grammar never uses
CASES = {
    "toy": ('start: "a" | "a" "b"', b"abc"),
    "parens": ('start: ("(" start ")")*', b"()x"),
    "expr": ('start: start "+" term | term\nterm: "x" | "(" start ")"', b"x+()"),
    "ambiguous": ('start: start start | "a" | "b"', b"abc"),
    "nullables": ('start: a b "c"?\na: "a"?\nb: a a | "b"*', b"abcd"),
    "palin": ('start: "a" start "a" | "b" start "b" | "a" | "b" | ""', b"abc"),
    "ranges": ('start: ("0".."1")+ ("." ("0".."1")+)?', b"01.2"),
}


def test_init_toy():
    s = init(TOY)
    assert s.consumed == 0
    assert not s.is_complete


def test_init_nullable_start():
    assert init(parse_grammar('start: "a"?')).is_complete


def test_init_predicts_first_symbol():
    g = parse_grammar('start: a b\na: "x"\nb: "y"')
    front = init(g).frontier()
    assert ("a", 0, 0, 0) in front
    assert ("start", 0, 0, 0) in front
    assert not any(rule == "b" for rule, *_ in front)


def test_advance_toy():
    s = init(TOY).advance(ord("a"))
    assert s.is_complete
    assert s.allowed_next_bytes() == {ord("b")}
    s = s.advance(ord("b"))
    assert s.is_complete
    assert s.allowed_next_bytes() == frozenset()


def test_reject_toy():
    with pytest.raises(RejectedByte) as err:
        init(TOY).advance(ord("c"))
    assert (err.value.position, err.value.byte, err.value.expected) == (0, ord("c"), {ord("a")})


def test_allowed_bytes_toy():
    s = init(TOY)
    assert s.allowed_next_bytes() == {ord("a")}
    assert s.advance(97).allowed_next_bytes() == {ord("b")}


def test_states_are_persistent():
    s = init(TOY)
    a = s.advance(97)
    ab = a.advance(98)
    assert s.consumed == 0 and a.consumed == 1 and ab.consumed == 2
    assert s.try_advance(98) is None
    assert a.is_complete and a.allowed_next_bytes() == {98}
    # forking from an older state does not disturb the newer one
    g = parse_grammar('start: "a" ("b" | "c") "d"')
    base = init(g).advance(97)
    b, c = base.advance(98), base.advance(99)
    assert b.advance(100).is_complete and c.advance(100).is_complete


def test_recognize_examples():
    assert recognize(TOY, b"ab").accepted
    assert recognize(TOY, b"a").accepted
    r = recognize(TOY, b"b")
    assert (r.accepted, r.failure_position, r.expected) == (False, 0, {ord("a")})


def test_recognize_incomplete_reports_end():
    r = recognize(parse_grammar('start: "abc"'), b"ab")
    assert (r.accepted, r.failure_position, r.expected) == (False, 2, {ord("c")})
    assert r.to_dict() == {"accepted": False, "failure_position": 2, "expected_bytes": [99]}


@pytest.mark.parametrize("name", sorted(CASES))
def test_recognizer_matches_enumeration(name):
    src, alphabet = CASES[name]
    g = parse_grammar(src)
    lang = sugared_language(parse_sugared(src), 6)
    for text in all_strings(alphabet, 6):
        assert recognize(g, text).accepted == (text in lang), text


@pytest.mark.parametrize("name", ["toy", "parens", "expr", "palin", "nullables"])
def test_prefixes_match_enumeration(name):
    # every viable prefix of length <= 4 here has a completion within 10 bytes
    src, alphabet = CASES[name]
    g = parse_grammar(src)
    viable = prefixes(sugared_language(parse_sugared(src), 10))
    for text in all_strings(alphabet, 4):
        assert is_prefix(g, text) == (text in viable), text


@pytest.mark.parametrize("name", sorted(CASES))
def test_allowed_bytes_agree_with_probing(name):
    src, alphabet = CASES[name]
    g = parse_grammar(src)
    for text in all_strings(alphabet, 3):
        state = init(g)
        for b in text:
            state = state.try_advance(b)
            if state is None:
                break
        if state is None:
            continue
        probed = {b for b in range(256) if state.try_advance(b) is not None}
        assert state.allowed_next_bytes() == probed


def test_left_recursion_long_input():
    g = parse_grammar(CASES["expr"][0])
    text = b"+".join([b"x"] * 400)
    assert recognize(g, text).accepted
    assert not recognize(g, text + b"+").accepted


def test_long_repetition_is_linear_enough():
    g = parse_grammar('start: ("a".."z")+')
    assert recognize(g, b"q" * 5000).accepted


def test_repetition_compiles_left_recursive():
    cg = compile_grammar(parse_grammar('start: "a"*'))
    rep = cg.ids[[n for n in cg.names if n.startswith("__rep")][0]]
    bodies = sorted(cg.rhs[p] for p in cg.by_lhs[rep])
    assert bodies[0] == ()
    assert bodies[1][0] == rep


def test_derivation_toy():
    tree = extract_derivation(TOY, b"ab")
    assert (tree.rule, tree.start, tree.end) == ("start", 0, 2)


def test_derivation_nested_rules():
    g = parse_grammar('start: item ("," item)*\nitem: name | "[" start "]"\nname: ("a".."z")+')
    tree = extract_derivation(g, b"ab,[c,d],e")
    items = [(n.rule, n.start, n.end) for n in tree.walk() if n.rule != "start"]
    assert ("item", 3, 8) in items
    assert [n for n in items if n[0] == "name"] == [("name", 0, 2), ("name", 4, 5), ("name", 6, 7), ("name", 9, 10)]


def test_derivation_rejects():
    with pytest.raises(RejectedByte):
        extract_derivation(TOY, b"b")
    with pytest.raises(RejectedByte):
        extract_derivation(parse_grammar('start: "ab"'), b"a")


def test_derivation_of_deep_input():
    g = parse_grammar('start: "(" start ")" | "x"')
    n = 3000
    tree = extract_derivation(g, b"(" * n + b"x" + b")" * n)
    assert sum(1 for _ in tree.walk()) == n + 1


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=8).map(lambda b: bytes(c % 4 for c in b)))
def test_expr_random_strings(raw):
    text = raw.translate(bytes.maketrans(b"\x00\x01\x02\x03", b"x+()"))
    src, _ = CASES["expr"]
    lang = _EXPR_LANG
    assert recognize(parse_grammar(src), text).accepted == (text in lang)


_EXPR_LANG = sugared_language(parse_sugared(CASES["expr"][0]), 8)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_random_walk_stays_viable(data):
    g = parse_grammar(CASES["palin"][0])
    state = ParserState.initial(g)
    text = b""
    for _ in range(data.draw(st.integers(0, 12))):
        allowed = sorted(state.allowed_next_bytes())
        if not allowed:
            break
        b = data.draw(st.sampled_from(allowed))
        state = state.advance(b)
        text += bytes([b])
        assert is_prefix(g, text)
    assert state.is_complete == recognize(g, text).accepted
