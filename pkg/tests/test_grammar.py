import random
from datetime import date

import pytest

from kglf.grammar import (CLASS, ENTITY, PROPERTY, VALUE, Apply, Leaf,
                          LfTypeError, ParseError, Token, lf_depth,
                          lf_entities, lf_properties, lf_to_text, linearize,
                          parse_lf_text, parse_tokens, tokens_from_json,
                          tokens_to_json, type_check)
from kglf.kg import Value

from reference import default_builder

E1 = Leaf(ENTITY, 1)
E3 = Leaf(ENTITY, 3)
C3 = Leaf(CLASS, 103)
P25 = Leaf(PROPERTY, 25)
P1303 = Leaf(PROPERTY, 1303)
FIVE = Leaf(VALUE, Value("quantity", 5))

INSTRUMENT_POPULARITY = Apply("argmax", (
    Apply("cardinality", (
        Apply("follow_backward", (
            Apply("for_each", (Apply("members", (C3,)),)),
            P1303)),)),))


def test_follow_property_types_as_entity_set():
    t = type_check(Apply("follow_property", (E3, P25)))
    assert t.base == "SE" and not t.parallel


def test_parallel_pipeline_types_as_entity_set():
    t = type_check(INSTRUMENT_POPULARITY)
    assert t.base == "SE" and not t.parallel


def test_terminator_requires_parallel_argument():
    with pytest.raises(LfTypeError):
        type_check(Apply("argmax", (FIVE,)))
    with pytest.raises(LfTypeError):
        type_check(Apply("arg", (E1,)))


def test_scalar_promotion_to_singleton_sets():
    assert type_check(Apply("union", (E1, E3))).base == "SE"
    assert type_check(Apply("members", (C3,))).base == "SE"
    assert type_check(Apply("equals", (FIVE, FIVE))).base == "SV"


def test_class_leaf_is_not_an_entity_set():
    with pytest.raises(LfTypeError):
        type_check(Apply("union", (C3, E1)))
    with pytest.raises(LfTypeError):
        type_check(Apply("members", (E1,)))


def test_arity_mismatch():
    with pytest.raises(LfTypeError):
        type_check(Apply("union", (E1,)))


def test_nested_for_each_rejected():
    inner = Apply("for_each", (E1,))
    terminated = Apply("arg", (inner,))
    assert type_check(terminated).base == "SE"
    with pytest.raises(LfTypeError):
        type_check(Apply("for_each", (terminated,)))


def test_parallel_flag_propagation():
    fe = Apply("for_each", (E1,))
    assert type_check(fe).parallel
    hop = Apply("follow_property", (fe, P25))
    assert type_check(hop).parallel
    card = Apply("cardinality", (hop,))
    t = type_check(card)
    assert t.base == "SV" and t.parallel
    with pytest.raises(LfTypeError):
        type_check(Apply("union", (fe, E1)))


def test_cardinality_without_parallel_is_scalar():
    t = type_check(Apply("cardinality", (E1,)))
    assert t.base == "V" and not t.parallel


def test_clarification_is_nullary():
    t = type_check(Apply("clarification", ()))
    assert t.base == "CLAR"


def test_linearize_simple():
    tokens = linearize(Apply("follow_property", (E3, P25)))
    assert [(t.type, t.value) for t in tokens] == [
        ("g", "follow_property"), ("e", 3), ("p", 25), ("g", "STOP")]


def test_linearize_single_leaf():
    tokens = linearize(E1)
    assert [(t.type, t.value) for t in tokens] == [("e", 1), ("g", "STOP")]


def test_linearize_parallel_pipeline():
    tokens = linearize(INSTRUMENT_POPULARITY)
    assert [(t.type, t.value) for t in tokens] == [
        ("g", "argmax"), ("g", "cardinality"), ("g", "follow_backward"),
        ("g", "for_each"), ("g", "members"), ("c", 103), ("p", 1303),
        ("g", "STOP")]


def test_parse_tokens_round_trip():
    for lf in (E1, Apply("follow_property", (E3, P25)), INSTRUMENT_POPULARITY,
               Apply("equals", (FIVE, FIVE)), Apply("clarification", ())):
        assert parse_tokens(linearize(lf)) == lf


def test_parse_tokens_arity_error():
    tokens = [Token("g", "union"), Token("e", 1), Token("g", "STOP")]
    with pytest.raises(ParseError):
        parse_tokens(tokens)


def test_parse_tokens_missing_stop():
    with pytest.raises(ParseError):
        parse_tokens([Token("e", 1)])


def test_parse_tokens_trailing():
    tokens = linearize(E1) + [Token("e", 2)]
    with pytest.raises(ParseError):
        parse_tokens(tokens)


def test_tokens_json_round_trip():
    lf = Apply("greater_than", (
        Apply("get_value", (E1, Leaf(PROPERTY, 569))),
        Leaf(VALUE, Value("date", date(1860, 1, 1)))))
    tokens = linearize(lf)
    assert tokens_from_json(tokens_to_json(tokens)) == tokens
    encoded = tokens_to_json(tokens)
    assert encoded[0] == {"t": "g", "v": "greater_than"}
    assert encoded[2] == {"t": "e", "v": "Q1"}
    assert encoded[3] == {"t": "p", "v": "P569"}


def test_parse_lf_text(minikg):
    lf = parse_lf_text("follow_property(Q3, P25)", minikg)
    assert lf == Apply("follow_property", (E3, P25))
    lf = parse_lf_text("members(Q103)", minikg)
    assert lf == Apply("members", (C3,))
    lf = parse_lf_text('equals(get_value(Q1, P1477), "Maria Salomea Skłodowska")',
                       minikg)
    assert type_check(lf).base == "SV"
    lf = parse_lf_text("greater_than(get_value(Q1, P569), 1860-01-01)", minikg)
    assert lf.args[1] == Leaf(VALUE, Value("date", date(1860, 1, 1)))
    assert parse_lf_text("clarification()", minikg) == Apply("clarification", ())


def test_parse_lf_text_errors(minikg):
    with pytest.raises(ParseError):
        parse_lf_text("union(Q1)", minikg)
    with pytest.raises(ParseError):
        parse_lf_text("frobnicate(Q1)", minikg)
    with pytest.raises(ParseError):
        parse_lf_text("union(Q1, Q2))", minikg)


def test_lf_text_round_trip(minikg):
    for text in ("follow_property(Q3, P25)",
                 "argmax(cardinality(follow_backward(for_each(members(Q103)), P1303)))",
                 "is_in(Q4, members(Q102))"):
        lf = parse_lf_text(text, minikg)
        assert parse_lf_text(lf_to_text(lf), minikg) == lf


def test_walkers():
    assert lf_depth(E1) == 0
    assert lf_depth(INSTRUMENT_POPULARITY) == 5
    assert lf_properties(INSTRUMENT_POPULARITY) == (1303,)
    assert lf_entities(Apply("union", (E1, E3))) == (1, 3)


def test_random_round_trip_small():
    rng = random.Random(7)
    builder = default_builder(rng)
    for _ in range(500):
        lf = builder.build(rng.randint(0, 5))
        type_check(lf)
        assert parse_tokens(linearize(lf)) == lf
