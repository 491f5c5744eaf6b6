from datetime import date

import pytest

from kglf.grammar import CLASS, ENTITY, PROPERTY, VALUE, Apply, Leaf, parse_lf_text
from kglf.interp import (ENTITY_SET, PARALLEL_MAP, SINGLE_VALUE, VALUE_SET,
                         EvalError, EvalResult, ValueKindMismatch, evaluate)
from kglf.kg import Value

E1 = Leaf(ENTITY, 1)
E2 = Leaf(ENTITY, 2)
E3 = Leaf(ENTITY, 3)
E4 = Leaf(ENTITY, 4)
E5 = Leaf(ENTITY, 5)
E10 = Leaf(ENTITY, 10)
C1 = Leaf(CLASS, 101)
C2 = Leaf(CLASS, 102)
C3 = Leaf(CLASS, 103)


def lf(text, graph):
    return parse_lf_text(text, graph)


def entities(result):
    assert result.kind == ENTITY_SET
    return result.value


def test_graph_operators(minikg):
    assert entities(evaluate(lf("follow_property(Q3, P25)", minikg), minikg)) == (1,)
    assert entities(evaluate(lf("follow_backward(Q10, P1303)", minikg), minikg)) == (20, 21, 22)
    got = evaluate(lf("get_value(Q1, P569)", minikg), minikg)
    assert got == EvalResult(VALUE_SET, (Value("date", date(1867, 11, 7)),))
    assert evaluate(lf("get_value(Q10, P569)", minikg), minikg).value == ()


def test_graph_union_over_set_argument(minikg):
    hops = evaluate(lf("follow_property(union(Q1, Q2), P27)", minikg), minikg)
    assert entities(hops) == (4, 5)


def test_set_operators(minikg):
    assert entities(evaluate(lf("union(Q4, Q5)", minikg), minikg)) == (4, 5)
    assert entities(evaluate(lf("difference(union(Q4, Q5), Q5)", minikg), minikg)) == (4,)
    assert entities(evaluate(lf("intersect(union(Q4, Q5), Q5)", minikg), minikg)) == (5,)
    assert entities(evaluate(lf("get_first(follow_property(Q1, P27))", minikg), minikg)) == (4,)
    assert entities(evaluate(lf("get_first(difference(Q4, Q4))", minikg), minikg)) == ()


def test_is_in_mask_alignment(minikg):
    got = evaluate(lf("is_in(union(Q1, Q2), Q2)", minikg), minikg)
    assert got.kind == VALUE_SET and got.aligned
    assert got.value == (Value("boolean", False), Value("boolean", True))
    assert len(got.value) == 2


def test_class_operators(minikg):
    assert entities(evaluate(lf("members(Q103)", minikg), minikg)) == (10, 11)
    assert entities(evaluate(lf("keep(union(Q1, Q4), Q101)", minikg), minikg)) == (1,)
    assert entities(evaluate(lf("keep(difference(Q1, Q1), Q101)", minikg), minikg)) == ()


def test_numeric_operators(minikg):
    low = evaluate(lf("min(get_value(union(Q1, Q2), P569))", minikg), minikg)
    assert low.value == (Value("date", date(1859, 5, 15)),)
    cardinality = evaluate(lf("cardinality(difference(Q4, Q4))", minikg), minikg)
    assert cardinality == EvalResult(SINGLE_VALUE, Value("quantity", 0))
    kept = evaluate(lf("greater_than(get_value(union(Q1, Q2), P569), 1860-01-01)",
                       minikg), minikg)
    assert kept.value == (Value("date", date(1867, 11, 7)),)
    same = evaluate(lf("equals(cardinality(members(Q103)), 2)", minikg), minikg)
    assert same.value == (Value("quantity", 2),)


def test_numeric_kind_errors(minikg):
    with pytest.raises(ValueKindMismatch):
        evaluate(lf("max(get_value(Q1, P1477))", minikg), minikg)
    with pytest.raises(ValueKindMismatch):
        evaluate(lf("greater_than(get_value(Q1, P569), 3)", minikg), minikg)


def test_empty_inputs_stay_empty(minikg):
    empty = "difference(Q4, Q4)"
    assert evaluate(lf(f"follow_property({empty}, P27)", minikg), minikg).value == ()
    assert evaluate(lf(f"max(get_value({empty}, P569))", minikg), minikg).value == ()
    assert evaluate(lf(f"members(Q101)", minikg), minikg).value != ()


def test_for_each_builds_dictionary(minikg):
    got = evaluate(lf("for_each(members(Q103))", minikg), minikg)
    assert got.kind == PARALLEL_MAP
    assert got.value == (
        (10, EvalResult(ENTITY_SET, (10,))),
        (11, EvalResult(ENTITY_SET, (11,))),
    )


def test_instrument_popularity_pipeline(minikg):
    text = "argmax(cardinality(follow_backward(for_each(members(Q103)), P1303)))"
    assert entities(evaluate(lf(text, minikg), minikg)) == (10,)
    text = text.replace("argmax", "argmin")
    assert entities(evaluate(lf(text, minikg), minikg)) == (11,)


def test_argmax_ties_return_all_keys(minikg):
    # Both spouses point at each other, so the per-key counts tie at 1.
    text = "argmax(cardinality(follow_property(for_each(union(Q1, Q2)), P26)))"
    assert entities(evaluate(lf(text, minikg), minikg)) == (1, 2)


def test_arg_keeps_nonempty_keys(minikg):
    text = "arg(get_value(for_each(union(union(Q1, Q2), Q3)), P1477))"
    assert entities(evaluate(lf(text, minikg), minikg)) == (1,)
    text = "arg(follow_property(for_each(members(Q102)), P27))"
    assert entities(evaluate(lf(text, minikg), minikg)) == ()


def test_terminators_bounded_by_for_each_argument(minikg):
    text = "arg(follow_backward(for_each(members(Q103)), P1303))"
    got = entities(evaluate(lf(text, minikg), minikg))
    assert set(got) <= {10, 11}


def test_argmax_requires_singleton_values(minikg):
    text = "argmax(get_value(for_each(union(Q1, Q2)), P569))"
    got = evaluate(lf(text, minikg), minikg)
    assert got.value == (1,)  # later birth date
    bad = "argmax(follow_property(for_each(union(Q1, Q2)), P27))"
    with pytest.raises(EvalError):
        evaluate(lf(bad, minikg), minikg)


def test_clarification_sentinel(minikg):
    got = evaluate(lf("clarification()", minikg), minikg)
    assert got.kind == "clarification"


def test_determinism(minikg):
    text = "union(follow_property(Q1, P27), members(Q102))"
    first = evaluate(lf(text, minikg), minikg)
    second = evaluate(lf(text, minikg), minikg)
    assert first == second


def test_monotone_graph_ops(minikg):
    union_first = evaluate(lf("follow_property(union(Q1, Q2), P27)", minikg), minikg)
    left = evaluate(lf("follow_property(Q1, P27)", minikg), minikg)
    right = evaluate(lf("follow_property(Q2, P27)", minikg), minikg)
    assert set(union_first.value) == set(left.value) | set(right.value)


def test_set_algebra(minikg):
    a = evaluate(lf("members(Q101)", minikg), minikg).value
    inter = evaluate(lf("intersect(members(Q101), members(Q102))", minikg), minikg)
    assert set(inter.value) <= set(a)
    diff = evaluate(lf("difference(members(Q101), Q1)", minikg), minikg)
    assert 1 not in diff.value
    ab = evaluate(lf("union(members(Q102), members(Q103))", minikg), minikg)
    ba = evaluate(lf("union(members(Q103), members(Q102))", minikg), minikg)
    assert set(ab.value) == set(ba.value)


def test_bare_property_leaf_is_an_error(minikg):
    with pytest.raises(EvalError):
        evaluate(Leaf(PROPERTY, 25), minikg)


def test_result_json_shapes(minikg):
    assert evaluate(lf("follow_property(Q3, P25)", minikg), minikg).to_json() == \
        {"k": "entities", "v": ["Q1"]}
    assert evaluate(lf("cardinality(Q1)", minikg), minikg).to_json() == \
        {"k": "value", "v": {"k": "q", "v": 1}}
    assert evaluate(lf("clarification()", minikg), minikg).to_json() == \
        {"k": "clarification"}
