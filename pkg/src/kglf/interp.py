"""Deterministic evaluation of type-checked logical forms over a graph.

Every operator maps empty inputs to empty outputs; runtime errors occur only
when value kinds cannot be ordered (mixed kinds, booleans or strings under a
comparison or extremum). for_each opens a parallel computation represented
as an ordered per-entity dictionary which arg/argmax/argmin collapse back to
an entity set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .grammar import (CLARIFICATION, ENTITY, CLASS, PROPERTY, VALUE,
                      Apply, Leaf)
from .kg import Value, format_entity, value_to_json

ENTITY_SET = "entities"
CLASS_SET = "classes"
VALUE_SET = "values"
SINGLE_VALUE = "value"
PARALLEL_MAP = "map"
CLARIFICATION_RESULT = "clarification"


class EvalError(Exception):
    """A logical form cannot be evaluated over this graph."""


class ValueKindMismatch(EvalError):
    """Values of unorderable or mixed kinds were compared."""


@dataclass(frozen=True)
class EvalResult:
    """Tagged runtime value.

    ``value`` holds a tuple of ids (entities/classes), a tuple of Values,
    a single Value, a tuple of (entity id, EvalResult) pairs for parallel
    maps, or None for the clarification sentinel. ``aligned`` marks the one
    value set that is positionally aligned with its source instead of
    deduplicated (is_in masks).
    """

    kind: str
    value: object = None
    aligned: bool = field(default=False, compare=True)

    def is_empty_set(self) -> bool:
        return self.kind in (ENTITY_SET, CLASS_SET, VALUE_SET) and not self.value

    def to_json(self):
        if self.kind in (ENTITY_SET, CLASS_SET):
            return {"k": self.kind, "v": [format_entity(e) for e in self.value]}
        if self.kind == VALUE_SET:
            return {"k": self.kind, "v": [value_to_json(v) for v in self.value]}
        if self.kind == SINGLE_VALUE:
            return {"k": self.kind, "v": value_to_json(self.value)}
        if self.kind == PARALLEL_MAP:
            return {"k": self.kind,
                    "v": [[format_entity(e), r.to_json()] for e, r in self.value]}
        return {"k": CLARIFICATION_RESULT}


def _dedup(items) -> tuple:
    return tuple(dict.fromkeys(items))


def _as_entities(result: EvalResult) -> tuple:
    if result.kind in (ENTITY_SET, CLASS_SET):
        return result.value
    raise EvalError(f"expected an entity set, got {result.kind}")


def _as_classes(result: EvalResult) -> tuple:
    if result.kind == CLASS_SET:
        return result.value
    raise EvalError(f"expected a class set, got {result.kind}")


def _as_values(result: EvalResult) -> tuple:
    if result.kind == VALUE_SET:
        return result.value
    if result.kind == SINGLE_VALUE:
        return (result.value,)
    raise EvalError(f"expected a value set, got {result.kind}")


def _as_scalar_value(result: EvalResult) -> Value:
    if result.kind == SINGLE_VALUE:
        return result.value
    if result.kind == VALUE_SET and len(result.value) == 1:
        return result.value[0]
    raise EvalError(f"expected a single value, got {result.kind}")


def _ordering_key(values, context: str):
    kinds = {v.kind for v in values}
    if len(kinds) > 1:
        raise ValueKindMismatch(f"{context}: mixed value kinds {sorted(kinds)}")
    if kinds and not next(iter(kinds)) in ("date", "quantity"):
        raise ValueKindMismatch(f"{context}: cannot order {next(iter(kinds))} values")


def _graph_lookup(op: str, entities, prop: int, graph) -> EvalResult:
    collected = []
    if op == "follow_property":
        for entity in entities:
            collected.extend(graph.forward(entity, prop))
        return EvalResult(ENTITY_SET, _dedup(collected))
    if op == "follow_backward":
        for entity in entities:
            collected.extend(graph.backward(entity, prop))
        return EvalResult(ENTITY_SET, _dedup(collected))
    for entity in entities:
        collected.extend(graph.values_of(entity, prop))
    return EvalResult(VALUE_SET, _dedup(collected))


def _numeric(op: str, values: tuple, comparand: Value | None) -> EvalResult:
    if op in ("max", "min"):
        _ordering_key(values, op)
        if not values:
            return EvalResult(VALUE_SET, ())
        chosen = max(values, key=lambda v: v.payload) if op == "max" \
            else min(values, key=lambda v: v.payload)
        return EvalResult(VALUE_SET, (chosen,))
    if op == "equals":
        return EvalResult(VALUE_SET, _dedup(v for v in values if v == comparand))
    # Strict comparisons require one orderable kind shared with the comparand.
    _ordering_key((*values, comparand), op)
    if op == "greater_than":
        kept = [v for v in values if v.payload > comparand.payload]
    else:
        kept = [v for v in values if v.payload < comparand.payload]
    return EvalResult(VALUE_SET, _dedup(kept))


def _apply_plain(op: str, args: list, graph) -> EvalResult:
    if op == "follow_property" or op == "follow_backward" or op == "get_value":
        entities = _as_entities(args[0])
        prop = args[1]
        return _graph_lookup(op, entities, prop, graph)

    if op in ("max", "min", "greater_than", "equals", "lesser_than"):
        values = _as_values(args[0])
        comparand = _as_scalar_value(args[1]) if len(args) > 1 else None
        return _numeric(op, values, comparand)

    if op == "cardinality":
        return EvalResult(SINGLE_VALUE, Value("quantity", len(_as_entities(args[0]))))

    if op == "is_in":
        members = set(_as_entities(args[1]))
        mask = tuple(Value("boolean", e in members) for e in _as_entities(args[0]))
        return EvalResult(VALUE_SET, mask, aligned=True)

    if op == "get_first":
        entities = _as_entities(args[0])
        return EvalResult(ENTITY_SET, entities[:1])

    if op == "union":
        return EvalResult(ENTITY_SET,
                          _dedup((*_as_entities(args[0]), *_as_entities(args[1]))))
    if op == "intersect":
        right = set(_as_entities(args[1]))
        return EvalResult(ENTITY_SET,
                          tuple(e for e in _as_entities(args[0]) if e in right))
    if op == "difference":
        right = set(_as_entities(args[1]))
        return EvalResult(ENTITY_SET,
                          tuple(e for e in _as_entities(args[0]) if e not in right))

    if op == "members":
        collected = []
        for cls_id in _as_classes(args[0]):
            collected.extend(graph.members_of(cls_id))
        return EvalResult(ENTITY_SET, _dedup(collected))
    if op == "keep":
        wanted = set(_as_classes(args[1]))
        kept = [e for e in _as_entities(args[0])
                if wanted.intersection(graph.classes_of(e))]
        return EvalResult(ENTITY_SET, tuple(kept))

    raise EvalError(f"operator {op} cannot be applied here")


def _terminate(op: str, mapping) -> EvalResult:
    if op == "arg":
        keys = tuple(e for e, r in mapping if r.value)
        return EvalResult(ENTITY_SET, keys)
    scored = []
    for entity, result in mapping:
        values = _as_values(result)
        if not values:
            continue
        if len(values) != 1:
            raise ValueKindMismatch(f"{op}: per-entity result is not a single value")
        scored.append((entity, values[0]))
    if not scored:
        return EvalResult(ENTITY_SET, ())
    _ordering_key(tuple(v for _, v in scored), op)
    payloads = [v.payload for _, v in scored]
    target = max(payloads) if op == "argmax" else min(payloads)
    return EvalResult(ENTITY_SET,
                      tuple(e for e, v in scored if v.payload == target))


def apply_op(op: str, args: list, graph) -> EvalResult:
    """Apply one operator to already-evaluated arguments.

    ``args`` holds EvalResults, except property arguments which are plain
    property ids. A parallel-map first argument distributes the operator
    over every dictionary value, keys untouched.
    """
    if op == CLARIFICATION:
        return EvalResult(CLARIFICATION_RESULT)

    if op == "for_each":
        entities = _as_entities(args[0])
        return EvalResult(PARALLEL_MAP, tuple(
            (e, EvalResult(ENTITY_SET, (e,))) for e in entities))

    if op in ("arg", "argmax", "argmin"):
        if args[0].kind != PARALLEL_MAP:
            raise EvalError(f"{op} expects a parallel computation")
        return _terminate(op, args[0].value)

    if isinstance(args[0], EvalResult) and args[0].kind == PARALLEL_MAP:
        inner = tuple(
            (e, _apply_plain(op, [r, *args[1:]], graph)) for e, r in args[0].value)
        # Scalar per-entity results live in the map as singleton value sets.
        inner = tuple(
            (e, EvalResult(VALUE_SET, (r.value,)) if r.kind == SINGLE_VALUE else r)
            for e, r in inner)
        return EvalResult(PARALLEL_MAP, inner)

    return _apply_plain(op, args, graph)


def _eval_leaf(leaf: Leaf) -> EvalResult:
    if leaf.kind == ENTITY:
        return EvalResult(ENTITY_SET, (leaf.ref,))
    if leaf.kind == CLASS:
        return EvalResult(CLASS_SET, (leaf.ref,))
    if leaf.kind == VALUE:
        return EvalResult(SINGLE_VALUE, leaf.ref)
    raise EvalError("a property leaf has no standalone value")


def evaluate(lf, graph) -> EvalResult:
    """Evaluate a type-checked logical form; pure and deterministic."""
    if isinstance(lf, Leaf):
        return _eval_leaf(lf)
    args = []
    for index, child in enumerate(lf.args):
        if isinstance(child, Leaf) and child.kind == PROPERTY and index > 0:
            args.append(child.ref)
        else:
            args.append(evaluate(child, graph))
    return apply_op(lf.op, args, graph)
