"""Structured model input construction and id randomization.

The input is a depth-2 tree: a root with utterance, entity, property, class
and value children. Properties are those firing on at least one annotated
entity (any of the three graph lookups non-empty). Entity and value ids are
replaced, per example, by collision-free pseudo-random ids so a downstream
parser must copy them from the input rather than memorize a global
vocabulary; property and class ids stay as-is.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .grammar import TOKEN_ENTITY, TOKEN_VALUE, RandomizedId, Token
from .kg import format_entity, format_property, value_to_json

DEFAULT_ENTITY_VOCAB = 1000
DEFAULT_VALUE_VOCAB = 100


class RandomizationOverflow(Exception):
    """More objects than the randomized id vocabulary can hold."""


@dataclass(frozen=True)
class EntityObject:
    entity: int
    name: str
    classes: tuple
    source: str
    randomized_id: int | None = None


@dataclass(frozen=True)
class PropertyObject:
    prop: int
    name: str
    entity_ids: tuple    # annotated entities for which this property fires


@dataclass(frozen=True)
class ClassObject:
    cls: int
    name: str


@dataclass(frozen=True)
class ValueObject:
    value: Value
    source: str
    randomized_id: int | None = None


@dataclass(frozen=True)
class StructuredInput:
    utterances: tuple    # (current query, previous query, previous answer)
    entities: tuple
    properties: tuple
    classes: tuple
    values: tuple


@dataclass(frozen=True)
class IdMapping:
    """Bijection between original entity ids / values and randomized ids."""

    seed: int
    entity_map: dict     # entity id -> randomized id
    value_map: dict      # Value -> randomized id

    def entity_inverse(self) -> dict:
        return {v: k for k, v in self.entity_map.items()}

    def value_inverse(self) -> dict:
        return {v: k for k, v in self.value_map.items()}


def build(current: str, prev_question: str, prev_answer: str, annotations,
          graph) -> StructuredInput:
    """Assemble the structured input for one turn from its annotations."""
    entity_ids: dict = {}
    entity_sources: dict = {}
    class_ids: dict = {}
    values: dict = {}
    for annotation in annotations:
        if annotation.kind == "entity":
            if annotation.obj not in entity_ids:
                entity_ids[annotation.obj] = None
                entity_sources[annotation.obj] = annotation.source
        elif annotation.kind == "class":
            class_ids.setdefault(annotation.obj, None)
        else:
            values.setdefault(annotation.obj, annotation.source)

    entities = []
    for entity in entity_ids:
        classes = graph.classes_of(entity)
        for cls in classes:
            class_ids.setdefault(cls, None)
        entities.append(EntityObject(entity, graph.name_of(entity), classes,
                                     entity_sources[entity]))

    properties: dict = {}
    for entity in entity_ids:
        for prop in (*graph.forward_properties(entity),
                     *graph.backward_properties(entity),
                     *graph.value_properties(entity)):
            fires = (graph.forward(entity, prop) or graph.backward(entity, prop)
                     or graph.values_of(entity, prop))
            if fires:
                properties.setdefault(prop, []).append(entity)
    property_objects = tuple(
        PropertyObject(prop, graph.property_name(prop),
                       tuple(dict.fromkeys(firing)))
        for prop, firing in properties.items())

    return StructuredInput(
        utterances=(current, prev_question, prev_answer),
        entities=tuple(entities),
        properties=property_objects,
        classes=tuple(ClassObject(c, graph.name_of(c)) for c in class_ids),
        values=tuple(ValueObject(v, src) for v, src in values.items()),
    )


def randomize(structured: StructuredInput, seed: int,
              entity_vocab: int = DEFAULT_ENTITY_VOCAB,
              value_vocab: int = DEFAULT_VALUE_VOCAB) -> tuple:
    """Assign collision-free randomized ids to entities and values.

    Deterministic in (object list order, seed). Returns the rewritten input
    and the bijective mapping.
    """
    if len(structured.entities) > entity_vocab:
        raise RandomizationOverflow(
            f"{len(structured.entities)} entities exceed vocabulary {entity_vocab}")
    if len(structured.values) > value_vocab:
        raise RandomizationOverflow(
            f"{len(structured.values)} values exceed vocabulary {value_vocab}")

    rng = random.Random(seed)
    entity_ids = rng.sample(range(entity_vocab), len(structured.entities))
    value_ids = rng.sample(range(value_vocab), len(structured.values))
    entity_map = {obj.entity: rid for obj, rid in zip(structured.entities, entity_ids)}
    value_map = {obj.value: rid for obj, rid in zip(structured.values, value_ids)}

    randomized = replace(
        structured,
        entities=tuple(replace(obj, randomized_id=entity_map[obj.entity])
                       for obj in structured.entities),
        values=tuple(replace(obj, randomized_id=value_map[obj.value])
                     for obj in structured.values),
    )
    return randomized, IdMapping(seed, entity_map, value_map)


def rewrite_tokens(tokens, mapping: IdMapping) -> list:
    """Map entity and value tokens into the randomized id space.

    Tokens without a mapping entry pass through unchanged, so rewriting and
    restoring are exact inverses.
    """
    out = []
    for token in tokens:
        if token.type == TOKEN_ENTITY and token.value in mapping.entity_map:
            out.append(Token(TOKEN_ENTITY,
                             RandomizedId(mapping.entity_map[token.value])))
        elif token.type == TOKEN_VALUE and token.value in mapping.value_map:
            out.append(Token(TOKEN_VALUE,
                             RandomizedId(mapping.value_map[token.value])))
        else:
            out.append(token)
    return out


def restore_tokens(tokens, mapping: IdMapping) -> list:
    """Inverse of :func:`rewrite_tokens`."""
    entity_inverse = mapping.entity_inverse()
    value_inverse = mapping.value_inverse()
    out = []
    for token in tokens:
        if not isinstance(token.value, RandomizedId):
            out.append(token)
        elif token.type == TOKEN_ENTITY:
            out.append(Token(TOKEN_ENTITY, entity_inverse[token.value.id]))
        else:
            out.append(Token(TOKEN_VALUE, value_inverse[token.value.id]))
    return out


def to_json(structured: StructuredInput, mapping: IdMapping | None = None,
            dialog_id: str | None = None, turn: int | None = None,
            target_tokens=None) -> dict:
    """Serialize one example with stable key order and the id maps."""
    from .grammar import tokens_to_json

    row: dict = {}
    if dialog_id is not None:
        row["dialog_id"] = dialog_id
    if turn is not None:
        row["turn"] = turn
    row["utterances"] = list(structured.utterances)
    row["entities"] = [
        {
            "id": obj.randomized_id if obj.randomized_id is not None
            else format_entity(obj.entity),
            "name": obj.name,
            "classes": [format_entity(c) for c in obj.classes],
            "source": obj.source,
        }
        for obj in structured.entities
    ]
    entity_map = mapping.entity_map if mapping else {}
    row["properties"] = [
        {
            "id": format_property(obj.prop),
            "name": obj.name,
            "entity_ids": [entity_map.get(e, format_entity(e))
                           for e in obj.entity_ids],
        }
        for obj in structured.properties
    ]
    row["classes"] = [
        {"id": format_entity(obj.cls), "name": obj.name}
        for obj in structured.classes
    ]
    row["values"] = [
        {
            "id": obj.randomized_id if obj.randomized_id is not None
            else value_to_json(obj.value),
            "value": value_to_json(obj.value),
            "source": obj.source,
        }
        for obj in structured.values
    ]
    if mapping is not None:
        row["entity_id_map"] = {format_entity(e): rid
                                for e, rid in mapping.entity_map.items()}
        row["value_id_map"] = [[value_to_json(v), rid]
                               for v, rid in mapping.value_map.items()]
    if target_tokens is not None:
        row["target_tokens"] = tokens_to_json(target_tokens)
    return row
