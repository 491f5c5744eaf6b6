"""In-memory knowledge graph with forward, backward, value and membership indexes.

The graph is loaded once from JSON Lines files (or built from records in
tests) and is immutable afterwards, so any number of readers may query it
concurrently. All index lists keep first-seen ingestion order with
duplicates collapsed.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from datetime import date

logger = logging.getLogger(__name__)

DEFAULT_MEMBERSHIP_PROPERTY = 31

VALUE_KINDS = ("date", "boolean", "quantity", "string")

_KIND_OF_CODE = {"d": "date", "b": "boolean", "q": "quantity", "s": "string"}
_CODE_OF_KIND = {kind: code for code, kind in _KIND_OF_CODE.items()}

_WORD_RE = re.compile(r"\w+")
_ENTITY_REF_RE = re.compile(r"Q(\d+)$")
_PROPERTY_REF_RE = re.compile(r"P(\d+)$")


class GraphLoadError(Exception):
    """A triples or labels file could not be ingested."""


def normalize_label(text: str) -> str:
    """Casefold a name and keep word characters only, single-space separated."""
    return " ".join(_WORD_RE.findall(text.casefold()))


def format_entity(eid: int) -> str:
    return f"Q{eid}"


def format_property(pid: int) -> str:
    return f"P{pid}"


def parse_entity(ref: str) -> int:
    m = _ENTITY_REF_RE.match(ref)
    if m is None:
        raise ValueError(f"not an entity reference: {ref!r}")
    return int(m.group(1))


def parse_property(ref: str) -> int:
    m = _PROPERTY_REF_RE.match(ref)
    if m is None:
        raise ValueError(f"not a property reference: {ref!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class Value:
    """A typed literal: calendar date, boolean, decimal quantity or string."""

    kind: str
    payload: object

    def orderable(self) -> bool:
        return self.kind in ("date", "quantity")

    def __str__(self) -> str:
        if self.kind == "date":
            return self.payload.isoformat()
        if self.kind == "boolean":
            return "true" if self.payload else "false"
        return str(self.payload)


def value_from_json(obj) -> Value:
    """Decode a ``{"k": code, "v": payload}`` object into a Value."""
    if not isinstance(obj, dict) or "k" not in obj or "v" not in obj:
        raise ValueError(f"not a value object: {obj!r}")
    kind = _KIND_OF_CODE.get(obj["k"])
    raw = obj["v"]
    if kind is None:
        raise ValueError(f"unknown value kind: {obj['k']!r}")
    if kind == "date":
        if not isinstance(raw, str):
            raise ValueError(f"date payload must be an ISO string: {raw!r}")
        return Value("date", date.fromisoformat(raw))
    if kind == "boolean":
        if not isinstance(raw, bool):
            raise ValueError(f"boolean payload must be true/false: {raw!r}")
        return Value("boolean", raw)
    if kind == "quantity":
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ValueError(f"quantity payload must be a number: {raw!r}")
        return Value("quantity", raw)
    if not isinstance(raw, str):
        raise ValueError(f"string payload must be a string: {raw!r}")
    return Value("string", raw)


def value_to_json(value: Value) -> dict:
    payload = value.payload
    if value.kind == "date":
        payload = payload.isoformat()
    return {"k": _CODE_OF_KIND[value.kind], "v": payload}


class KnowledgeGraph:
    """Immutable indexed store of entities, classes, properties and values.

    Triples whose property equals the membership property populate only the
    class membership indexes; they never appear in forward/backward lookups.
    """

    def __init__(self, *, forward, backward, values, entity_classes,
                 class_members, entity_order, class_set, property_order,
                 fwd_props, bwd_props, val_props, names, aliases,
                 property_names, property_aliases, label_index,
                 membership_property):
        self._forward = forward
        self._backward = backward
        self._values = values
        self._entity_classes = entity_classes
        self._class_members = class_members
        self._entity_order = entity_order
        self._class_set = class_set
        self._property_order = property_order
        self._fwd_props = fwd_props
        self._bwd_props = bwd_props
        self._val_props = val_props
        self._names = names
        self._aliases = aliases
        self._property_names = property_names
        self._property_aliases = property_aliases
        self._label_index = label_index
        self._membership_property = membership_property
        self._entity_set = frozenset(entity_order)
        self._max_label_words = max(
            (len(k.split()) for k in label_index), default=0)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_records(cls, records, labels=(), membership_property=DEFAULT_MEMBERSHIP_PROPERTY):
        """Build a graph from an iterable of (subject, property, object) records.

        The object of a record is an entity id (int) or a :class:`Value`.
        Labels are (external id, name, aliases) rows applied after all
        records; labels for unknown ids are skipped with a warning.
        """
        forward: dict = {}
        backward: dict = {}
        values: dict = {}
        entity_classes: dict = {}
        class_members: dict = {}
        entity_order: dict = {}
        class_set: dict = {}
        property_order: dict = {}
        fwd_props: dict = {}
        bwd_props: dict = {}
        val_props: dict = {}

        for subject, prop, obj in records:
            entity_order.setdefault(subject, None)
            if prop == membership_property:
                if isinstance(obj, Value):
                    raise GraphLoadError(
                        f"membership triple with value object: Q{subject} P{prop}")
                entity_order.setdefault(obj, None)
                class_set.setdefault(obj, None)
                entity_classes.setdefault(subject, []).append(obj)
                class_members.setdefault(obj, []).append(subject)
            elif isinstance(obj, Value):
                property_order.setdefault(prop, None)
                values.setdefault((subject, prop), []).append(obj)
                val_props.setdefault(subject, []).append(prop)
            else:
                entity_order.setdefault(obj, None)
                property_order.setdefault(prop, None)
                forward.setdefault((subject, prop), []).append(obj)
                backward.setdefault((obj, prop), []).append(subject)
                fwd_props.setdefault(subject, []).append(prop)
                bwd_props.setdefault(obj, []).append(prop)

        def freeze(index):
            return {key: tuple(dict.fromkeys(items)) for key, items in index.items()}

        forward = freeze(forward)
        backward = freeze(backward)
        values = freeze(values)
        entity_classes = freeze(entity_classes)
        class_members = freeze(class_members)
        fwd_props = freeze(fwd_props)
        bwd_props = freeze(bwd_props)
        val_props = freeze(val_props)

        names: dict = {}
        aliases: dict = {}
        property_names: dict = {}
        property_aliases: dict = {}
        label_index: dict = {}
        for ext_id, name, alias_list in labels:
            try:
                pid = parse_property(ext_id)
            except ValueError:
                pid = None
            if pid is not None:
                if pid not in property_order and pid != membership_property:
                    logger.warning("label for unknown property %s skipped", ext_id)
                    continue
                property_names.setdefault(pid, name)
                property_aliases.setdefault(pid, [])
                property_aliases[pid].extend(alias_list)
                continue
            eid = parse_entity(ext_id)
            if eid not in entity_order:
                logger.warning("label for unknown entity %s skipped", ext_id)
                continue
            names.setdefault(eid, name)
            aliases.setdefault(eid, [])
            aliases[eid].extend(alias_list)
            for text in (name, *alias_list):
                key = normalize_label(text)
                if key:
                    label_index.setdefault(key, []).append(eid)

        return cls(
            forward=forward, backward=backward, values=values,
            entity_classes=entity_classes, class_members=class_members,
            entity_order=tuple(entity_order), class_set=frozenset(class_set),
            property_order=tuple(property_order),
            fwd_props=fwd_props, bwd_props=bwd_props, val_props=val_props,
            names=names,
            aliases={k: tuple(dict.fromkeys(v)) for k, v in aliases.items()},
            property_names=property_names,
            property_aliases={k: tuple(dict.fromkeys(v)) for k, v in property_aliases.items()},
            label_index={k: tuple(dict.fromkeys(v)) for k, v in label_index.items()},
            membership_property=membership_property,
        )

    # -- traversal ---------------------------------------------------------

    def forward(self, entity: int, prop: int) -> tuple:
        """Objects o with a triple (entity, prop, o), in ingestion order."""
        return self._forward.get((entity, prop), ())

    def backward(self, entity: int, prop: int) -> tuple:
        """Subjects s with a triple (s, prop, entity), in ingestion order."""
        return self._backward.get((entity, prop), ())

    def values_of(self, entity: int, prop: int) -> tuple:
        return self._values.get((entity, prop), ())

    def classes_of(self, entity: int) -> tuple:
        return self._entity_classes.get(entity, ())

    def members_of(self, cls_id: int) -> tuple:
        return self._class_members.get(cls_id, ())

    def lookup_name(self, text: str) -> tuple:
        """Entity ids whose normalized name or alias equals the normalized text."""
        return self._label_index.get(normalize_label(text), ())

    # -- metadata ----------------------------------------------------------

    def has_entity(self, entity: int) -> bool:
        return entity in self._entity_set

    def is_class(self, entity: int) -> bool:
        return entity in self._class_set

    def name_of(self, entity: int) -> str:
        return self._names.get(entity, format_entity(entity))

    def aliases_of(self, entity: int) -> tuple:
        return self._aliases.get(entity, ())

    def property_name(self, prop: int) -> str:
        return self._property_names.get(prop, format_property(prop))

    def property_aliases(self, prop: int) -> tuple:
        return self._property_aliases.get(prop, ())

    def forward_properties(self, entity: int) -> tuple:
        return self._fwd_props.get(entity, ())

    def backward_properties(self, entity: int) -> tuple:
        return self._bwd_props.get(entity, ())

    def value_properties(self, entity: int) -> tuple:
        return self._val_props.get(entity, ())

    def properties(self) -> tuple:
        """All non-membership properties in first-seen order."""
        return self._property_order

    def entity_ids(self) -> tuple:
        """All known entity ids (classes included) in first-seen order."""
        return self._entity_order

    @property
    def membership_property(self) -> int:
        return self._membership_property

    @property
    def max_label_words(self) -> int:
        return self._max_label_words

    # -- statistics --------------------------------------------------------

    @property
    def num_entities(self) -> int:
        return len(self._entity_order) - len(self._class_set)

    @property
    def num_classes(self) -> int:
        return len(self._class_set)

    @property
    def num_entity_triples(self) -> int:
        return sum(len(v) for v in self._forward.values())

    @property
    def num_value_triples(self) -> int:
        return sum(len(v) for v in self._values.values())

    @property
    def num_membership_edges(self) -> int:
        return sum(len(v) for v in self._entity_classes.values())

    def verify_transposes(self) -> bool:
        """Check forward/backward and membership indexes are exact transposes."""
        for (subject, prop), objects in self._forward.items():
            for obj in objects:
                if subject not in self._backward.get((obj, prop), ()):
                    return False
        for (obj, prop), subjects in self._backward.items():
            for subject in subjects:
                if obj not in self._forward.get((subject, prop), ()):
                    return False
        for entity, classes in self._entity_classes.items():
            for cls_id in classes:
                if entity not in self._class_members.get(cls_id, ()):
                    return False
        for cls_id, members in self._class_members.items():
            for entity in members:
                if cls_id not in self._entity_classes.get(entity, ()):
                    return False
        return True


def _iter_triple_records(path):
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphLoadError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            try:
                subject = parse_entity(row["s"])
                prop = parse_property(row["p"])
                obj_spec = row["o"]
                if obj_spec.get("k") == "e":
                    obj = parse_entity(obj_spec["v"])
                else:
                    obj = value_from_json(obj_spec)
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                raise GraphLoadError(f"{path}:{lineno}: malformed triple ({exc})") from exc
            yield subject, prop, obj


def _iter_label_records(path):
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                ext_id = row["id"]
                name = row["name"]
                alias_list = tuple(row.get("aliases", ()))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise GraphLoadError(f"{path}:{lineno}: malformed label ({exc})") from exc
            if not isinstance(name, str) or not all(isinstance(a, str) for a in alias_list):
                raise GraphLoadError(f"{path}:{lineno}: label name/aliases must be strings")
            yield ext_id, name, alias_list


def load_graph(triples_path, labels_path, membership_property=DEFAULT_MEMBERSHIP_PROPERTY):
    """Load a graph from a JSON Lines triples file and a labels file.

    Malformed lines abort the load with the offending line number; labels
    for unknown ids are skipped with a warning.
    """
    return KnowledgeGraph.from_records(
        _iter_triple_records(triples_path),
        labels=_iter_label_records(labels_path),
        membership_property=membership_property,
    )
