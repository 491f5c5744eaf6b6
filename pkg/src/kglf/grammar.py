"""Typed logical-form trees: operator inventory, type checker and token forms.

A logical form is a binary expression tree whose leaves reference knowledge
graph objects (entities, classes, properties, typed values) and whose inner
nodes apply one of the grammar operators. Trees serialize to a flat prefix
token list terminated by STOP and parse back losslessly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date

from .kg import (Value, format_entity, format_property, parse_entity,
                 parse_property, value_from_json, value_to_json)

# Leaf roles and token type codes.
ENTITY = "entity"
CLASS = "class"
PROPERTY = "property"
VALUE = "value"

TOKEN_GRAMMAR = "g"
TOKEN_ENTITY = "e"
TOKEN_CLASS = "c"
TOKEN_PROPERTY = "p"
TOKEN_VALUE = "v"

STOP = "STOP"


@dataclass(frozen=True)
class Leaf:
    """A leaf referencing a graph object; ``ref`` is an id or a Value."""

    kind: str
    ref: object


@dataclass(frozen=True)
class Apply:
    """An operator application over child logical forms."""

    op: str
    args: tuple


LogicalForm = Leaf | Apply


# Operator categories drive both typing and parallel-computation rules.
GRAPH_OPS = ("follow_property", "follow_backward", "get_value")
NUMERIC_OPS = ("max", "min", "greater_than", "equals", "lesser_than", "cardinality")
SET_OPS = ("is_in", "get_first", "union", "intersect", "difference")
CLASS_OPS = ("members", "keep")
META_OPS = ("for_each", "arg", "argmax", "argmin")
CLARIFICATION = "clarification"


@dataclass(frozen=True)
class OpSpec:
    args: tuple          # expected base types, set bases accept scalar promotion
    result: str
    category: str


OPERATORS = {
    "follow_property": OpSpec(("SE", "P"), "SE", "graph"),
    "follow_backward": OpSpec(("SE", "P"), "SE", "graph"),
    "get_value": OpSpec(("SE", "P"), "SV", "graph"),
    "max": OpSpec(("SV",), "SV", "numeric"),
    "min": OpSpec(("SV",), "SV", "numeric"),
    "greater_than": OpSpec(("SV", "V"), "SV", "numeric"),
    "equals": OpSpec(("SV", "V"), "SV", "numeric"),
    "lesser_than": OpSpec(("SV", "V"), "SV", "numeric"),
    "cardinality": OpSpec(("SE",), "V", "numeric"),
    "is_in": OpSpec(("SE", "SE"), "SV", "set"),
    "get_first": OpSpec(("SE",), "SE", "set"),
    "union": OpSpec(("SE", "SE"), "SE", "set"),
    "intersect": OpSpec(("SE", "SE"), "SE", "set"),
    "difference": OpSpec(("SE", "SE"), "SE", "set"),
    "members": OpSpec(("SC",), "SE", "class"),
    "keep": OpSpec(("SE", "SC"), "SE", "class"),
    "for_each": OpSpec(("SE",), "SE", "meta"),
    "arg": OpSpec(("*",), "SE", "meta"),
    "argmax": OpSpec(("SV",), "SE", "meta"),
    "argmin": OpSpec(("SV",), "SE", "meta"),
    CLARIFICATION: OpSpec((), "CLAR", "clarification"),
}

# Canonical operator order for enumeration and display.
OPERATOR_ORDER = (*GRAPH_OPS, *NUMERIC_OPS, *SET_OPS, *CLASS_OPS, *META_OPS,
                  CLARIFICATION)

# Type bases: sets (SE, SC, SV), scalars (E, C, V, P, Str) and the
# clarification sentinel. Str is reserved; string literals type as V with a
# string value kind.
TYPE_BASES = ("SE", "SC", "SV", "E", "C", "V", "P", "Str", "CLAR")

_SET_OF_SCALAR = {"E": "SE", "C": "SC", "V": "SV"}


@dataclass(frozen=True)
class LfType:
    base: str
    parallel: bool = False

    def __str__(self) -> str:
        return f"{self.base}!" if self.parallel else self.base


class LfTypeError(Exception):
    """A subtree does not satisfy an operator signature."""

    def __init__(self, message: str, subtree=None):
        super().__init__(message)
        self.subtree = subtree


_LEAF_BASE = {ENTITY: "E", CLASS: "C", PROPERTY: "P", VALUE: "V"}


def _promotes_to(child: LfType, want_base: str) -> bool:
    if child.base == want_base:
        return True
    return _SET_OF_SCALAR.get(child.base) == want_base


def _check(lf) -> tuple:
    """Return (LfType, contains_for_each) for a subtree or raise LfTypeError."""
    if isinstance(lf, Leaf):
        base = _LEAF_BASE.get(lf.kind)
        if base is None:
            raise LfTypeError(f"unknown leaf kind {lf.kind!r}", lf)
        return LfType(base), False
    if not isinstance(lf, Apply):
        raise LfTypeError(f"not a logical form node: {lf!r}", lf)
    spec = OPERATORS.get(lf.op)
    if spec is None:
        raise LfTypeError(f"unknown operator {lf.op!r}", lf)
    if len(lf.args) != len(spec.args):
        raise LfTypeError(
            f"{lf.op} expects {len(spec.args)} argument(s), got {len(lf.args)}", lf)

    child_types = []
    children_fe = False
    for child in lf.args:
        ctype, child_fe = _check(child)
        child_types.append(ctype)
        children_fe = children_fe or child_fe
    has_for_each = children_fe or lf.op == "for_each"

    op = lf.op
    if op == CLARIFICATION:
        return LfType("CLAR"), False

    if op == "for_each":
        (ctype,) = child_types
        if not _promotes_to(ctype, "SE") or ctype.parallel:
            raise LfTypeError(f"for_each expects a plain entity set, got {ctype}", lf)
        if children_fe:
            # At most one for_each on any root-to-leaf path.
            raise LfTypeError("nested for_each is not allowed", lf)
        return LfType("SE", parallel=True), True

    if op == "arg":
        (ctype,) = child_types
        if not ctype.parallel:
            raise LfTypeError(f"arg expects a parallel argument, got {ctype}", lf)
        return LfType("SE"), has_for_each

    if op in ("argmax", "argmin"):
        (ctype,) = child_types
        if not ctype.parallel or not _promotes_to(ctype, "SV"):
            raise LfTypeError(f"{op} expects a parallel value set, got {ctype}", lf)
        return LfType("SE"), has_for_each

    if spec.category in ("graph", "numeric"):
        # Graph and numerical operators run inside a parallel computation,
        # propagating the parallel flag of their set argument.
        first, *rest = child_types
        if not _promotes_to(first, spec.args[0]):
            raise LfTypeError(
                f"{op} expects {spec.args[0]} as argument 1, got {first}", lf)
        for want, got, child in zip(spec.args[1:], rest, lf.args[1:]):
            if want == "P":
                if got.base != "P":
                    raise LfTypeError(f"{op} expects a property, got {got}", lf)
            elif want == "V":
                if got.base != "V" or got.parallel:
                    raise LfTypeError(f"{op} expects a single value, got {got}", lf)
            if got.parallel:
                raise LfTypeError(f"{op} argument 2 cannot be parallel", lf)
        if op == "cardinality":
            result = LfType("SV", parallel=True) if first.parallel else LfType("V")
        else:
            result = LfType(spec.result, parallel=first.parallel)
        return result, has_for_each

    # Set and class operators only apply outside parallel computations.
    for want, got in zip(spec.args, child_types):
        if not _promotes_to(got, want):
            raise LfTypeError(f"{op} expects {want}, got {got}", lf)
        if got.parallel:
            raise LfTypeError(f"{op} arguments cannot be parallel", lf)
    return LfType(spec.result), has_for_each


def type_check(lf) -> LfType:
    """Type a logical form against the operator signatures.

    Raises :class:`LfTypeError` when an application does not match its
    signature, when a terminator lacks a parallel argument, or when
    for_each computations nest.
    """
    result, _ = _check(lf)
    return result


def lf_depth(lf) -> int:
    """Operator applications on the longest root-to-leaf path; leaves are 0."""
    if isinstance(lf, Leaf):
        return 0
    return 1 + max((lf_depth(a) for a in lf.args), default=0)


def lf_properties(lf) -> tuple:
    """Distinct property ids appearing in the tree, in traversal order."""
    found: dict = {}

    def walk(node):
        if isinstance(node, Leaf):
            if node.kind == PROPERTY:
                found.setdefault(node.ref, None)
            return
        for child in node.args:
            walk(child)

    walk(lf)
    return tuple(found)


def lf_entities(lf) -> tuple:
    """Distinct entity-leaf ids appearing in the tree, in traversal order."""
    found: dict = {}

    def walk(node):
        if isinstance(node, Leaf):
            if node.kind == ENTITY:
                found.setdefault(node.ref, None)
            return
        for child in node.args:
            walk(child)

    walk(lf)
    return tuple(found)


# -- prefix token form -------------------------------------------------------


@dataclass(frozen=True)
class RandomizedId:
    """An entity or value id remapped into the per-example random vocabulary."""

    id: int


@dataclass(frozen=True)
class Token:
    """One output token: a grammar word or a typed object reference."""

    type: str
    value: object

    def as_text(self) -> str:
        if self.type == TOKEN_GRAMMAR:
            return self.value
        if isinstance(self.value, RandomizedId):
            return str(self.value.id)
        if self.type == TOKEN_ENTITY or self.type == TOKEN_CLASS:
            return format_entity(self.value) if isinstance(self.value, int) else str(self.value)
        if self.type == TOKEN_PROPERTY:
            return format_property(self.value)
        return str(self.value)


STOP_TOKEN = Token(TOKEN_GRAMMAR, STOP)

_LEAF_TOKEN_TYPE = {ENTITY: TOKEN_ENTITY, CLASS: TOKEN_CLASS,
                    PROPERTY: TOKEN_PROPERTY, VALUE: TOKEN_VALUE}
_LEAF_KIND_OF_TOKEN = {v: k for k, v in _LEAF_TOKEN_TYPE.items()}


class ParseError(Exception):
    """A token list or textual form does not encode a logical form."""


def linearize(lf) -> list:
    """Pre-order token list for a tree: operator first, children left to right,
    one typed token per leaf, STOP appended."""
    tokens: list = []

    def walk(node):
        if isinstance(node, Leaf):
            tokens.append(Token(_LEAF_TOKEN_TYPE[node.kind], node.ref))
            return
        tokens.append(Token(TOKEN_GRAMMAR, node.op))
        for child in node.args:
            walk(child)

    walk(lf)
    tokens.append(STOP_TOKEN)
    return tokens


def parse_tokens(tokens) -> LogicalForm:
    """Exact inverse of :func:`linearize`; raises ParseError on malformed input."""
    pos = 0

    def next_token():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of tokens")
        token = tokens[pos]
        pos += 1
        return token

    def parse_node():
        token = next_token()
        if token.type == TOKEN_GRAMMAR:
            if token.value == STOP:
                raise ParseError("STOP before the tree is complete")
            spec = OPERATORS.get(token.value)
            if spec is None:
                raise ParseError(f"unknown grammar token {token.value!r}")
            args = tuple(parse_node() for _ in spec.args)
            return Apply(token.value, args)
        kind = _LEAF_KIND_OF_TOKEN.get(token.type)
        if kind is None:
            raise ParseError(f"unknown token type {token.type!r}")
        return Leaf(kind, token.value)

    tree = parse_node()
    stop = next_token()
    if stop.type != TOKEN_GRAMMAR or stop.value != STOP:
        raise ParseError(f"expected STOP, got {stop}")
    if pos != len(tokens):
        raise ParseError("trailing tokens after STOP")
    return tree


def tokens_to_json(tokens) -> list:
    """Serialize tokens; randomized ids emit as bare integers, original ids
    as prefixed references."""
    out = []
    for token in tokens:
        if isinstance(token.value, RandomizedId):
            out.append({"t": token.type, "v": token.value.id})
        elif token.type == TOKEN_VALUE:
            out.append({"t": TOKEN_VALUE, "v": value_to_json(token.value)})
        elif token.type in (TOKEN_ENTITY, TOKEN_CLASS):
            out.append({"t": token.type, "v": format_entity(token.value)})
        elif token.type == TOKEN_PROPERTY:
            out.append({"t": token.type, "v": format_property(token.value)})
        else:
            out.append({"t": TOKEN_GRAMMAR, "v": token.value})
    return out


def tokens_from_json(rows) -> list:
    tokens = []
    for row in rows:
        ttype = row["t"]
        raw = row["v"]
        if ttype == TOKEN_GRAMMAR:
            tokens.append(Token(TOKEN_GRAMMAR, raw))
        elif ttype in (TOKEN_ENTITY, TOKEN_CLASS):
            value = RandomizedId(raw) if isinstance(raw, int) else parse_entity(raw)
            tokens.append(Token(ttype, value))
        elif ttype == TOKEN_PROPERTY:
            tokens.append(Token(TOKEN_PROPERTY, parse_property(raw)))
        elif ttype == TOKEN_VALUE:
            value = RandomizedId(raw) if isinstance(raw, int) else value_from_json(raw)
            tokens.append(Token(TOKEN_VALUE, value))
        else:
            raise ParseError(f"unknown token type {ttype!r}")
    return tokens


# -- textual form ------------------------------------------------------------

_TEXT_TOKEN_RE = re.compile(r"""
    (?P<lparen>\() | (?P<rparen>\)) | (?P<comma>,)
  | (?P<date>\d{4}-\d{2}-\d{2})
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<string>"[^"]*"|'[^']*')
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<space>\s+)
""", re.VERBOSE)


def parse_lf_text(text: str, graph=None) -> LogicalForm:
    """Parse the parenthesized prefix form, e.g. ``follow_property(Q3, P25)``.

    Q-ids resolve to class leaves when the graph knows them as classes;
    without a graph every Q-id is an entity leaf.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TEXT_TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"cannot tokenize LF text at offset {pos}: {text[pos:pos + 10]!r}")
        pos = m.end()
        if m.lastgroup != "space":
            tokens.append((m.lastgroup, m.group()))

    index = 0

    def peek():
        return tokens[index] if index < len(tokens) else (None, None)

    def advance():
        nonlocal index
        token = peek()
        index += 1
        return token

    def parse_expr():
        kind, text_value = advance()
        if kind == "date":
            return Leaf(VALUE, Value("date", date.fromisoformat(text_value)))
        if kind == "number":
            number = float(text_value) if "." in text_value else int(text_value)
            return Leaf(VALUE, Value("quantity", number))
        if kind == "string":
            return Leaf(VALUE, Value("string", text_value[1:-1]))
        if kind != "word":
            raise ParseError(f"unexpected token {text_value!r} in LF text")
        if text_value in ("true", "false"):
            return Leaf(VALUE, Value("boolean", text_value == "true"))
        if re.fullmatch(r"Q\d+", text_value):
            eid = parse_entity(text_value)
            if graph is not None and graph.is_class(eid):
                return Leaf(CLASS, eid)
            return Leaf(ENTITY, eid)
        if re.fullmatch(r"P\d+", text_value):
            return Leaf(PROPERTY, parse_property(text_value))
        spec = OPERATORS.get(text_value)
        if spec is None:
            raise ParseError(f"unknown operator {text_value!r}")
        if peek()[0] != "lparen":
            if spec.args:
                raise ParseError(f"{text_value} requires parenthesized arguments")
            return Apply(text_value, ())
        advance()
        args = []
        if peek()[0] == "rparen":
            advance()
        else:
            while True:
                args.append(parse_expr())
                kind, text_value2 = advance()
                if kind == "rparen":
                    break
                if kind != "comma":
                    raise ParseError(f"expected ',' or ')', got {text_value2!r}")
        if len(args) != len(spec.args):
            raise ParseError(
                f"{text_value} expects {len(spec.args)} argument(s), got {len(args)}")
        return Apply(text_value, tuple(args))

    tree = parse_expr()
    if index != len(tokens):
        raise ParseError("trailing input after LF expression")
    return tree


def lf_to_text(lf) -> str:
    """Render a tree in the parenthesized prefix form."""
    if isinstance(lf, Leaf):
        if lf.kind in (ENTITY, CLASS):
            return format_entity(lf.ref)
        if lf.kind == PROPERTY:
            return format_property(lf.ref)
        value = lf.ref
        if isinstance(value, Value) and value.kind == "string":
            return '"' + str(value.payload) + '"'
        return str(value)
    if not lf.args:
        return f"{lf.op}()"
    return f"{lf.op}({', '.join(lf_to_text(a) for a in lf.args)})"
