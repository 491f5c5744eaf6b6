"""String-matching entity linking and dialog history resolution.

Linking is recall-first: every maximal token span whose normalized form
equals a stored name or alias yields one annotation per homonym, and numeric
or date-like literals yield value annotations. Coreferences are handled by
injecting annotations from the dialog history under a configurable policy.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date

from .kg import (Value, format_entity, normalize_label, parse_entity,
                 value_from_json, value_to_json)

SOURCE_CURRENT = "current"
SOURCE_PREVIOUS_QUESTION = "previous_question"
SOURCE_PREVIOUS_ANSWER = "previous_answer"
SOURCE_GOLD = "gold"

POLICY_PREVIOUS_TURN = "previous_turn"
POLICY_ALL_PRECEDING = "all_preceding"

_WORD_RE = re.compile(r"\w+")
_ISO_DATE_RE = re.compile(r"(?<!\d)\d{4}-\d{2}-\d{2}(?!\d)")
_DECIMAL_RE = re.compile(r"(?<![\w.])\d+\.\d+(?![\w.])")


@dataclass(frozen=True)
class Annotation:
    """One linked object: an entity, class or value, with provenance."""

    kind: str                  # "entity" | "class" | "value"
    obj: object                # entity/class id or Value
    span: tuple | None = None  # character offsets in the source utterance
    source: str = SOURCE_CURRENT


@dataclass(frozen=True)
class AnswerSpec:
    """Gold answer: an entity id set or a single typed value."""

    kind: str      # "entities" | "boolean" | "quantity" | "date" | "string"
    value: object

    @classmethod
    def from_json(cls, obj) -> "AnswerSpec":
        kind = obj["k"]
        raw = obj["v"]
        if kind == "entities":
            return cls("entities", tuple(parse_entity(e) for e in raw))
        if kind == "date":
            return cls("date", date.fromisoformat(raw))
        if kind in ("boolean", "quantity", "string"):
            return cls(kind, raw)
        raise ValueError(f"unknown answer kind {kind!r}")

    def to_json(self):
        if self.kind == "entities":
            return {"k": "entities", "v": [format_entity(e) for e in self.value]}
        if self.kind == "date":
            return {"k": "date", "v": self.value.isoformat()}
        return {"k": self.kind, "v": self.value}

    def as_value(self) -> Value | None:
        if self.kind == "entities":
            return None
        return Value(self.kind, self.value)


@dataclass
class Turn:
    question: str
    gold_answer: AnswerSpec
    annotations: list | None = None
    question_type: str | None = None


@dataclass
class Dialog:
    id: str
    turns: list


def link(utterance: str, graph) -> list:
    """Annotate one utterance against the graph's label index.

    Maximal-match semantics: once a span matches, inner sub-spans are not
    emitted separately, but all entities sharing the span are. Unconsumed
    numeric literals become quantity values (four-digit integers also yield
    a date), ISO dates become date values.
    """
    annotations = []
    consumed = [False] * len(utterance)

    def consume(start, end):
        for i in range(start, end):
            consumed[i] = True

    for match in _ISO_DATE_RE.finditer(utterance):
        try:
            day = date.fromisoformat(match.group())
        except ValueError:
            continue
        span = (match.start(), match.end())
        annotations.append(Annotation("value", Value("date", day), span))
        consume(*span)

    for match in _DECIMAL_RE.finditer(utterance):
        if consumed[match.start()]:
            continue
        span = (match.start(), match.end())
        annotations.append(
            Annotation("value", Value("quantity", float(match.group())), span))
        consume(*span)

    words = [m for m in _WORD_RE.finditer(utterance) if not consumed[m.start()]]
    max_words = max(graph.max_label_words, 1)
    i = 0
    while i < len(words):
        matched = False
        for length in range(min(max_words, len(words) - i), 0, -1):
            phrase = normalize_label(
                utterance[words[i].start():words[i + length - 1].end()])
            hits = graph.lookup_name(phrase)
            if not hits:
                continue
            span = (words[i].start(), words[i + length - 1].end())
            for entity in hits:
                kind = "class" if graph.is_class(entity) else "entity"
                annotations.append(Annotation(kind, entity, span))
            consume(*span)
            i += length
            matched = True
            break
        if matched:
            continue
        token = words[i].group()
        if token.isdigit():
            span = (words[i].start(), words[i].end())
            number = int(token)
            annotations.append(Annotation("value", Value("quantity", number), span))
            if len(token) == 4 and 1000 <= number <= 2999:
                annotations.append(
                    Annotation("value", Value("date", date(number, 1, 1)), span))
        i += 1

    annotations.sort(key=lambda a: a.span[0])
    return annotations


def _turn_annotations(turn: Turn, graph, source: str) -> list:
    """Gold annotations when present, else string matches, retagged to source."""
    if turn.annotations:
        base = turn.annotations
    else:
        base = link(turn.question, graph)
    return [Annotation(a.kind, a.obj, a.span if source in (SOURCE_CURRENT, SOURCE_GOLD)
                       else None, source) for a in base]


def _answer_annotations(answer: AnswerSpec, graph, source: str) -> list:
    if answer.kind != "entities":
        return []
    return [Annotation("class" if graph.is_class(e) else "entity", e, None, source)
            for e in answer.value]


def resolve_history(dialog: Dialog, turn_index: int, policy: str, graph,
                    extra: list | None = None) -> list:
    """Annotations for one turn: current-question links plus history injection.

    ``previous_turn`` injects the previous question's annotations and the
    previous gold answer entities; ``all_preceding`` injects annotations
    from every earlier turn. ``extra`` merges precomputed annotations for
    this turn (an external linker's output).
    """
    if not 0 <= turn_index < len(dialog.turns):
        raise IndexError(f"turn {turn_index} out of range for dialog {dialog.id}")
    turn = dialog.turns[turn_index]

    annotations = []
    if turn.annotations:
        annotations.extend(
            Annotation(a.kind, a.obj, a.span, SOURCE_GOLD) for a in turn.annotations)
    annotations.extend(link(turn.question, graph))
    if extra:
        annotations.extend(extra)

    if policy == POLICY_PREVIOUS_TURN:
        if turn_index > 0:
            previous = dialog.turns[turn_index - 1]
            annotations.extend(
                _turn_annotations(previous, graph, SOURCE_PREVIOUS_QUESTION))
            annotations.extend(
                _answer_annotations(previous.gold_answer, graph, SOURCE_PREVIOUS_ANSWER))
    elif policy == POLICY_ALL_PRECEDING:
        for earlier in dialog.turns[:turn_index]:
            annotations.extend(
                _turn_annotations(earlier, graph, SOURCE_PREVIOUS_QUESTION))
    else:
        raise ValueError(f"unknown history policy {policy!r}")

    deduped = []
    seen = set()
    for annotation in annotations:
        key = (annotation.kind, annotation.obj, annotation.span, annotation.source)
        if key in seen:
            continue
        seen.add(key)
        deduped.append(annotation)
    return deduped


# -- file formats -------------------------------------------------------------


def _annotation_from_json(obj, graph=None) -> Annotation:
    kind_code = obj["k"]
    span = tuple(obj["span"]) if obj.get("span") is not None else None
    if kind_code == "e":
        entity = parse_entity(obj["v"])
        kind = "class" if graph is not None and graph.is_class(entity) else "entity"
        return Annotation(kind, entity, span)
    if kind_code == "c":
        return Annotation("class", parse_entity(obj["v"]), span)
    if kind_code == "v":
        return Annotation("value", value_from_json(obj["v"]), span)
    raise ValueError(f"unknown annotation kind {kind_code!r}")


def annotation_to_json(annotation: Annotation) -> dict:
    if annotation.kind == "value":
        obj = {"k": "v", "v": value_to_json(annotation.obj)}
    else:
        obj = {"k": "e" if annotation.kind == "entity" else "c",
               "v": format_entity(annotation.obj)}
    if annotation.span is not None:
        obj["span"] = list(annotation.span)
    return obj


def load_dialogs(path, graph=None) -> list:
    """Read a JSON Lines dialog file (one dialog per line)."""
    dialogs = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                turns = [
                    Turn(
                        question=t["question"],
                        gold_answer=AnswerSpec.from_json(t["gold_answer"]),
                        annotations=[_annotation_from_json(a, graph)
                                     for a in t["annotations"]]
                        if t.get("annotations") else None,
                        question_type=t.get("question_type"),
                    )
                    for t in row["turns"]
                ]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed dialog ({exc})") from exc
            if not turns:
                raise ValueError(f"{path}:{lineno}: dialog has no turns")
            dialogs.append(Dialog(id=str(row["id"]), turns=turns))
    return dialogs


def dialog_to_json(dialog: Dialog) -> dict:
    return {
        "id": dialog.id,
        "turns": [
            {
                "question": t.question,
                "gold_answer": t.gold_answer.to_json(),
                **({"annotations": [annotation_to_json(a) for a in t.annotations]}
                   if t.annotations else {}),
                **({"question_type": t.question_type} if t.question_type else {}),
            }
            for t in dialog.turns
        ],
    }


def load_precomputed_annotations(path, graph=None) -> dict:
    """Read an external linker's output keyed by (dialog id, turn index)."""
    table: dict = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            key = (str(row["dialog_id"]), int(row["turn"]))
            table.setdefault(key, []).extend(
                Annotation(a.kind, a.obj, a.span, SOURCE_GOLD)
                for a in (_annotation_from_json(obj, graph) for obj in row["objects"]))
    return table
