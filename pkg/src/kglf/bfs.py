"""Breadth-first enumeration of legal logical forms and silver-data ranking.

Depth-0 layers hold one leaf per annotated object. Each further layer applies
every whitelisted operator to already-built arguments (at least one from the
newest layer), keeping only applications that satisfy the operator
signatures. Every constructed form is evaluated; those matching the gold
answer well enough become candidates, ranked by complexity, property-name
lexical overlap and annotation coverage.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

from . import grammar
from .grammar import (CLARIFICATION, OPERATOR_ORDER, OPERATORS, Apply, Leaf,
                      LfType, lf_entities, lf_properties, linearize,
                      tokens_from_json, tokens_to_json)
from .interp import (CLASS_SET, ENTITY_SET, SINGLE_VALUE, VALUE_SET,
                     EvalError, EvalResult, apply_op, evaluate)
from .kg import normalize_label
from .nel import AnswerSpec

DEFAULT_FORBIDDEN_PATTERNS = (
    ("follow_property", "follow_backward", 0),
    ("follow_backward", "follow_property", 0),
)


@dataclass
class BfsConfig:
    """Search limits and shape constraints for one generation call."""

    max_depth: int = 7
    timeout_s: float = 1200.0
    min_f1: float = 0.3
    operators: tuple | None = None          # None selects the full inventory
    forbidden_patterns: tuple = DEFAULT_FORBIDDEN_PATTERNS
    beam_cap: int = 50_000                  # forms retained per (depth, type)
    prune_empty: bool = True                # drop empty-set results from layers
    property_pool: tuple | None = None      # None selects all graph properties

    def validate(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 <= self.min_f1 <= 1.0:
            raise ValueError("min_f1 must lie in [0, 1]")
        if self.beam_cap < 1:
            raise ValueError("beam_cap must be >= 1")
        if self.operators is not None:
            unknown = set(self.operators) - set(OPERATORS)
            if unknown:
                raise ValueError(f"unknown operators: {sorted(unknown)}")


@dataclass(frozen=True)
class Scores:
    complexity: float
    lexical: float
    coverage: float
    total: float

    def to_json(self):
        return {"complexity": round(self.complexity, 4),
                "lexical": round(self.lexical, 4),
                "coverage": round(self.coverage, 4),
                "total": round(self.total, 4)}


@dataclass
class Candidate:
    lf: object
    result: EvalResult
    f1: float
    depth: int
    scores: Scores


@dataclass
class GenerationResult:
    candidates: list
    truncated: bool
    best_f1: float
    num_constructed: int


@dataclass
class SilverExample:
    """One emitted training pair: a question and its selected linearized form."""

    dialog_id: str
    turn: int
    question: str
    tokens: list
    answer: AnswerSpec
    f1: float
    depth: int
    scores: Scores
    truncated: bool = False

    def to_json(self):
        return {
            "dialog_id": self.dialog_id,
            "turn": self.turn,
            "question": self.question,
            "tokens": tokens_to_json(self.tokens),
            "answer": self.answer.to_json(),
            "f1": round(self.f1, 4),
            "depth": self.depth,
            "scores": self.scores.to_json(),
            "truncated": self.truncated,
        }

    @classmethod
    def from_json(cls, row) -> "SilverExample":
        scores = row.get("scores", {})
        return cls(
            dialog_id=str(row["dialog_id"]),
            turn=int(row["turn"]),
            question=row.get("question", ""),
            tokens=tokens_from_json(row["tokens"]),
            answer=AnswerSpec.from_json(row["answer"]),
            f1=float(row.get("f1", 0.0)),
            depth=int(row.get("depth", 0)),
            scores=Scores(scores.get("complexity", 0.0), scores.get("lexical", 0.0),
                          scores.get("coverage", 0.0), scores.get("total", 0.0)),
            truncated=bool(row.get("truncated", False)),
        )


# -- answer comparison --------------------------------------------------------


def answer_f1(result: EvalResult, gold: AnswerSpec) -> float:
    """Set F1 for entity golds, exact match for single-value golds.

    A singleton result set counts as its element; any kind mismatch scores
    0.0 rather than raising.
    """
    if gold.kind == "entities":
        if result.kind not in (ENTITY_SET, CLASS_SET):
            return 0.0
        candidate = set(result.value)
        target = set(gold.value)
        if not candidate and not target:
            return 1.0
        if not candidate or not target:
            return 0.0
        overlap = len(candidate & target)
        if overlap == 0:
            return 0.0
        precision = overlap / len(candidate)
        recall = overlap / len(target)
        return 2 * precision * recall / (precision + recall)

    target_value = gold.as_value()
    if result.kind == SINGLE_VALUE:
        got = result.value
    elif result.kind == VALUE_SET and len(result.value) == 1:
        got = result.value[0]
    else:
        return 0.0
    return 1.0 if got == target_value else 0.0


# -- ranking ------------------------------------------------------------------


def complexity_score(depth: int, max_depth: int) -> float:
    """1 - (d-1)/(d_max-1), clamped to [0, 1]; defined as 1.0 when d_max is 1."""
    if max_depth <= 1:
        return 1.0
    raw = 1.0 - (depth - 1) / (max_depth - 1)
    return min(1.0, max(0.0, raw))


def lexical_score(lf, question_words: set, graph) -> float:
    """Mean Jaccard overlap between property names in the form and the question."""
    props = lf_properties(lf)
    if not props:
        return 1.0
    total = 0.0
    for prop in props:
        words = set(normalize_label(graph.property_name(prop)).split())
        union = words | question_words
        total += len(words & question_words) / len(union) if union else 0.0
    return total / len(props)


def coverage_score(lf, annotations) -> float:
    """Fraction of annotated entities referenced by the form."""
    annotated = {a.obj for a in annotations if a.kind == "entity"}
    if not annotated:
        return 1.0
    present = set(lf_entities(lf))
    return len(annotated & present) / len(annotated)


def score(lf, depth: int, question: str, annotations, cfg: BfsConfig,
          graph, question_words: set | None = None,
          annotated_entities: set | None = None) -> Scores:
    if question_words is None:
        question_words = set(normalize_label(question).split())
    complexity = complexity_score(depth, cfg.max_depth)
    lexical = lexical_score(lf, question_words, graph)
    if annotated_entities is None:
        coverage = coverage_score(lf, annotations)
    else:
        present = set(lf_entities(lf))
        coverage = (len(annotated_entities & present) / len(annotated_entities)
                    if annotated_entities else 1.0)
    return Scores(complexity, lexical, coverage,
                  (complexity + lexical + coverage) / 3.0)


def select(candidates) -> Candidate | None:
    """Max-F1 candidates first, then highest total score; ties prefer the
    shallower tree, then the shorter token list, then lexicographic tokens."""
    if not candidates:
        return None

    def sort_key(candidate):
        tokens = linearize(candidate.lf)
        return (-candidate.f1, -candidate.scores.total, candidate.depth,
                len(tokens), tuple(t.as_text() for t in tokens))

    return min(candidates, key=sort_key)


# -- enumeration --------------------------------------------------------------


@dataclass
class _Entry:
    lf: object
    ltype: LfType
    result: EvalResult
    depth: int
    has_fe: bool


class _Timeout(Exception):
    pass


class _BucketFull(Exception):
    pass


_POOL_BASE = {"E": "SE", "C": "SC"}


def _pool_key(ltype: LfType):
    return (_POOL_BASE.get(ltype.base, ltype.base), ltype.parallel)


def seed_entries(annotations, graph) -> list:
    """Depth-0 layer: one evaluated leaf per distinct annotated object."""
    entries = []
    seen = set()
    for annotation in annotations:
        if annotation.kind == "entity":
            leaf = Leaf(grammar.ENTITY, annotation.obj)
            ltype = LfType("E")
        elif annotation.kind == "class":
            leaf = Leaf(grammar.CLASS, annotation.obj)
            ltype = LfType("C")
        else:
            leaf = Leaf(grammar.VALUE, annotation.obj)
            ltype = LfType("V")
        if leaf in seen:
            continue
        seen.add(leaf)
        entries.append(_Entry(leaf, ltype, evaluate(leaf, graph), 0, False))
    return entries


def _result_type(op: str, first_parallel: bool) -> LfType:
    spec = OPERATORS[op]
    if op == "cardinality":
        return LfType("SV", True) if first_parallel else LfType("V")
    if op == "for_each":
        return LfType("SE", True)
    if op in ("arg", "argmax", "argmin"):
        return LfType("SE")
    if spec.category in ("graph", "numeric"):
        return LfType(spec.result, first_parallel)
    return LfType(spec.result)


class _Search:
    """State for one layered exploration."""

    def __init__(self, graph, cfg: BfsConfig, on_entry):
        self.graph = graph
        self.cfg = cfg
        self.on_entry = on_entry
        self.prop_pool = (cfg.property_pool if cfg.property_pool is not None
                          else graph.properties())
        self.forbidden = set(cfg.forbidden_patterns)
        self.deadline = time.monotonic() + cfg.timeout_s
        self.older: dict = {}      # pool key -> entries from layers < newest
        self.newest: dict = {}     # pool key -> entries from the newest layer
        self.seen: set = set()
        self.layer: list = []
        self.layer_counts: dict = {}
        self.truncated = False
        self.constructed = 0

    def pool(self, key, fresh: bool):
        return (self.newest if fresh else self.older).get(key, ())

    def sv_pool(self, parallel: bool, fresh: bool):
        entries = list(self.pool(("SV", parallel), fresh))
        if not parallel:
            entries.extend(self.pool(("V", False), fresh))
        return entries

    def admit(self, entry: _Entry):
        """Record a constructed form; pool it unless it is an empty set."""
        self.constructed += 1
        pruned = self.cfg.prune_empty and entry.result.is_empty_set()
        self.on_entry(entry, pruned)
        if not pruned:
            key = _pool_key(entry.ltype)
            self.layer_counts[key] = self.layer_counts.get(key, 0) + 1
            self.layer.append((key, entry))

    def construct(self, op: str, children, prop=None):
        """Build, evaluate and admit one application.

        Raises _BucketFull when the result-type bucket for this layer hit the
        beam cap, so callers stop enumerating combinations of that shape.
        """
        if time.monotonic() > self.deadline:
            raise _Timeout
        ltype = _result_type(op, children[0].ltype.parallel)
        key = _pool_key(ltype)
        if self.layer_counts.get(key, 0) >= self.cfg.beam_cap:
            self.truncated = True
            raise _BucketFull
        for pos, child in enumerate(children):
            if isinstance(child.lf, Apply) and (op, child.lf.op, pos) in self.forbidden:
                return
        args = [child.lf for child in children]
        if prop is not None:
            args.append(Leaf(grammar.PROPERTY, prop))
        lf = Apply(op, tuple(args))
        if lf in self.seen:
            return
        self.seen.add(lf)
        try:
            if prop is not None:
                result = apply_op(op, [children[0].result, prop], self.graph)
            else:
                result = apply_op(op, [c.result for c in children], self.graph)
        except EvalError:
            return
        depth = 1 + max(child.depth for child in children)
        has_fe = op == "for_each" or any(c.has_fe for c in children)
        self.admit(_Entry(lf, ltype, result, depth, has_fe))

    def unary(self, op: str, key):
        try:
            for entry in self.pool(key, fresh=True):
                if op == "for_each" and entry.has_fe:
                    continue
                self.construct(op, [entry])
        except _BucketFull:
            pass

    def unary_sv(self, op: str, parallel: bool):
        try:
            for entry in self.sv_pool(parallel, fresh=True):
                self.construct(op, [entry])
        except _BucketFull:
            pass

    def graph_op(self, op: str, parallel: bool):
        try:
            for entry in self.pool(("SE", parallel), fresh=True):
                for prop in self.prop_pool:
                    self.construct(op, [entry], prop=prop)
        except _BucketFull:
            pass

    def binary(self, op: str, first_pools, second_pools):
        """Pairs with at least one argument from the newest layer."""
        try:
            for a in first_pools(fresh=True):
                for b in (*second_pools(fresh=False), *second_pools(fresh=True)):
                    self.construct(op, [a, b])
            for a in first_pools(fresh=False):
                for b in second_pools(fresh=True):
                    self.construct(op, [a, b])
        except _BucketFull:
            pass

    def run_layer(self, ops):
        self.layer = []
        self.layer_counts = {}
        for op in ops:
            category = OPERATORS[op].category
            if category == "graph":
                self.graph_op(op, parallel=False)
                self.graph_op(op, parallel=True)
            elif op in ("max", "min"):
                self.unary_sv(op, parallel=False)
                self.unary_sv(op, parallel=True)
            elif op in ("greater_than", "equals", "lesser_than"):
                for parallel in (False, True):
                    self.binary(
                        op,
                        lambda fresh, p=parallel: self.sv_pool(p, fresh),
                        lambda fresh: self.pool(("V", False), fresh))
            elif op == "cardinality":
                self.unary(op, ("SE", False))
                self.unary(op, ("SE", True))
            elif op in ("is_in", "union", "intersect", "difference"):
                self.binary(op,
                            lambda fresh: self.pool(("SE", False), fresh),
                            lambda fresh: self.pool(("SE", False), fresh))
            elif op == "get_first":
                self.unary(op, ("SE", False))
            elif op == "members":
                self.unary(op, ("SC", False))
            elif op == "keep":
                self.binary(op,
                            lambda fresh: self.pool(("SE", False), fresh),
                            lambda fresh: self.pool(("SC", False), fresh))
            elif op == "for_each":
                self.unary(op, ("SE", False))
            elif op == "arg":
                self.unary(op, ("SE", True))
                self.unary(op, ("SV", True))
            elif op in ("argmax", "argmin"):
                self.unary(op, ("SV", True))

    def rotate_layers(self):
        for key, entries in self.newest.items():
            self.older.setdefault(key, []).extend(entries)
        self.newest = {}
        for key, entry in self.layer:
            self.newest.setdefault(key, []).append(entry)


def _explore(seeds, graph, cfg: BfsConfig, on_entry) -> tuple:
    """Run the layered search; ``on_entry(entry, pruned)`` fires once per
    constructed form. Returns (truncated, num_constructed)."""
    ops = [op for op in OPERATOR_ORDER
           if (cfg.operators is None or op in cfg.operators) and op != CLARIFICATION]
    search = _Search(graph, cfg, on_entry)

    for entry in seeds:
        if entry.lf in search.seen:
            continue
        search.seen.add(entry.lf)
        search.admit(entry)
    for key, entry in search.layer:
        search.newest.setdefault(key, []).append(entry)
    search.layer = []

    try:
        for _ in range(cfg.max_depth):
            search.run_layer(ops)
            search.rotate_layers()
            if not search.newest:
                break
    except _Timeout:
        search.truncated = True

    return search.truncated, search.constructed


def enumerate_lfs(seeds, graph, cfg: BfsConfig) -> tuple:
    """All constructed (form, result, depth) triples plus the truncation flag."""
    cfg.validate()
    collected = []
    truncated, _ = _explore(
        seeds, graph, cfg,
        lambda entry, pruned: collected.append((entry.lf, entry.result, entry.depth)))
    return collected, truncated


def generate(question: str, annotations, gold: AnswerSpec, graph,
             cfg: BfsConfig) -> GenerationResult:
    """Enumerate, evaluate and rank logical forms for one question."""
    cfg.validate()
    candidates: list = []
    best_f1 = 0.0
    question_words = set(normalize_label(question).split())
    annotated_entities = {a.obj for a in annotations if a.kind == "entity"}

    def on_entry(entry, pruned):
        nonlocal best_f1
        f1 = answer_f1(entry.result, gold)
        if f1 > best_f1:
            best_f1 = f1
        if f1 >= cfg.min_f1:
            candidates.append(Candidate(
                entry.lf, entry.result, f1, entry.depth,
                score(entry.lf, entry.depth, question, annotations, cfg, graph,
                      question_words=question_words,
                      annotated_entities=annotated_entities)))

    seeds = seed_entries(annotations, graph)
    truncated, constructed = _explore(seeds, graph, cfg, on_entry)
    return GenerationResult(candidates, truncated, best_f1, constructed)


# -- silver file io -----------------------------------------------------------


def write_silver(path, examples):
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(json.dumps(example.to_json(), ensure_ascii=False) + "\n")


def read_silver(path) -> list:
    examples = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                examples.append(SilverExample.from_json(json.loads(line)))
    return examples
