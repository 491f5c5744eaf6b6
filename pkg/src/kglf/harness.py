"""Dataset-level pipeline: silver generation, metric reports and augmentation.

Turns are processed independently over the shared immutable graph by a
bounded worker pool; outputs keep dataset order regardless of completion
order and per-turn failures are recorded without aborting the run.
"""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import bfs
from .bfs import BfsConfig, SilverExample, answer_f1, score, select
from .grammar import (CLARIFICATION, Apply, LfTypeError, ParseError,
                      linearize, parse_tokens, type_check)
from .interp import EvalError, evaluate
from .nel import (POLICY_PREVIOUS_TURN, AnswerSpec, Dialog, Turn,
                  resolve_history)

logger = logging.getLogger(__name__)

CLARIFICATION_TYPE = "Clarification"

DEPTH_BUCKETS = ("1", "2", "3", "4+")


def _depth_bucket(depth: int) -> str:
    if depth <= 1:
        return "1"
    if depth >= 4:
        return "4+"
    return str(depth)


@dataclass
class CoverageRow:
    num_questions: int = 0
    num_covered: int = 0

    @property
    def coverage(self) -> float:
        return self.num_covered / self.num_questions if self.num_questions else 0.0


@dataclass
class CoverageReport:
    rows: dict = field(default_factory=dict)           # question type -> row
    depth_counts: dict = field(default_factory=lambda: {b: 0 for b in DEPTH_BUCKETS})
    near_misses: int = 0            # best F1 positive but under the floor
    truncated_turns: int = 0
    errors: list = field(default_factory=list)

    @property
    def overall(self) -> CoverageRow:
        total = CoverageRow()
        for row in self.rows.values():
            total.num_questions += row.num_questions
            total.num_covered += row.num_covered
        return total

    def depth_fractions(self) -> dict:
        covered = sum(self.depth_counts.values())
        return {bucket: (count / covered if covered else 0.0)
                for bucket, count in self.depth_counts.items()}

    def to_json(self) -> dict:
        overall = self.overall
        return {
            "question_types": {
                qtype: {"num_questions": row.num_questions,
                        "num_covered": row.num_covered,
                        "coverage": round(row.coverage, 4)}
                for qtype, row in sorted(self.rows.items())
            },
            "overall": {"num_questions": overall.num_questions,
                        "num_covered": overall.num_covered,
                        "coverage": round(overall.coverage, 4)},
            "depth_histogram": {b: round(f, 4)
                                for b, f in self.depth_fractions().items()},
            "near_misses": self.near_misses,
            "truncated_turns": self.truncated_turns,
            "errors": self.errors,
        }

    def render(self) -> str:
        lines = [f"{'question type':<28} {'questions':>9} {'covered':>8} {'coverage':>9}"]
        for qtype, row in sorted(self.rows.items()):
            lines.append(f"{qtype:<28} {row.num_questions:>9} "
                         f"{row.num_covered:>8} {row.coverage:>9.1%}")
        overall = self.overall
        lines.append(f"{'overall':<28} {overall.num_questions:>9} "
                     f"{overall.num_covered:>8} {overall.coverage:>9.1%}")
        fractions = self.depth_fractions()
        lines.append("depth histogram: " + "  ".join(
            f"{b}:{fractions[b]:.1%}" for b in DEPTH_BUCKETS))
        lines.append(f"near misses: {self.near_misses}   "
                     f"truncated turns: {self.truncated_turns}")
        return "\n".join(lines)


@dataclass
class QaRow:
    metric: str                 # "f1" | "accuracy"
    num_questions: int = 0
    score_sum: float = 0.0

    @property
    def score(self) -> float:
        return self.score_sum / self.num_questions if self.num_questions else 0.0


@dataclass
class QaReport:
    rows: dict = field(default_factory=dict)

    def total_average(self, include_clarification: bool = False) -> float:
        scores = [row.score for qtype, row in self.rows.items()
                  if include_clarification or qtype != CLARIFICATION_TYPE]
        return sum(scores) / len(scores) if scores else 0.0

    def to_json(self) -> dict:
        return {
            "question_types": {
                qtype: {"metric": row.metric,
                        "num_questions": row.num_questions,
                        "score": round(row.score, 4)}
                for qtype, row in sorted(self.rows.items())
            },
            "total_average": round(self.total_average(), 4),
        }

    def render(self) -> str:
        lines = [f"{'question type':<28} {'metric':>9} {'questions':>9} {'score':>7}"]
        for qtype, row in sorted(self.rows.items()):
            lines.append(f"{qtype:<28} {row.metric:>9} "
                         f"{row.num_questions:>9} {row.score:>7.4f}")
        lines.append(f"total average (excl. clarification): "
                     f"{self.total_average():.4f}")
        return "\n".join(lines)


_UNTYPED = "untyped"


def _question_type(turn: Turn) -> str:
    return turn.question_type or _UNTYPED


def _generate_turn(dialog: Dialog, turn_index: int, graph, cfg: BfsConfig,
                   nel_policy: str, precomputed) -> tuple:
    """Returns (SilverExample | None, truncated, near_miss)."""
    turn = dialog.turns[turn_index]

    if turn.question_type == CLARIFICATION_TYPE:
        # Disambiguation requests map to the dedicated nullary operator
        # rather than a graph query; the pair is emitted directly.
        lf = Apply(CLARIFICATION, ())
        scores = score(lf, 1, turn.question, [], cfg, graph)
        return SilverExample(dialog.id, turn_index, turn.question, linearize(lf),
                             turn.gold_answer, 1.0, 1, scores), False, False

    extra = precomputed.get((dialog.id, turn_index)) if precomputed else None
    annotations = resolve_history(dialog, turn_index, nel_policy, graph, extra)
    outcome = bfs.generate(turn.question, annotations, turn.gold_answer, graph, cfg)
    chosen = select(outcome.candidates)
    near_miss = chosen is None and 0.0 < outcome.best_f1 < cfg.min_f1
    if chosen is None:
        return None, outcome.truncated, near_miss
    example = SilverExample(
        dialog.id, turn_index, turn.question, linearize(chosen.lf),
        turn.gold_answer, chosen.f1, chosen.depth, chosen.scores,
        truncated=outcome.truncated)
    return example, outcome.truncated, near_miss


def run_generation(dialogs, graph, cfg: BfsConfig,
                   nel_policy: str = POLICY_PREVIOUS_TURN,
                   precomputed: dict | None = None,
                   workers: int | None = None) -> tuple:
    """Generate silver examples for every turn; returns (examples, report)."""
    cfg.validate()
    tasks = [(dialog, turn_index)
             for dialog in dialogs for turn_index in range(len(dialog.turns))]
    results: list = [None] * len(tasks)

    def run_one(index):
        dialog, turn_index = tasks[index]
        try:
            example, truncated, near_miss = _generate_turn(
                dialog, turn_index, graph, cfg, nel_policy, precomputed)
            return example, truncated, near_miss, None
        except Exception as exc:  # per-turn failures never abort the run
            logger.warning("turn %s/%s failed: %s", dialog.id, turn_index, exc)
            return None, False, False, f"{dialog.id}/{turn_index}: {exc}"

    max_workers = max(1, workers or 1)
    if max_workers == 1:
        for index in range(len(tasks)):
            results[index] = run_one(index)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            for index, outcome in enumerate(executor.map(run_one, range(len(tasks)))):
                results[index] = outcome

    report = CoverageReport()
    examples = []
    for (dialog, turn_index), (example, truncated, near_miss, error) in zip(tasks, results):
        if error is not None:
            report.errors.append(error)
        qtype = _question_type(dialog.turns[turn_index])
        row = report.rows.setdefault(qtype, CoverageRow())
        row.num_questions += 1
        if truncated:
            report.truncated_turns += 1
        if near_miss:
            report.near_misses += 1
        if example is not None:
            row.num_covered += 1
            report.depth_counts[_depth_bucket(example.depth)] += 1
            examples.append(example)
    return examples, report


def evaluate_predictions(predictions: dict, dialogs, graph) -> QaReport:
    """Score predicted token lists against gold answers.

    ``predictions`` maps (dialog id, turn index) to a token list. Entity
    golds use set F1, value golds exact-match accuracy; clarification-type
    turns score 1.0 exactly when the predicted root is the clarification
    operator. Unparseable or ill-typed predictions score 0.
    """
    report = QaReport()
    for dialog in dialogs:
        for turn_index, turn in enumerate(dialog.turns):
            qtype = _question_type(turn)
            metric = "f1" if (turn.gold_answer.kind == "entities"
                              and qtype != CLARIFICATION_TYPE) else "accuracy"
            row = report.rows.setdefault(qtype, QaRow(metric))
            row.num_questions += 1
            tokens = predictions.get((dialog.id, turn_index))
            row.score_sum += _score_prediction(tokens, turn, graph)
    return report


def _score_prediction(tokens, turn: Turn, graph) -> float:
    if tokens is None:
        return 0.0
    try:
        lf = parse_tokens(tokens)
        type_check(lf)
    except (ParseError, LfTypeError):
        return 0.0
    if turn.question_type == CLARIFICATION_TYPE:
        return 1.0 if isinstance(lf, Apply) and lf.op == CLARIFICATION else 0.0
    try:
        result = evaluate(lf, graph)
    except EvalError:
        return 0.0
    # answer_f1 is set F1 for entity golds and exact-match 0/1 otherwise,
    # which is precisely the per-question metric split.
    return answer_f1(result, turn.gold_answer)


def load_predictions(path) -> dict:
    """Read predictions from a silver-format JSON Lines file."""
    from .grammar import tokens_from_json

    table = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            table[(str(row["dialog_id"]), int(row["turn"]))] = \
                tokens_from_json(row["tokens"])
    return table


def generate_augmentation(graph, n_entities: int, seed: int,
                          max_chars: int = 256) -> list:
    """Single-turn dialogs stitched from sampled entities and their triples.

    One dialog per (entity, property) with the full object set as answer,
    plus one variant per property alias. Examples whose question or answer
    text exceeds ``max_chars`` are dropped.
    """
    pool = graph.entity_ids()
    if n_entities > len(pool):
        raise ValueError(
            f"cannot sample {n_entities} entities from {len(pool)}")
    rng = random.Random(seed)
    sampled = rng.sample(pool, n_entities)

    dialogs = []
    for entity in sampled:
        entity_name = graph.name_of(entity)
        for prop in graph.forward_properties(entity):
            objects = graph.forward(entity, prop)
            answer_text = ", ".join(graph.name_of(o) for o in objects)
            names = [(graph.property_name(prop), "")]
            names.extend((alias, f"-a{i}")
                         for i, alias in enumerate(graph.property_aliases(prop)))
            for prop_name, suffix in names:
                question = f"{entity_name} {prop_name}?"
                if len(question) > max_chars or len(answer_text) > max_chars:
                    continue
                dialogs.append(Dialog(
                    id=f"aug-Q{entity}-P{prop}{suffix}",
                    turns=[Turn(question, AnswerSpec("entities", objects))]))
    return dialogs
