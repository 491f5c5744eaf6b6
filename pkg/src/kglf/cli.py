"""Command-line pipeline: graph checks, silver generation, evaluation, reports.

Exit codes: 0 success, 1 I/O or file-format failure, 2 user logical-form
error. Logs go to standard error; data goes to files or standard output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import bfs, context, harness
from .bfs import BfsConfig
from .grammar import (OPERATORS, LfTypeError, ParseError, parse_lf_text,
                      type_check)
from .interp import EvalError, evaluate
from .kg import GraphLoadError, load_graph, parse_property
from .nel import (POLICY_ALL_PRECEDING, POLICY_PREVIOUS_TURN, dialog_to_json,
                  load_dialogs, load_precomputed_annotations, resolve_history)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_LF = 2

_POLICIES = {"previous-turn": POLICY_PREVIOUS_TURN,
             "all-preceding": POLICY_ALL_PRECEDING}


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _add_graph_flags(parser):
    parser.add_argument("--triples", required=True, help="triples JSONL file")
    parser.add_argument("--labels", required=True, help="labels JSONL file")
    parser.add_argument("--membership-property", default="P31",
                        help="property linking members to classes (default P31)")


def _add_bfs_flags(parser):
    parser.add_argument("--max-depth", type=_positive_int, default=7)
    parser.add_argument("--timeout-seconds", type=float, default=1200.0)
    parser.add_argument("--min-f1", type=float, default=0.3)
    parser.add_argument("--operators", default=None,
                        help="comma-separated operator whitelist")
    parser.add_argument("--beam-cap", type=_positive_int, default=50_000)


def _load(args):
    return load_graph(args.triples, args.labels,
                      membership_property=parse_property(args.membership_property))


def _bfs_config(args) -> BfsConfig:
    operators = None
    if args.operators:
        operators = tuple(op.strip() for op in args.operators.split(",") if op.strip())
        unknown = set(operators) - set(OPERATORS)
        if unknown:
            raise ValueError(f"unknown operators: {sorted(unknown)}")
    return BfsConfig(max_depth=args.max_depth, timeout_s=args.timeout_seconds,
                     min_f1=args.min_f1, operators=operators,
                     beam_cap=args.beam_cap)


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def cmd_load_check(args) -> int:
    graph = _load(args)
    print(f"entities={graph.num_entities} classes={graph.num_classes} "
          f"entity_triples={graph.num_entity_triples} "
          f"value_triples={graph.num_value_triples} "
          f"properties={len(graph.properties())} "
          f"membership_edges={graph.num_membership_edges}")
    ok = graph.verify_transposes()
    print(f"transpose_ok={'true' if ok else 'false'}")
    return EXIT_OK if ok else EXIT_IO


def cmd_generate(args) -> int:
    graph = _load(args)
    dialogs = load_dialogs(args.dataset, graph)
    precomputed = (load_precomputed_annotations(args.annotations, graph)
                   if args.annotations else None)
    cfg = _bfs_config(args)
    examples, report = harness.run_generation(
        dialogs, graph, cfg, nel_policy=_POLICIES[args.nel_policy],
        precomputed=precomputed, workers=args.workers)
    bfs.write_silver(args.output, examples)
    print(report.render())
    if args.report_json:
        with open(args.report_json, "w", encoding="utf-8") as handle:
            json.dump(report.to_json(), handle, ensure_ascii=False, indent=2)
            handle.write("\n")
    return EXIT_OK


def cmd_eval_lf(args) -> int:
    graph = _load(args)
    try:
        lf = parse_lf_text(args.lf, graph)
        type_check(lf)
        result = evaluate(lf, graph)
    except (ParseError, LfTypeError, EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LF
    print(json.dumps(result.to_json(), ensure_ascii=False))
    return EXIT_OK


def cmd_report(args) -> int:
    graph = _load(args)
    dialogs = load_dialogs(args.dataset, graph)
    predictions = harness.load_predictions(args.silver)
    report = harness.evaluate_predictions(predictions, dialogs, graph)
    print(report.render())
    if args.report_json:
        with open(args.report_json, "w", encoding="utf-8") as handle:
            json.dump(report.to_json(), handle, ensure_ascii=False, indent=2)
            handle.write("\n")
    return EXIT_OK


def cmd_augment(args) -> int:
    graph = _load(args)
    dialogs = harness.generate_augmentation(graph, args.n_entities, args.seed,
                                            max_chars=args.max_chars)
    _write_jsonl(args.output, (dialog_to_json(d) for d in dialogs))
    print(f"wrote {len(dialogs)} dialogs to {args.output}")
    return EXIT_OK


def cmd_context(args) -> int:
    graph = _load(args)
    dialogs = load_dialogs(args.dataset, graph)
    silver = {}
    if args.silver:
        for example in bfs.read_silver(args.silver):
            silver[(example.dialog_id, example.turn)] = example.tokens

    rows = []
    for dialog in dialogs:
        for turn_index, turn in enumerate(dialog.turns):
            annotations = resolve_history(dialog, turn_index,
                                          _POLICIES[args.nel_policy], graph)
            previous = dialog.turns[turn_index - 1] if turn_index else None
            prev_question = previous.question if previous else ""
            prev_answer = _answer_text(previous.gold_answer, graph) if previous else ""
            structured = context.build(turn.question, prev_question, prev_answer,
                                       annotations, graph)
            randomized, mapping = context.randomize(
                structured, args.seed, entity_vocab=args.entity_vocab,
                value_vocab=args.value_vocab)
            target = silver.get((dialog.id, turn_index))
            rewritten = context.rewrite_tokens(target, mapping) if target else None
            rows.append(context.to_json(randomized, mapping, dialog.id,
                                        turn_index, rewritten))
    _write_jsonl(args.output, rows)
    print(f"wrote {len(rows)} structured inputs to {args.output}")
    return EXIT_OK


def _answer_text(answer, graph) -> str:
    if answer.kind == "entities":
        return ", ".join(graph.name_of(e) for e in answer.value)
    if answer.kind == "boolean":
        return "true" if answer.value else "false"
    if answer.kind == "date":
        return answer.value.isoformat()
    return str(answer.value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kglf",
        description="knowledge-graph logical form engine and silver data generator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load-check", help="load a graph and print index statistics")
    _add_graph_flags(p)
    p.set_defaults(func=cmd_load_check)

    p = sub.add_parser("generate", help="generate silver logical forms for a dataset")
    _add_graph_flags(p)
    _add_bfs_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--report-json", default=None)
    p.add_argument("--annotations", default=None,
                   help="precomputed annotation JSONL file")
    p.add_argument("--nel-policy", choices=sorted(_POLICIES), default="previous-turn")
    p.add_argument("--workers", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval-lf", help="evaluate one textual logical form")
    _add_graph_flags(p)
    p.add_argument("lf", help='logical form, e.g. "follow_property(Q3, P25)"')
    p.set_defaults(func=cmd_eval_lf)

    p = sub.add_parser("report", help="score predicted token lists against a dataset")
    _add_graph_flags(p)
    p.add_argument("--silver", required=True, help="predictions in silver format")
    p.add_argument("--dataset", required=True)
    p.add_argument("--report-json", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("augment", help="generate single-turn dialogs from triples")
    _add_graph_flags(p)
    p.add_argument("--n-entities", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-chars", type=_positive_int, default=256)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("context", help="emit structured model inputs for a dataset")
    _add_graph_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--silver", default=None,
                   help="silver file whose targets are rewritten through the id maps")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--entity-vocab", type=_positive_int,
                   default=context.DEFAULT_ENTITY_VOCAB)
    p.add_argument("--value-vocab", type=_positive_int,
                   default=context.DEFAULT_VALUE_VOCAB)
    p.add_argument("--nel-policy", choices=sorted(_POLICIES), default="previous-turn")
    p.set_defaults(func=cmd_context)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GraphLoadError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
