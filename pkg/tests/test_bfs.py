from datetime import date

import pytest

from kglf.bfs import (BfsConfig, Candidate, Scores, SilverExample, answer_f1,
                      complexity_score, coverage_score, enumerate_lfs,
                      generate, lexical_score, score, seed_entries, select)
from kglf.grammar import (CLASS, ENTITY, PROPERTY, Apply, Leaf, lf_depth,
                          linearize, type_check)
from kglf.interp import EvalResult, evaluate
from kglf.kg import Value
from kglf.nel import Annotation, AnswerSpec

from conftest import TRIPLES
from reference import RawGraph, enumerate_well_typed, ref_eval

MOTHER_QUESTION = "who is the mother of irène?"
MOTHER_LF = Apply("follow_property", (Leaf(ENTITY, 3), Leaf(PROPERTY, 25)))


def ann_entity(eid, source="current"):
    return Annotation("entity", eid, None, source)


def ann_class(cid):
    return Annotation("class", cid)


def test_generate_mother_question(minikg):
    cfg = BfsConfig(max_depth=3)
    out = generate(MOTHER_QUESTION, [ann_entity(3)], AnswerSpec("entities", (1,)),
                   minikg, cfg)
    assert not out.truncated
    perfect = [c for c in out.candidates if c.f1 == 1.0]
    assert any(c.lf == MOTHER_LF and c.depth == 1 for c in perfect)
    chosen = select(out.candidates)
    assert chosen.lf == MOTHER_LF


def test_generate_no_annotations(minikg):
    out = generate("anything", [], AnswerSpec("entities", (1,)), minikg,
                   BfsConfig(max_depth=3))
    assert out.candidates == []
    assert out.num_constructed == 0


def test_generate_unreachable_gold(minikg):
    out = generate("anything", [ann_entity(3)], AnswerSpec("entities", (999,)),
                   minikg, BfsConfig(max_depth=1))
    assert out.candidates == []
    assert out.best_f1 == 0.0


def test_f1_floor(minikg):
    cfg = BfsConfig(max_depth=2)
    out = generate("which country is marie curie a citizen of?",
                   [ann_entity(1), ann_class(102)],
                   AnswerSpec("entities", (4, 5)), minikg, cfg)
    assert out.candidates
    assert all(c.f1 >= cfg.min_f1 for c in out.candidates)


def test_answer_f1_entities():
    got = answer_f1(EvalResult("entities", (1, 2)), AnswerSpec("entities", (1,)))
    assert abs(got - 2 / 3) < 1e-12
    assert answer_f1(EvalResult("entities", ()), AnswerSpec("entities", (1,))) == 0.0
    assert answer_f1(EvalResult("entities", (1,)), AnswerSpec("entities", (1,))) == 1.0


def test_answer_f1_values():
    assert answer_f1(EvalResult("value", Value("quantity", 3)),
                     AnswerSpec("quantity", 3)) == 1.0
    assert answer_f1(EvalResult("values", (Value("boolean", True),)),
                     AnswerSpec("boolean", True)) == 1.0
    assert answer_f1(EvalResult("values", (Value("boolean", True),) * 2),
                     AnswerSpec("boolean", True)) == 0.0
    assert answer_f1(EvalResult("value", Value("quantity", 3)),
                     AnswerSpec("entities", (3,))) == 0.0
    assert answer_f1(EvalResult("entities", (3,)),
                     AnswerSpec("quantity", 3)) == 0.0


def test_complexity_score_values():
    assert complexity_score(1, 3) == 1.0
    assert complexity_score(3, 3) == 0.0
    assert complexity_score(2, 3) == 0.5
    assert complexity_score(1, 1) == 1.0
    assert complexity_score(5, 3) == 0.0   # clamped
    assert complexity_score(0, 7) == 1.0   # clamped


def test_lexical_score_jaccard(minikg):
    words = set("who is the mother of irène".split())
    assert abs(lexical_score(MOTHER_LF, words, minikg) - 1 / 6) < 1e-12
    no_props = Apply("union", (Leaf(ENTITY, 1), Leaf(ENTITY, 2)))
    assert lexical_score(no_props, words, minikg) == 1.0


def test_coverage_score():
    assert coverage_score(MOTHER_LF, [ann_entity(3)]) == 1.0
    assert coverage_score(MOTHER_LF, [ann_entity(3), ann_entity(1)]) == 0.5
    assert coverage_score(MOTHER_LF, [ann_class(103)]) == 1.0


def test_score_example_line(minikg):
    got = score(MOTHER_LF, 1, MOTHER_QUESTION, [ann_entity(3)],
                BfsConfig(max_depth=7), minikg)
    assert got.complexity == 1.0
    assert abs(got.lexical - 1 / 6) < 1e-12
    assert got.coverage == 1.0
    assert abs(got.total - (1 + 1 / 6 + 1) / 3) < 1e-12


def make_candidate(lf, f1, scores):
    return Candidate(lf, EvalResult("entities", (1,)), f1, lf_depth(lf), scores)


def test_select_prefers_shallower_on_equal_f1():
    shallow = make_candidate(MOTHER_LF, 1.0, Scores(1.0, 0.2, 1.0, (2.2) / 3))
    deep_lf = Apply("get_first", (Apply("get_first", (MOTHER_LF,)),))
    deep = make_candidate(deep_lf, 1.0, Scores(0.0, 0.2, 1.0, (1.2) / 3))
    assert select([deep, shallow]) is shallow


def test_select_prefers_f1_over_score():
    good = make_candidate(MOTHER_LF, 1.0, Scores(0.0, 0.0, 0.0, 0.0))
    spurious = make_candidate(Apply("get_first", (Leaf(ENTITY, 1),)), 0.5,
                              Scores(1.0, 1.0, 1.0, 1.0))
    assert select([good, spurious]) is good


def test_select_single_and_empty():
    only = make_candidate(MOTHER_LF, 0.4, Scores(1.0, 1.0, 1.0, 1.0))
    assert select([only]) is only
    assert select([]) is None


def test_enumeration_is_type_legal(minikg):
    seeds = seed_entries([ann_entity(1), ann_entity(3), ann_class(103)], minikg)
    cfg = BfsConfig(max_depth=2, forbidden_patterns=(), prune_empty=False)
    entries, truncated = enumerate_lfs(seeds, minikg, cfg)
    assert not truncated
    assert entries
    for lf, result, depth in entries:
        type_check(lf)
        assert lf_depth(lf) == depth


def test_enumeration_matches_reference(minikg):
    """Layered search equals a brute-force generator on a small space."""
    seeds = seed_entries([ann_entity(1), ann_entity(3), ann_class(103)], minikg)
    cfg = BfsConfig(max_depth=2, forbidden_patterns=(), prune_empty=False,
                    property_pool=(25, 1303))
    entries, _ = enumerate_lfs(seeds, minikg, cfg)
    engine_lfs = {lf for lf, _, _ in entries}
    assert len(engine_lfs) == len(entries)

    rawkg = RawGraph.from_file(TRIPLES)
    reference_lfs = set()
    for lf in enumerate_well_typed([1, 3], [103], [], [25, 1303], 2):
        try:
            ref_eval(lf, rawkg)
        except Exception:
            continue
        reference_lfs.add(lf)
    assert engine_lfs == reference_lfs


def test_enumeration_respects_forbidden_patterns(minikg):
    seeds = seed_entries([ann_entity(10)], minikg)
    cfg = BfsConfig(max_depth=2, prune_empty=False, property_pool=(1303,))
    entries, _ = enumerate_lfs(seeds, minikg, cfg)
    for lf, _, _ in entries:
        if isinstance(lf, Apply) and lf.op == "follow_property":
            assert not (isinstance(lf.args[0], Apply)
                        and lf.args[0].op == "follow_backward")


def test_prune_empty_drops_building_blocks(minikg):
    seeds = seed_entries([ann_entity(10)], minikg)
    pruned, _ = enumerate_lfs(seeds, minikg,
                              BfsConfig(max_depth=2, property_pool=(25,)))
    kept, _ = enumerate_lfs(seeds, minikg,
                            BfsConfig(max_depth=2, property_pool=(25,),
                                      prune_empty=False))
    assert len(kept) > len(pruned)


def test_beam_cap_sets_truncation(minikg):
    seeds = seed_entries([ann_entity(1), ann_entity(2), ann_entity(3)], minikg)
    cfg = BfsConfig(max_depth=2, beam_cap=2)
    _, truncated = enumerate_lfs(seeds, minikg, cfg)
    assert truncated


def test_max_depth_one_never_emits_deeper(minikg):
    out = generate(MOTHER_QUESTION, [ann_entity(3), ann_entity(1)],
                   AnswerSpec("entities", (1,)), minikg, BfsConfig(max_depth=1))
    assert out.candidates
    assert all(c.depth <= 1 for c in out.candidates)


def test_generate_deterministic(minikg):
    cfg = BfsConfig(max_depth=3)
    annotations = [ann_entity(3), ann_class(101)]
    gold = AnswerSpec("entities", (1,))
    first = generate(MOTHER_QUESTION, annotations, gold, minikg, cfg)
    second = generate(MOTHER_QUESTION, annotations, gold, minikg, cfg)
    assert [(c.lf, c.f1, c.scores) for c in first.candidates] == \
        [(c.lf, c.f1, c.scores) for c in second.candidates]
    assert select(first.candidates).lf == select(second.candidates).lf


def test_config_validation():
    with pytest.raises(ValueError):
        BfsConfig(max_depth=0).validate()
    with pytest.raises(ValueError):
        BfsConfig(min_f1=1.5).validate()
    with pytest.raises(ValueError):
        BfsConfig(operators=("union", "frobnicate")).validate()


def test_silver_example_json_round_trip(minikg):
    example = SilverExample(
        "d1", 0, MOTHER_QUESTION, linearize(MOTHER_LF),
        AnswerSpec("entities", (1,)), 1.0, 1, Scores(1.0, 1 / 6, 1.0, 0.7222))
    row = example.to_json()
    assert row["tokens"][0] == {"t": "g", "v": "follow_property"}
    assert row["scores"]["lexical"] == 0.1667
    back = SilverExample.from_json(row)
    assert back.tokens == example.tokens
    assert back.answer == example.answer
