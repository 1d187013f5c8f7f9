"""Coverage report parsing, scoring, extraction, and merge tests.

The text format is the canonical one: parse followed by serialize must be
bit-exact. The HTML reader is a convenience twin that must yield the same
items. Scores are unweighted means of per-category hit rates with Partial
counting as a miss.
"""

import json

import pytest

from conftest import FIXTURES
from vclose.coverage import (
    Category,
    CoverageItem,
    Status,
    compute_score,
    extract_uncovered,
    load_report,
    make_report,
    merge_reports,
    parse_report,
    render_uncovered,
    serialize_report,
)
from vclose.errors import NoItems, NoSeedsFound, UnrecognizedFormat
from vclose.coverage import seed_signals

COV = FIXTURES / "coverage"


def test_fixture_parse_counts(toy_report):
    assert len(toy_report.items) == 21
    assert toy_report.run_label == "nightly"
    assert toy_report.malformed_lines == 0
    histogram = {}
    for it in toy_report.items:
        histogram[it.category] = histogram.get(it.category, 0) + 1
    assert histogram == {
        Category.LINE: 5,
        Category.BRANCH: 5,
        Category.CONDITION: 6,
        Category.TOGGLE: 4,
        Category.FUNCTIONAL_GROUP: 1,
    }


def test_fixture_score_exact(toy_report):
    score, per_cat = compute_score(toy_report)
    assert score == 72.50
    assert per_cat == {
        Category.LINE: 80.0,
        Category.BRANCH: 60.0,
        Category.CONDITION: 50.0,
        Category.TOGGLE: 100.0,
    }
    # the report carries the same numbers
    assert toy_report.score == 72.50
    assert toy_report.per_category_scores == per_cat


def test_text_round_trip_is_bit_exact(toy_report):
    original = (COV / "toy_sub_cov.txt").read_text()
    assert serialize_report(toy_report) == original


def test_html_twin_yields_identical_items(toy_report):
    twin = load_report(COV / "toy_sub_cov.html")
    assert twin.run_label == toy_report.run_label
    assert [i.to_dict() for i in twin.items] == [
        i.to_dict() for i in toy_report.items
    ]


def test_json_golden(toy_report):
    expected = json.loads((COV / "toy_sub_cov.json").read_text())
    assert [it.to_dict() for it in toy_report.items] == expected


def test_item_dict_round_trip(toy_report):
    for it in toy_report.items:
        assert CoverageItem.from_dict(it.to_dict()) == it


def test_malformed_rows_are_skipped_and_counted(caplog):
    report = parse_report(
        "Line\tCovered\ta.b\tf.v:1\t\n"
        "Line\tPartial\ta.b\tf.v:2\t\n"  # Partial invalid for Line items
        "Nope\tCovered\ta.b\tf.v:3\t\n"
        "Line\tCovered\ta.b\tnoline\t\n"
        "Line\tCovered\ta.b\n"
    )
    assert len(report.items) == 1
    assert report.malformed_lines == 4
    assert report.items[0].source == ("f.v", 1)


def test_unrecognized_format_rejected():
    with pytest.raises(UnrecognizedFormat):
        parse_report("this is not a coverage report\nnor this\n")


def test_empty_input_scores_zero():
    report = parse_report("")
    assert report.items == ()
    assert report.score == 0.0
    assert report.per_category_scores == {}
    with pytest.raises(NoItems):
        compute_score(report)


def test_functional_groups_never_scored(toy_report):
    fg_only = make_report(
        [it for it in toy_report.items if it.category is Category.FUNCTIONAL_GROUP]
    )
    assert fg_only.score == 0.0
    with pytest.raises(NoItems):
        compute_score(fg_only)


# -- uncovered extraction --------------------------------------------------------


def test_extract_groups_by_category_and_module(toy_report):
    summary = extract_uncovered(toy_report, budget=10)
    got = {
        (cat.value, mod): ids for (cat, mod), ids in summary.groups.items()
    }
    assert got == {
        ("Line", "u_fsm"): (4,),
        ("Branch", "u_fsm"): (8, 9),
        ("Condition", "u_fsm"): (14, 15),
        ("Condition", "u_hs"): (13,),
        ("FunctionalGroup", "u_fsm"): (20,),
    }
    assert summary.overflow == {}
    assert summary.all_ids() == frozenset({4, 8, 9, 13, 14, 15, 20})
    # extraction is lossless: every uncovered item appears exactly once
    assert summary.all_ids() == frozenset(
        it.id for it in toy_report.items if it.uncovered
    )


def test_extract_group_order_is_deterministic(toy_report):
    summary = extract_uncovered(toy_report, budget=10)
    assert list(summary.groups) == [
        (Category.LINE, "u_fsm"),
        (Category.BRANCH, "u_fsm"),
        (Category.CONDITION, "u_fsm"),
        (Category.CONDITION, "u_hs"),
        (Category.FUNCTIONAL_GROUP, "u_fsm"),
    ]


def test_extract_budget_truncates_with_overflow(toy_report):
    summary = extract_uncovered(toy_report, budget=1)
    assert summary.groups[(Category.BRANCH, "u_fsm")] == (8,)
    assert summary.overflow[(Category.BRANCH, "u_fsm")] == 1
    assert summary.groups[(Category.CONDITION, "u_fsm")] == (14,)
    assert summary.overflow[(Category.CONDITION, "u_fsm")] == 1
    assert (Category.LINE, "u_fsm") not in summary.overflow


def test_extract_rejects_nonpositive_budget(toy_report):
    with pytest.raises(ValueError):
        extract_uncovered(toy_report, budget=0)


def test_render_uncovered_lists_items_and_overflow(toy_report):
    summary = extract_uncovered(toy_report, budget=1)
    text = render_uncovered(summary, toy_report)
    assert "Branch :: u_fsm" in text
    assert "fsm.v:31 Uncovered (kick)" in text
    assert "+1 more" in text


def test_render_uncovered_empty():
    covered = make_report(
        [
            CoverageItem(
                id=0,
                category=Category.LINE,
                hierarchical_name="t.u",
                source=("f.v", 1),
                status=Status.COVERED,
                expression="",
            )
        ]
    )
    summary = extract_uncovered(covered, budget=5)
    assert summary.empty
    assert render_uncovered(summary, covered) == "all items covered\n"


def test_summary_json_shape(toy_report):
    summary = extract_uncovered(toy_report, budget=1)
    d = summary.to_json_dict()
    assert d["context_budget"] == 1
    first = d["groups"][0]
    assert first == {
        "category": "Line",
        "module": "u_fsm",
        "item_ids": [4],
        "omitted": 0,
    }


# -- seed derivation -------------------------------------------------------------


def test_toggle_item_seeds_named_signal(toy_report, toy_model):
    seeds = seed_signals(toy_report.item(17), toy_model)
    names = {str(r) for r in seeds.signals}
    assert names == {"handshake.ack", "toy_top.ack"}
    assert seeds.origin == 17


def test_branch_item_seeds_expression_identifiers(toy_report, toy_model):
    seeds = seed_signals(toy_report.item(8), toy_model)
    assert {str(r) for r in seeds.signals} == {"fsm.kick", "toy_top.kick"}


def test_branch_item_without_model_keeps_bare_names(toy_report):
    seeds = seed_signals(toy_report.item(8), None)
    assert {r.name for r in seeds.signals} == {"kick"}


def test_line_item_seeds_statement_signals(toy_report, toy_model):
    # fsm.v:40 holds `next_state = S_DONE;`
    seeds = seed_signals(toy_report.item(4), toy_model)
    assert {str(r) for r in seeds.signals} == {"fsm.S_DONE", "fsm.next_state"}


def test_line_item_without_model_has_no_seeds(toy_report):
    with pytest.raises(NoSeedsFound):
        seed_signals(toy_report.item(4), None)


# -- merging ---------------------------------------------------------------------


def flip(item, status):
    return CoverageItem(
        id=0,
        category=item.category,
        hierarchical_name=item.hierarchical_name,
        source=item.source,
        status=status,
        expression=item.expression,
        detail=item.detail,
    )


def test_merge_upgrades_matched_items(toy_report):
    target = toy_report.item(4)
    delta = make_report([flip(target, Status.COVERED)], run_label="rerun")
    merged = merge_reports(toy_report, delta)
    assert merged.item(4).status is Status.COVERED
    assert merged.run_label == "rerun"
    assert len(merged.items) == len(toy_report.items)


def test_merge_never_downgrades(toy_report):
    target = toy_report.item(0)  # already Covered
    delta = make_report([flip(target, Status.UNCOVERED)])
    merged = merge_reports(toy_report, delta)
    assert merged.item(0).status is Status.COVERED


def test_merge_appends_new_items_with_fresh_ids(toy_report):
    extra = CoverageItem(
        id=99,
        category=Category.LINE,
        hierarchical_name="toy_top.u_new",
        source=("new.v", 3),
        status=Status.COVERED,
        expression="",
    )
    merged = merge_reports(toy_report, make_report([extra]))
    assert len(merged.items) == 22
    assert merged.items[-1].id == 21
    assert merged.items[-1].hierarchical_name == "toy_top.u_new"


def test_merge_label_precedence(toy_report):
    delta = make_report([], run_label="d")
    assert merge_reports(toy_report, delta).run_label == "d"
    assert merge_reports(toy_report, delta, run_label="x").run_label == "x"
    unlabeled = make_report([])
    assert merge_reports(toy_report, unlabeled).run_label == "nightly"


def test_single_flip_strictly_improves_score(toy_report):
    # Exhaustive: covering any one uncovered scored item must raise the
    # total score; the merge is monotone item by item.
    base_score, _ = compute_score(toy_report)
    flippable = [
        it
        for it in toy_report.items
        if it.uncovered and it.category is not Category.FUNCTIONAL_GROUP
    ]
    assert len(flippable) == 6
    for it in flippable:
        delta = make_report([flip(it, Status.COVERED)])
        merged = merge_reports(toy_report, delta)
        score, _ = compute_score(merged)
        assert score > base_score, it
