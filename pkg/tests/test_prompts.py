import os
import re

import numpy as np
import pytest

from impute_forge.association import association_matrix, association_profile
from impute_forge.dataset import ColumnKind, class_partition, sample_examples, split_complete_incomplete
from impute_forge.exceptions import ColumnCollision, CountMismatch, DomainViolation, IncompleteExample, NumericParseFailure
from impute_forge.prompts import (
    BRIDGE_LINE,
    PromptConfig,
    estimate_tokens,
    format_answer,
    group_letters,
    parse_response,
    render_grouped,
    render_ungrouped,
)
from impute_forge.synthetic import TRAVEL_GROUP_DISPLAYS
from impute_forge.threshold import PredictorSet, select_predictors

from .conftest import GOLDEN
from .helpers import make_dataset

FEATURE = "FrequentFlyer"


def travel_cfg(**kw):
    base = dict(num_example_sets=2, examples_per_group=3,
                group_labels=group_letters(["1", "0"], TRAVEL_GROUP_DISPLAYS), target_alias="Churn")
    base.update(kw)
    return PromptConfig(**base)


def travel_prompt(travel, threshold=0.0, style="grouped", seed=0):
    """Render the first 3+3 missing rows of the churn table with 2 sets of 3 examples per group."""
    profile = association_profile(association_matrix(travel), FEATURE)
    pset = select_predictors(profile, threshold, travel.target_name)
    complete, _ = split_complete_incomplete(travel)
    pool_ids = np.flatnonzero(travel.complete_rows())
    part = class_partition(complete)
    sets = sample_examples(complete, part, 3, 2, seed)
    # map positions in ``complete`` back to positions in ``travel``
    sets = [{lab: [int(pool_ids[i]) for i in rows] for lab, rows in s.items()} for s in sets]
    miss = np.flatnonzero(travel.missing(FEATURE))
    missing = {lab: [int(i) for i in miss if travel.labels[i] == lab][:3] for lab in ("1", "0")}
    cfg = travel_cfg()
    if style == "grouped":
        return render_grouped(travel, sets, missing, cfg, pset), sets, missing, pset
    flat = [[*s["1"], *s["0"]] for s in sets]
    return render_ungrouped(travel, flat, [*missing["1"], *missing["0"]], cfg, pset), sets, missing, pset


def test_golden_travel_prompt(travel):
    prompt, *_ = travel_prompt(travel)
    path = GOLDEN / "travel_prompt.txt"
    if os.environ.get("IMPUTE_FORGE_REGEN_GOLDEN"):
        path.write_text(prompt.text, encoding="utf-8")
    assert prompt.text == path.read_text(encoding="utf-8")


def test_travel_layout_matches_worked_example(travel):
    """Description lines, 2 sets of header + A./B. blocks of 3, bridge, grouped missing block."""
    prompt, sets, missing, pset = travel_prompt(travel)
    lines = prompt.text.splitlines()
    assert "exactly 6 records" in lines[0] and "(3 in group A, 3 in group B)" in lines[0]
    assert lines[1] == ""
    assert lines[2] == "Churn: whether customer churns or doesnt churn for tour and travels company,"
    assert all(line.endswith(",") for line in lines[2:9])
    header = lines[10]
    assert header.startswith("Churn, ") and header.endswith(", FrequentFlyer")
    assert lines.count(header) == 2
    first = lines[10:19]
    assert first[1] == "A." and first[5] == "B."
    assert all(r.startswith("Churn, ") for r in first[2:5])
    assert all(r.startswith("Doesnt churn, ") for r in first[6:9])
    bridge = lines.index(BRIDGE_LINE)
    assert lines[bridge - 1] == ""
    tail = lines[bridge + 1:]
    assert tail[0] == "A." and tail[4] == "B." and len(tail) == 8
    assert all(r.endswith(", No Record") for r in tail if r not in ("A.", "B."))
    assert prompt.manifest == tuple(missing["1"] + missing["0"])
    assert prompt.estimated_tokens == estimate_tokens(prompt.text)


def test_golden_stability(travel):
    assert travel_prompt(travel)[0].text == travel_prompt(travel)[0].text
    assert travel_prompt(travel, seed=1)[0].text != travel_prompt(travel)[0].text


def test_column_containment(travel):
    prompt, _, _, pset = travel_prompt(travel, threshold=0.2)
    allowed = {"Churn", *pset.predictors, FEATURE}
    header = next(line for line in prompt.text.splitlines() if line.startswith("Churn, "))
    assert set(header.split(", ")) <= allowed
    for name in travel.names:
        if name not in allowed and name != travel.target_name:
            assert re.search(rf"\b{name}\b", prompt.text) is None


def test_target_only_rows(travel):
    pset = PredictorSet(FEATURE, 0.99, (travel.target_name,), 6)
    prompt = render_grouped(travel, [], {"1": [int(np.flatnonzero(travel.missing(FEATURE))[0])]}, travel_cfg(), pset)
    assert prompt.text.splitlines()[-1] in ("Churn, No Record", "Doesnt churn, No Record")
    assert prompt.included_columns == ("Target", FEATURE)


def test_zero_sets_layout(travel):
    pset = PredictorSet(FEATURE, 0.99, (travel.target_name,), 6)
    row = int(np.flatnonzero(travel.missing(FEATURE) & (travel.labels == "1"))[0])
    text = render_grouped(travel, [], {"1": [row]}, travel_cfg(), pset).text
    lines = text.splitlines()
    assert lines[-3:] == [BRIDGE_LINE, "A.", "Churn, No Record"]
    assert "Churn, FrequentFlyer" not in lines
    flat = render_ungrouped(travel, [], [row], travel_cfg(), pset).text
    assert flat.splitlines()[-2:] == [BRIDGE_LINE, "Churn, No Record"]


def test_ungrouped_differs_only_by_markers_and_order(travel):
    grouped, *_ = travel_prompt(travel)
    flat, *_ = travel_prompt(travel, style="ungrouped")
    g_lines = grouped.text.splitlines()
    f_lines = flat.text.splitlines()
    assert not any(line in ("A.", "B.") for line in f_lines)
    assert sorted(line for line in g_lines[1:] if line not in ("A.", "B.")) == sorted(f_lines[1:])
    assert grouped.included_columns == flat.included_columns
    # first line differs only by the per-group counts
    assert g_lines[0].replace(" (3 in group A, 3 in group B)", "") == f_lines[0]


def test_token_monotonicity(travel):
    counts = [travel_prompt(travel, threshold=t)[0].estimated_tokens for t in (0.0, 0.1, 0.15, 0.2, 0.5)]
    assert counts == sorted(counts, reverse=True)
    assert counts[0] > counts[3]


def test_estimate_tokens():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcdefgh") == 2
    assert estimate_tokens("abcdefghi") == 3
    assert estimate_tokens("é") == 1  # two bytes


def test_collision_and_incomplete_example(tiny):
    pset = PredictorSet("flyer", 0.0, ("y",), 3)
    cfg = PromptConfig(group_labels=group_letters(["1", "0"]), missing_display="yes")
    with pytest.raises(ColumnCollision):
        render_grouped(tiny, [], {"0": [2]}, cfg, pset)
    num = PredictorSet("age", 0.0, ("y",), 3)
    with pytest.raises(ColumnCollision):
        render_grouped(tiny, [], {}, PromptConfig(group_labels=group_letters(["1", "0"]), missing_display="12"), num)
    cfg = PromptConfig(group_labels=group_letters(["1", "0"]))
    with pytest.raises(IncompleteExample):
        render_grouped(tiny, [{"0": [2]}], {"1": [6]}, cfg, pset)


def test_co_missing_predictor_warns():
    d = make_dataset({"a": ["x", None, "y", "x"], "b": ["p", None, "q", "p"], "y": ["1", "0", "0", "1"]}, {}, "y")
    pset = PredictorSet("a", 0.0, ("b", "y"), 2)
    p = render_grouped(d, [], {"0": [1]}, PromptConfig(group_labels=group_letters(["1", "0"])), pset)
    assert p.text.splitlines()[-1] == "0, No Record, No Record"
    assert p.warnings and "'b'" in p.warnings[0]


def test_parse_examples():
    assert parse_response("Yes\nNo\nYes", 3, ColumnKind.CATEGORICAL, ["Yes", "No"]).values == ("Yes", "No", "Yes")
    parsed = parse_response("A.\nyes\nno\nB.\nyes", 3, ColumnKind.CATEGORICAL, ["Yes", "No"])
    assert parsed.values == ("Yes", "No", "Yes")
    assert parsed.diagnostics
    with pytest.raises(CountMismatch):
        parse_response("Yes,No", 3, ColumnKind.CATEGORICAL, ["Yes", "No"])
    assert parse_response(' "Yes" , No,\n\n Yes ', 3, "categorical", ["Yes", "No"]).values == ("Yes", "No", "Yes")


def test_parse_errors_report_positions():
    with pytest.raises(DomainViolation) as err:
        parse_response("Yes\nMaybe\nNo", 3, ColumnKind.CATEGORICAL, ["Yes", "No"])
    assert err.value.positions == [1]
    with pytest.raises(NumericParseFailure) as err:
        parse_response("1\nx\n3\ninf", 4, ColumnKind.NUMERICAL)
    assert err.value.positions == [1, 3]
    assert parse_response("1.50\n2", 2, ColumnKind.NUMERICAL).values == ("1.5", "2")
    with pytest.raises(ValueError):
        parse_response("", 0, ColumnKind.NUMERICAL)


def test_parse_round_trip(travel):
    prompt, *_ = travel_prompt(travel)
    truth = ["Yes", "No", "No", "Yes", "Yes", "No"]
    parsed = parse_response(format_answer(truth), len(prompt.manifest), ColumnKind.CATEGORICAL,
                            travel.category_domain(FEATURE))
    assert list(parsed.values) == truth
    filled = travel.with_values(FEATURE, prompt.manifest, parsed.values)
    assert [filled.cell(i, FEATURE) for i in prompt.manifest] == truth
    assert filled.missing(FEATURE).sum() == travel.missing(FEATURE).sum() - 6
