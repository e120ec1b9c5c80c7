import json

import numpy as np
import pytest

from impute_forge.analysis import analyze
from impute_forge.backend import BackendConfig
from impute_forge.dataset import MissingnessSpec, inject_missingness
from impute_forge.exceptions import NoExamplesForClass
from impute_forge.orchestrator import (
    ablation_run,
    build_plan,
    chunk_missing,
    relevance_order,
    render_plan_prompts,
    run,
)
from impute_forge.prompts import BRIDGE_LINE, PromptConfig
from impute_forge.threshold import PredictorSet, SelectionPolicy

from .helpers import make_dataset


def pset(feature, *predictors):
    return PredictorSet(feature, 0.0, tuple(predictors), 10)


def test_relevance_order_adult(adult, adult_matrix):
    result = analyze(adult, "auto", SelectionPolicy.fixed(0.2), matrix=adult_matrix)
    sets = result.predictor_sets
    assert "workclass" in sets["occupation"].predictors
    order = relevance_order(list(sets), sets, adult.missing_counts(), adult.names)
    assert order[0] == "workclass"
    assert sorted(order) == sorted(["workclass", "occupation", "native-country"])


def test_relevance_order_rules():
    assert relevance_order(["a"], {"a": pset("a", "y")}) == ["a"]
    sets = {"a": pset("a", "y"), "b": pset("b", "y"), "c": pset("c", "y")}
    assert relevance_order(["c", "a", "b"], sets, {}, ["a", "b", "c"]) == ["a", "b", "c"]
    assert relevance_order(["a", "b", "c"], sets, {"a": 5, "b": 1, "c": 3}) == ["b", "c", "a"]
    sets = {"a": pset("a", "b"), "b": pset("b", "y"), "c": pset("c", "b", "a")}
    assert relevance_order(["a", "b", "c"], sets) == ["b", "a", "c"]


def test_chunking_examples():
    rows = {"1": list(range(60)), "0": list(range(100, 160))}
    chunks = chunk_missing(rows, ["1", "0"], 10)
    assert len(chunks) == 6 and all(len(c["1"]) == 10 and len(c["0"]) == 10 for c in chunks)
    single = chunk_missing({"1": [4, 2, 9, 1, 0]}, ["1", "0"], 10)
    assert single == [{"1": [0, 1, 2, 4, 9]}]
    ones = chunk_missing({"1": [1, 2], "0": [5]}, ["1", "0"], 1)
    assert ones == [{"1": [1], "0": [5]}, {"1": [2]}]
    with pytest.raises(ValueError):
        chunk_missing(rows, ["1"], 0)


def test_chunks_partition_missing_rows():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = sorted(rng.choice(200, size=rng.integers(0, 40), replace=False).tolist())
        b = sorted(rng.choice(range(200, 400), size=rng.integers(0, 40), replace=False).tolist())
        k = int(rng.integers(1, 12))
        chunks = chunk_missing({"A": a, "B": b}, ["A", "B"], k)
        flat = [i for c in chunks for rows in c.values() for i in rows]
        assert sorted(flat) == a + b and len(flat) == len(set(flat))
        assert all(len(rows) <= k for c in chunks for rows in c.values())


def travel_plan(travel, threshold=0.2, **kw):
    result = analyze(travel, "auto", SelectionPolicy.fixed(threshold))
    return build_plan(travel, result.predictor_sets, PromptConfig(**kw), seed=3)


def test_travel_mock_run_complete_and_deterministic(travel):
    plan = travel_plan(travel)
    assert len(plan.chunks["FrequentFlyer"]) == 6
    a, log = run(plan, travel, BackendConfig.mock())
    b, _ = run(plan, travel, BackendConfig.mock())
    assert a.missing_mask.sum() == 0
    assert a.equals(b)
    assert log.complete and len(log.records) == 6
    assert not any(r.fallback for r in log.records)
    # non-interference
    for name in travel.names:
        if name != "FrequentFlyer":
            assert a.column(name).tolist() == travel.column(name).tolist()
    observed = ~travel.missing("FrequentFlyer")
    assert (a.column("FrequentFlyer")[observed] == travel.column("FrequentFlyer")[observed]).all()


def test_nothing_missing_is_a_noop(travel):
    full = travel.with_values("FrequentFlyer", np.flatnonzero(travel.missing("FrequentFlyer")),
                              ["Yes"] * 120)
    plan = build_plan(full, {}, PromptConfig())
    out, log = run(plan, full, BackendConfig.mock())
    assert out.equals(full) and log.records == []


def test_fallback_after_parse_exhaustion(travel, monkeypatch):
    from impute_forge import orchestrator
    from impute_forge.backend import CompletionExchange

    calls = []

    def bad_complete(cfg, prompt, client=None):
        calls.append(prompt.feature)
        return CompletionExchange(prompt.text, "not a value\n", 1.0, 1, prompt.estimated_tokens)

    monkeypatch.setattr(orchestrator, "complete", bad_complete)
    plan = travel_plan(travel)
    out, log = run(plan, travel, BackendConfig.mock())
    assert out.missing_mask.sum() == 0
    assert all(r.fallback for r in log.records)
    assert len(calls) == 6 * (BackendConfig().max_retries + 1)
    assert all(r.attempt_count == BackendConfig().max_retries + 1 for r in log.records)
    assert any("parse failure" in w for w in log.records[0].warnings)


def test_fallback_without_examples_raises():
    # class "0" has no complete rows, so neither the mock nor the fallback can answer it
    d = make_dataset({"a": ["x", None, None, "y"], "y": ["1", "0", "0", "1"]}, {}, "y")
    plan = build_plan(d, {"a": pset("a", "y")}, PromptConfig(examples_per_group=0))
    with pytest.raises(NoExamplesForClass):
        run(plan, d, BackendConfig.mock())


def test_later_features_see_imputed_context(travel):
    d = inject_missingness(travel, MissingnessSpec("AnnualIncomeClass", {"0": 20, "1": 20}, seed=9))
    sets = {"AnnualIncomeClass": pset("AnnualIncomeClass", "Target"),
            "FrequentFlyer": pset("FrequentFlyer", "AnnualIncomeClass", "Target")}
    plan = build_plan(d, sets, PromptConfig(examples_per_group=5), seed=1)
    assert plan.ordered_features == ["AnnualIncomeClass", "FrequentFlyer"]
    out, log = run(plan, d, BackendConfig.mock())
    assert out.missing_mask.sum() == 0
    ff_records = [r for r in log.records if r.feature == "FrequentFlyer"]
    assert not any("also missing" in w for r in ff_records for w in r.warnings)
    # rendering the second feature before the first is imputed shows the co-missing cells
    before = render_plan_prompts(plan, d)["FrequentFlyer"]
    co_missing = (d.missing("FrequentFlyer") & d.missing("AnnualIncomeClass")).any()
    assert any(p.warnings for p in before) == bool(co_missing)


def test_dump_prompts(tmp_path, travel):
    plan = travel_plan(travel)
    run(plan, travel, BackendConfig.mock(), dump_dir=tmp_path)
    texts = sorted(tmp_path.glob("*.txt"))
    metas = sorted(tmp_path.glob("*.manifest.json"))
    assert len(texts) == len(metas) == 6
    meta = json.loads(metas[0].read_text())
    assert meta["expected_count"] == 20 and len(meta["row_indices"]) == 20
    assert BRIDGE_LINE in texts[0].read_text()


def test_ablation_styles(travel):
    result = analyze(travel, "auto", SelectionPolicy.fixed(0.0))
    g, glog = ablation_run(travel, BackendConfig.mock(), "grouped", result.predictor_sets, seed=2)
    u, ulog = ablation_run(travel, BackendConfig.mock(), "ungrouped", result.predictor_sets, seed=2)
    g2, _ = ablation_run(travel, BackendConfig.mock(), "grouped", result.predictor_sets, seed=2)
    assert g.missing_mask.sum() == u.missing_mask.sum() == 0
    assert g.equals(g2)
    assert {r.style for r in glog.records} == {"grouped"}
    assert {r.style for r in ulog.records} == {"ungrouped"}
    assert [r.prompt_sha256 for r in glog.records] != [r.prompt_sha256 for r in ulog.records]


def test_plan_hash_stable(travel):
    assert travel_plan(travel).config_hash() == travel_plan(travel).config_hash()
    assert travel_plan(travel).config_hash() != travel_plan(travel, 0.0).config_hash()
