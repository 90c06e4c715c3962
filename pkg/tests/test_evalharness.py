"""Dataset loading, ablation scoring, and report rendering."""

from __future__ import annotations

import json
import random

import pytest

from intent2dag import evalharness
from intent2dag.evalharness import (
    DuplicateId,
    InvalidGoldIntent,
    MalformedCase,
    bundled_dataset_path,
    load_dataset,
    parse_report_csv,
    render_report,
    run_ablation,
    score_case,
)
from intent2dag.extraction import extract_rule


@pytest.fixture(scope="module")
def cases(s3):
    return load_dataset(bundled_dataset_path(), s3)


def test_bundled_dataset_loads_clean(cases):
    assert len(cases) == 50
    by_tier = {}
    for case in cases:
        by_tier.setdefault(case.tier, []).append(case)
    assert {tier: len(group) for tier, group in sorted(by_tier.items())} == {
        "T1": 10, "T2": 10, "T3": 10, "T4": 10, "T5": 10,
    }
    assert {case.gold_kind for case in cases if case.tier == "T4"} == {"clarification"}
    assert {case.gold_kind for case in cases if case.tier == "T5"} == {"rejection"}


def test_table1_seed_queries_present(cases):
    queries = {case.query for case in cases}
    assert "Compare EUR and AFR on chromosome 21" in queries
    assert "Find rare variants in British individuals on chromosome 3" in queries
    assert "Profile pharmacogenomic variation across South Asians ethnic groups" in queries
    assert "Check TP53 for mutations" in queries
    assert "Study rare variants in the HBP gene for Mende and Esan populations" in queries


def test_invalid_gold_intent_rejected(tmp_path, s3):
    bad = tmp_path / "bad.jsonl"
    bad.write_text(
        json.dumps(
            {
                "id": "x",
                "tier": "T1",
                "query": "q",
                "gold": {
                    "intent": {
                        "analysis_type": "single_population",
                        "populations": ["EURO"],
                        "chromosomes": ["1"],
                        "regions": None,
                        "focus": "all_variants",
                    }
                },
            }
        )
        + "\n"
    )
    with pytest.raises(InvalidGoldIntent):
        load_dataset(bad, s3)


def test_duplicate_id_rejected(tmp_path, s3):
    line = json.dumps(
        {"id": "dup", "tier": "T4", "query": "q", "gold": {"expect_clarification": ["populations"]}}
    )
    path = tmp_path / "dup.jsonl"
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(DuplicateId):
        load_dataset(path, s3)


def test_malformed_line_rejected(tmp_path, s3):
    path = tmp_path / "broken.jsonl"
    path.write_text('{"id": "x", "tier": "T1"}\n')
    with pytest.raises(MalformedCase):
        load_dataset(path, s3)


def test_empty_file_warns_and_returns_empty(tmp_path, s3, caplog):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with caplog.at_level("WARNING"):
        assert load_dataset(path, s3) == []
    assert any("empty" in record.message for record in caplog.records)


# -- ablation -----------------------------------------------------------------


@pytest.fixture(scope="module")
def report(cases, library):
    return run_ablation(cases, ["S0", "S1", "S2", "S3"], library)


def test_tier_ceilings(report):
    assert report.accuracy("S3", "T1") == 1.0
    assert report.accuracy("S3", "T2") == 1.0
    assert report.accuracy("S1", "T1") == 1.0
    assert report.accuracy("S1", "T2") == 1.0
    assert report.accuracy("S0", "T2") == 0.0


def test_overall_ordering(report):
    assert report.overall("S3") >= report.overall("S1") >= report.overall("S0")


def test_per_field_at_least_full_match(report):
    for config in report.configs:
        config_report = report.by_config[config]
        overall = config_report.overall.accuracy
        for accuracy in config_report.per_field_accuracy.values():
            assert accuracy >= overall - 1e-9


def test_scoring_is_order_independent(cases, library):
    shuffled = list(cases)
    random.Random(7).shuffle(shuffled)
    a = render_report(run_ablation(cases, ["S0", "S3"], library), "json")
    b = render_report(run_ablation(shuffled, ["S0", "S3"], library), "json")
    assert a == b


def test_report_bit_reproducible(cases, library):
    a = render_report(run_ablation(cases, ["S0", "S1", "S2", "S3"], library), "text-table")
    b = render_report(run_ablation(cases, ["S0", "S1", "S2", "S3"], library), "text-table")
    assert a == b


def test_extractor_faults_become_scored_misses(cases, library):
    calls = {"n": 0}

    def flaky(query, skillset):
        calls["n"] += 1
        if calls["n"] % 7 == 0:
            raise RuntimeError("backend exploded")
        return extract_rule(query, skillset)

    report = run_ablation(cases, ["S3"], library, extractor=flaky)
    assert report.overall("S3") < 1.0  # misses recorded, matrix not aborted
    assert calls["n"] == len(cases)


def test_clarification_scoring_covers_fields(cases, s3):
    case = next(c for c in cases if c.id == "Q-T4-001")
    result = extract_rule(case.query, s3)
    assert score_case(case, result).matched


def test_rejection_scoring_requires_expected_terms(cases, s3):
    case = next(c for c in cases if c.id == "Q-T5-005")
    result = extract_rule(case.query, s3)
    assert result.rejection is not None
    assert set(case.expect_rejection) <= set(result.rejection.unresolved_terms)
    assert score_case(case, result).matched


# -- rendering ----------------------------------------------------------------


def test_text_table_shape(report):
    text = render_report(report, "text-table").decode()
    lines = [line for line in text.splitlines() if line]
    assert lines[0].split()[:1] == ["Tier"]
    labels = [line.split(" ")[0] for line in lines[2:]]
    assert labels == ["T1", "T2", "T3", "T4", "T5", "Overall"]
    assert "100.0" in text  # one-decimal percentage formatting


def test_csv_round_trip(report):
    data = render_report(report, "csv")
    parsed = parse_report_csv(data)
    for config in report.configs:
        for tier in ("T1", "T2", "T3", "T4", "T5"):
            assert parsed[config][tier] == pytest.approx(
                round(report.accuracy(config, tier) * 100, 1)
            )
        assert parsed[config]["Overall"] == pytest.approx(
            round(report.overall(config) * 100, 1)
        )


def test_json_report_round_trips(report):
    record = json.loads(render_report(report, "json"))
    assert record["overall"]["S3"] == pytest.approx(report.overall("S3"), abs=1e-4)
    assert json.loads(render_report(report, "json")) == record
