"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Tolerances and runtime budgets are pinned here, not configurable.
"""

from __future__ import annotations

import random
import time

import pytest

from intent2dag import composer, deploy_sim, evalharness, skills
from intent2dag.composer import (
    calibrate_parallelism,
    generate_dag,
    intent_units,
    plan_advisory,
    refine_staging,
    serialize_dag,
)
from intent2dag.conductor import (
    ApproveExecution,
    ApprovePlan,
    Conductor,
    IllegalAction,
    Phase,
    replay_journal,
)
from intent2dag.config import AppConfig, CalibrationConfig
from intent2dag.evalharness import load_dataset, render_report, run_ablation
from intent2dag.intent import compare, intent_hash, validate
from intent2dag.sentinel import ingest, new_run_state
from intent2dag.simexec import FaultPlan, run_simulation

from test_composer import TABLE4, measurements_for, region_intent


def _report(name: str, detail: str = "") -> None:
    print(f"ACCEPTANCE {name}: PASS {detail}".rstrip())


def test_c1_staging_savings(s3, fixtures):
    """Six reference region intents: 21.6 GB full, >= 91% saved, per-region
    savings within one percentage point of the reference measurements."""
    started = time.perf_counter()
    total_full = total_downloaded = 0
    for name, chromosome, _, savings_pct in TABLE4:
        plan = plan_advisory(region_intent(s3, name), s3)
        result = deploy_sim.provision(plan.staging, fixtures, vcpus=48)
        refined = refine_staging(plan.staging, result.measurements)
        (action,) = refined.actions
        assert action.chromosome == chromosome
        assert abs(refined.savings_fraction * 100 - savings_pct) <= 1.0, name
        total_full += refined.total_full_bytes
        total_downloaded += refined.total_est_bytes
    elapsed = time.perf_counter() - started
    assert abs(total_full - 21.6e9) / 21.6e9 <= 0.02
    savings = 1 - total_downloaded / total_full
    assert savings >= 0.91
    assert elapsed < 1.0
    _report(
        "C1 staging-savings",
        f"(full={total_full / 1e9:.2f} GB, downloaded={total_downloaded / 1e9:.2f} GB, "
        f"savings={savings:.1%}, {elapsed:.2f}s)",
    )


def test_c2_parallelism_calibration(s3, fixtures):
    """Default calibration reproduces the reference J values and never
    exceeds the advisory estimate."""
    config = CalibrationConfig()
    assert calibrate_parallelism(166_052, 48, config) == 51
    assert calibrate_parallelism(136, 48, config) == 1
    assert calibrate_parallelism(113, 48, config) == 1
    for name, _, _, _ in TABLE4:
        intent = region_intent(s3, name)
        plan = plan_advisory(intent, s3)
        result = deploy_sim.provision(plan.staging, fixtures, vcpus=48)
        dag = generate_dag(intent, result.measurements)
        for label, final_j in dag.metadata["parallelism"].items():
            assert final_j <= plan.advisory_parallelism[label], name
    _report("C2 parallelism-calibration", "(166052->51, 136->1, 113->1, final<=advisory x6)")


def test_c3_determinism(s3):
    """100 repeated generate+serialize runs per randomized intent produce one
    byte sequence; list-permuted inputs produce identical bytes."""
    started = time.perf_counter()
    rng = random.Random(20130502)
    codes = sorted(s3.population_codes())
    entries = list(s3.region_entries())

    for _ in range(10):
        pops = rng.sample(codes, rng.randint(1, 4))
        use_regions = rng.random() < 0.5
        if use_regions:
            chosen = rng.sample(entries, rng.randint(1, 2))
            regions = [
                {"name": e.name, "chromosome": e.chromosome, "start": e.start, "end": e.end}
                for e in chosen
            ]
            chromosomes = None
        else:
            regions = None
            chromosomes = [str(c) for c in rng.sample(range(1, 23), rng.randint(1, 3))]
        raw = {
            "analysis_type": "multi_population" if len(pops) > 1 else "single_population",
            "populations": pops,
            "chromosomes": chromosomes,
            "regions": regions,
            "focus": rng.choice(["all_variants", "rare", "common", "deleterious"]),
        }
        intent = validate(raw, s3)
        rows = {u.label: rng.randrange(0, 500_000) for u in intent_units(intent)}
        measurements = measurements_for(intent, rows)

        blobs = {serialize_dag(generate_dag(intent, measurements)) for _ in range(100)}
        assert len(blobs) == 1

        permuted = dict(raw, populations=list(reversed(pops)))
        if chromosomes:
            permuted["chromosomes"] = list(reversed(chromosomes))
        if regions:
            permuted["regions"] = list(reversed(regions))
        assert serialize_dag(generate_dag(validate(permuted, s3), measurements)) in blobs

    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    _report("C3 determinism", f"(10 intents x 100 runs, {elapsed:.2f}s)")


def test_c4_ablation_ordering_and_ceilings(library, s3):
    """Tier ceilings and knowledge-monotone ordering on the bundled dataset,
    with a bit-identical report across runs."""
    started = time.perf_counter()
    cases = load_dataset(evalharness.bundled_dataset_path(), s3)
    report = run_ablation(cases, ["S0", "S1", "S2", "S3"], library)
    assert report.accuracy("S3", "T1") == 1.0
    assert report.accuracy("S3", "T2") == 1.0
    assert report.accuracy("S1", "T1") == 1.0
    assert report.accuracy("S1", "T2") == 1.0
    assert report.accuracy("S0", "T2") == 0.0
    assert report.overall("S3") >= report.overall("S1") >= report.overall("S0")
    first = render_report(report, "text-table")
    second = render_report(run_ablation(cases, ["S0", "S1", "S2", "S3"], library), "text-table")
    assert first == second
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    _report(
        "C4 ablation",
        f"(overall S0={report.overall('S0'):.2f} <= S1={report.overall('S1'):.2f} "
        f"<= S3={report.overall('S3'):.2f}, {elapsed:.2f}s)",
    )


def test_c5_hitl_and_phase_ordering(s3, fixtures):
    """No DAG before provisioning completes, no execution without the
    execution approval, and out-of-phase approvals are illegal."""
    conductor = Conductor(AppConfig(), s3, fixtures, journal_dir=None)

    session = conductor.open_session("Check TP53 for mutations")
    assert session.dag is None and session.dag_bytes is None
    with pytest.raises(IllegalAction):
        conductor.step(session, ApprovePlan())
    with pytest.raises(IllegalAction):
        conductor.step(session, ApproveExecution())

    session = conductor.open_session("Compare EUR and AFR on chromosome 21")
    assert session.phase is Phase.PLAN_VALIDATION
    assert session.dag is None  # plan exists, DAG must not
    with pytest.raises(IllegalAction):
        conductor.step(session, ApproveExecution())  # execution gate not reached
    conductor.step(session, ApprovePlan())
    assert session.provision is not None and session.dag is not None
    assert session.run_summary is None  # approved plan, not yet execution
    conductor.step(session, ApproveExecution())
    assert session.phase is Phase.COMPLETED
    assert [a.gate for a in session.approvals] == ["plan", "execution"]
    _report("C5 hitl-ordering")


E2E_QUERIES_AND_GOLDS: list[tuple[str, dict]] = [
    (
        "Compare HLA and BRCA1 variants in European, African, and East Asian populations",
        {
            "analysis_type": "population_comparison",
            "populations": ["AFR", "EAS", "EUR"],
            "chromosomes": None,
            "regions": [
                {"name": "HLA", "chromosome": "6", "start": 28477797, "end": 33448354},
                {"name": "BRCA1", "chromosome": "17", "start": 41196312, "end": 41277500},
            ],
            "focus": "all_variants",
        },
    ),
    (
        "Analyze BRCA2 and BRCA1 in British and Finnish populations",
        {
            "analysis_type": "multi_population",
            "populations": ["FIN", "GBR"],
            "chromosomes": None,
            "regions": [
                {"name": "BRCA2", "chromosome": "13", "start": 32889611, "end": 32973805},
                {"name": "BRCA1", "chromosome": "17", "start": 41196312, "end": 41277500},
            ],
            "focus": "all_variants",
        },
    ),
    (
        "Compare sickle cell, cystic fibrosis, and Alzheimer's variants across all five super-populations",
        {
            "analysis_type": "population_comparison",
            "populations": ["AFR", "AMR", "EAS", "EUR", "SAS"],
            "chromosomes": None,
            "regions": [
                {"name": "CFTR", "chromosome": "7", "start": 117120017, "end": 117308719},
                {"name": "HBB", "chromosome": "11", "start": 5246696, "end": 5248301},
                {"name": "APOE", "chromosome": "19", "start": 45409039, "end": 45412650},
            ],
            "focus": "all_variants",
        },
    ),
]


def test_c6_e2e_simulated_pipeline(s3, fixtures, tmp_path):
    """`run --yes` on the three end-to-end queries: Completed, zero failed
    tasks, 5/5 intent fields vs hand-checked golds, timing rows present."""
    started = time.perf_counter()
    conductor = Conductor(AppConfig(), s3, fixtures, journal_dir=tmp_path / "sessions")
    for query, gold_raw in E2E_QUERIES_AND_GOLDS:
        gold = validate(gold_raw, s3)
        session = conductor.run_pipeline(query, auto_approve=True)
        assert session.phase is Phase.COMPLETED, query
        assert session.run_summary is not None and session.run_summary.failed == 0
        score = compare(session.intent, gold)
        assert score.full_match, (query, score)
        report = conductor.timing_report(session)
        names = [row.name for row in report.rows]
        assert {"llm", "provisioning", "execution"} <= set(names)
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    _report("C6 e2e-pipeline", f"(3 queries, 5/5 fields each, {elapsed:.2f}s)")


def test_c7_sentinel_conservation(s3):
    """Randomized fault scenarios: counts always partition the task set,
    completed counts are monotone, and a task failed >= 3 times raises
    exactly one repeated-failure anomaly."""
    intent = region_intent(s3, "HBB", populations=("YRI", "GBR"))
    for seed in range(8):
        rng = random.Random(seed)
        meas = measurements_for(intent, {"chr11-HBB": rng.randrange(100, 80_000)}, vcpus=4)
        dag = generate_dag(intent, meas)
        fault_plan = FaultPlan.seeded(dag, fault_rate=0.3, seed=seed, failures_per_task=3)

        mirror = new_run_state([t.id for t in dag.tasks])
        last_completed = 0

        def on_event(event):
            nonlocal last_completed
            ingest(mirror, event)
            counts = mirror.counts()
            assert sum(counts.values()) == len(dag.tasks)
            assert counts["completed"] >= last_completed
            last_completed = counts["completed"]

        result = run_simulation(dag, meas, vcpus=4, fault_plan=fault_plan, on_event=on_event)
        assert result.summary.in_flight == 0
        for task_id, planned in fault_plan.fail_counts.items():
            if result.state.failure_counts.get(task_id, 0) >= 3:
                hits = [
                    a
                    for a in result.summary.anomalies
                    if a.kind == "repeated_failure" and a.task_id == task_id
                ]
                assert len(hits) == 1, task_id
    _report("C7 sentinel-conservation", "(8 seeded fault scenarios)")


def test_c8_provenance_replay(s3, fixtures, tmp_path):
    """Replaying a completed session's journal reconstructs the terminal
    phase, intent hash, and DAG bytes exactly."""
    conductor = Conductor(AppConfig(), s3, fixtures, journal_dir=tmp_path / "sessions")
    for query, _ in E2E_QUERIES_AND_GOLDS:
        session = conductor.run_pipeline(query, auto_approve=True)
        replayed = replay_journal(session.journal.path)
        assert replayed.terminal_phase == session.phase.value
        assert replayed.intent_hash == intent_hash(session.intent)
        assert replayed.dag_bytes == session.dag_bytes
    _report("C8 provenance-replay", "(3 sessions)")


def test_c9_skill_library_hygiene(library):
    """Bundled documents parse and lint clean; seeded mutations produce the
    designated findings or parse errors."""
    assert len(library) == 5
    assert skills.lint_library(library) == []

    populations_doc = next(d for d in library if d.kind is skills.SkillKind.POPULATIONS)
    duplicated = populations_doc.source.replace(
        "| EUR | European | EUR | 503 |",
        "| EUR | European | EUR | 503 |\n| EUR | European twice | EUR | 1 |",
    )
    with pytest.raises(skills.DuplicateKey):
        skills.parse_skill(duplicated)

    contexts_doc = next(d for d in library if d.kind is skills.SkillKind.RESEARCH_CONTEXTS)
    dangling = skills.parse_skill(contexts_doc.source.replace("| HLA |", "| PHANTOM9 |", 1))
    others = [d for d in library if d.kind is not skills.SkillKind.RESEARCH_CONTEXTS]
    findings = skills.lint_library(others + [dangling])
    assert any(
        f.kind == "dangling_region_reference" and "PHANTOM9" in f.message for f in findings
    )
    _report("C9 skill-hygiene", "(5 docs clean; 2 mutations caught)")
