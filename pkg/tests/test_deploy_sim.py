"""Simulated provisioning against the bundled density fixture."""

from __future__ import annotations

from fractions import Fraction

import pytest

from intent2dag.composer import plan_advisory, refine_staging
from intent2dag.deploy_sim import (
    ChromosomeFixture,
    DensityBin,
    FixtureDataset,
    FixtureError,
    HookFailed,
    HookOutputUnparseable,
    RegionOutsideFixture,
    UnknownChromosome,
    extract_rows,
    load_fixture,
    provision,
    provision_external,
)
from intent2dag.intent import GenomicRegion

from test_composer import chromosome_intent, region_intent


def brute_force_rows(fixture: ChromosomeFixture, region: GenomicRegion) -> int:
    """Independent oracle: per-bin uniform density summed base pair by base pair
    (exact rational arithmetic, half-up rounding at the end)."""
    total = Fraction(0)
    for b in fixture.bins:
        density = Fraction(b.rows, b.end - b.start + 1)
        overlap = max(0, min(b.end, region.end) - max(b.start, region.start) + 1)
        total += density * overlap
    return int(total + Fraction(1, 2))


@pytest.fixture()
def tiny_fixture():
    return ChromosomeFixture(
        chromosome="1",
        full_size_bytes=1000,
        total_rows=100,
        bins=(DensityBin(1, 10, 10), DensityBin(11, 20, 50), DensityBin(21, 100, 40)),
    )


def test_partial_bin_pro_rating_half_up(tiny_fixture):
    # bin densities: 1 row/bp, 5 rows/bp, 0.5 rows/bp
    assert extract_rows(tiny_fixture, GenomicRegion("r", "1", 1, 5)) == 5
    assert extract_rows(tiny_fixture, GenomicRegion("r", "1", 1, 13)) == 10 + 3 * 5
    assert extract_rows(tiny_fixture, GenomicRegion("r", "1", 21, 21)) == 1  # 0.5 -> 1
    assert extract_rows(tiny_fixture, GenomicRegion("r", "1", 21, 23)) == 2  # 1.5 -> 2
    assert extract_rows(tiny_fixture, GenomicRegion("r", "1", 21, 24)) == 2  # 2.0 exact


def test_extract_rows_matches_brute_force(tiny_fixture, fixtures):
    for region in (
        GenomicRegion("a", "1", 3, 17),
        GenomicRegion("b", "1", 1, 100),
        GenomicRegion("c", "1", 20, 22),
    ):
        assert extract_rows(tiny_fixture, region) == brute_force_rows(tiny_fixture, region)
    chr6 = fixtures.chromosome("6")
    for region in (
        GenomicRegion("HLA", "6", 28477797, 33448354),
        GenomicRegion("half", "6", 1, 85_000_000),
    ):
        assert extract_rows(chr6, region) == brute_force_rows(chr6, region)


def test_hla_extract_reproduces_reference_measurements(s3, fixtures):
    plan = plan_advisory(region_intent(s3, "HLA"), s3)
    result = provision(plan.staging, fixtures, vcpus=48)
    (staged,) = result.staged
    assert staged.rows == 166_052
    assert abs(staged.actual_bytes - 1.57e9) / 1.57e9 < 0.01
    assert result.measurements.total_vcpus == 48


def test_apoe_extract_reproduces_reference_measurements(s3, fixtures):
    plan = plan_advisory(region_intent(s3, "APOE"), s3)
    result = provision(plan.staging, fixtures, vcpus=48)
    (staged,) = result.staged
    assert staged.rows == 113
    assert abs(staged.actual_bytes - 1.1e6) / 1.1e6 < 0.01


def test_full_download_returns_fixture_totals(s3, fixtures):
    plan = plan_advisory(chromosome_intent(s3, ["21"]), s3)
    result = provision(plan.staging, fixtures, vcpus=48)
    (staged,) = result.staged
    chr21 = fixtures.chromosome("21")
    assert staged.rows == chr21.total_rows
    assert staged.actual_bytes == chr21.full_size_bytes


def test_provisioning_is_deterministic(s3, fixtures):
    plan = plan_advisory(region_intent(s3, "HLA"), s3)
    results = [provision(plan.staging, fixtures, vcpus=48, session_id="x") for _ in range(3)]
    assert len({r.measurements.measured_at for r in results}) == 1
    assert len({r.namespace for r in results}) == 1
    assert results[0].namespace == "i2d-x"
    assert len({tuple(r.staged) for r in results}) == 1


def test_extraction_bounded_by_chromosome_totals(s3, fixtures):
    for name in ("HLA", "BRCA1", "BRCA2", "CFTR", "HBB", "APOE", "TP53", "CYP2D6"):
        plan = plan_advisory(region_intent(s3, name), s3)
        result = provision(plan.staging, fixtures, vcpus=48)
        (staged,) = result.staged
        fixture = fixtures.chromosome(staged.action.chromosome)
        assert 0 <= staged.rows <= fixture.total_rows
        assert 0 <= staged.actual_bytes <= fixture.full_size_bytes


def test_region_outside_fixture(fixtures):
    chr21 = fixtures.chromosome("21")
    with pytest.raises(RegionOutsideFixture):
        extract_rows(chr21, GenomicRegion("beyond", "21", 1, chr21.length + 10))


def test_unknown_chromosome(fixtures):
    with pytest.raises(UnknownChromosome):
        fixtures.chromosome("9")


def test_fixture_validation_rejects_bad_bins(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(
        '{"chromosomes": {"1": {"full_size_bytes": 10, "total_rows": 5,'
        ' "bins": [[1, 10, 3], [5, 20, 2]]}}}'
    )
    with pytest.raises(FixtureError):
        load_fixture(bad)


def test_fixture_validation_rejects_row_mismatch(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(
        '{"chromosomes": {"1": {"full_size_bytes": 10, "total_rows": 99,'
        ' "bins": [[1, 10, 3]]}}}'
    )
    with pytest.raises(FixtureError):
        load_fixture(bad)


def test_elapsed_models_bandwidth_and_overhead(s3, fixtures):
    from intent2dag.config import ProvisionConfig

    plan = plan_advisory(chromosome_intent(s3, ["21"]), s3)
    cfg = ProvisionConfig(bandwidth_bytes_per_s=100e6, namespace_overhead_s=30.0)
    result = provision(plan.staging, fixtures, vcpus=48, config=cfg)
    assert result.elapsed_sim_s == pytest.approx(30.0 + 900_000_000 / 100e6)


# -- external hook -------------------------------------------------------------


def test_external_hook_pass_through(s3):
    plan = plan_advisory(region_intent(s3, "HBB"), s3)
    result = provision_external(plan.staging, "echo rows=136 bytes=1400000", vcpus=48)
    (staged,) = result.staged
    assert (staged.rows, staged.actual_bytes) == (136, 1_400_000)
    assert result.measurements.per_unit["chr11-HBB"].rows == 136


def test_external_hook_failure(s3):
    plan = plan_advisory(region_intent(s3, "HBB"), s3)
    with pytest.raises(HookFailed):
        provision_external(plan.staging, "false", vcpus=48)


def test_external_hook_garbage_output(s3):
    plan = plan_advisory(region_intent(s3, "HBB"), s3)
    with pytest.raises(HookOutputUnparseable):
        provision_external(plan.staging, "echo no counts here", vcpus=48)


def test_refined_staging_totals_match_provisioned_bytes(s3, fixtures):
    plan = plan_advisory(region_intent(s3, "BRCA1"), s3)
    result = provision(plan.staging, fixtures, vcpus=48)
    refined = refine_staging(plan.staging, result.measurements)
    assert refined.total_est_bytes == sum(s.actual_bytes for s in result.staged)
