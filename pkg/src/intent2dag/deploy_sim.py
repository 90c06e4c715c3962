"""Simulated Deployment Service over a bundled density fixture.

Provisioning a staging plan against the fixture is a pure function: region
extracts sum the density bins overlapping the region (partial bins pro-rated
by span, rounded half up) and convert rows to bytes at the chromosome's
bytes-per-row ratio; full downloads return the chromosome totals. Simulated
elapsed time models transfer at a configured bandwidth plus a fixed
namespace-creation overhead and is reported, never asserted.

An optional external hook (`I2D_STAGING_HOOK`) delegates staging to a real
command that must print ``rows=<n> bytes=<n>`` per action.
"""

from __future__ import annotations

import json
import re
import shlex
import subprocess
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from .composer import (
    FULL_DOWNLOAD,
    Measurements,
    StagingAction,
    StagingPlan,
    UnitMeasurement,
)
from .config import ProvisionConfig
from .intent import GenomicRegion


class FixtureError(ValueError):
    pass


class UnknownChromosome(KeyError):
    def __init__(self, chromosome: str):
        self.chromosome = chromosome
        super().__init__(f"fixture dataset has no chromosome {chromosome}")


class RegionOutsideFixture(ValueError):
    def __init__(self, region: GenomicRegion, length: int):
        self.region = region
        super().__init__(
            f"region {region.name} [{region.start}, {region.end}] lies outside "
            f"the fixture's chromosome {region.chromosome} (1..{length})"
        )


class HookFailed(RuntimeError):
    def __init__(self, exit_code: int, stderr: str):
        self.exit_code = exit_code
        super().__init__(f"staging hook exited {exit_code}: {stderr.strip()[:200]}")


class HookOutputUnparseable(RuntimeError):
    pass


@dataclass(frozen=True)
class DensityBin:
    start: int
    end: int
    rows: int


@dataclass(frozen=True)
class ChromosomeFixture:
    chromosome: str
    full_size_bytes: int
    total_rows: int
    bins: tuple[DensityBin, ...]

    @property
    def length(self) -> int:
        return self.bins[-1].end

    @property
    def bytes_per_row(self) -> Fraction:
        return Fraction(self.full_size_bytes, self.total_rows)


@dataclass(frozen=True)
class FixtureDataset:
    chromosomes: Mapping[str, ChromosomeFixture]
    provenance: str = ""

    def chromosome(self, label: str) -> ChromosomeFixture:
        try:
            return self.chromosomes[label]
        except KeyError:
            raise UnknownChromosome(label) from None


@dataclass(frozen=True)
class StagedAction:
    action: StagingAction
    rows: int
    actual_bytes: int


@dataclass(frozen=True)
class ProvisionResult:
    namespace: str
    staged: tuple[StagedAction, ...]
    measurements: Measurements
    elapsed_sim_s: float


def load_fixture(path: Path) -> FixtureDataset:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    chromosomes: dict[str, ChromosomeFixture] = {}
    for label, entry in raw["chromosomes"].items():
        bins = tuple(DensityBin(int(s), int(e), int(r)) for s, e, r in entry["bins"])
        previous_end = 0
        for b in bins:
            if b.start <= previous_end:
                raise FixtureError(f"chromosome {label}: bins overlap or are unsorted at {b.start}")
            if b.end < b.start or b.rows < 0:
                raise FixtureError(f"chromosome {label}: malformed bin {b}")
            previous_end = b.end
        total = int(entry["total_rows"])
        if sum(b.rows for b in bins) != total:
            raise FixtureError(f"chromosome {label}: bin rows do not sum to total_rows")
        chromosomes[label] = ChromosomeFixture(
            chromosome=label,
            full_size_bytes=int(entry["full_size_bytes"]),
            total_rows=total,
            bins=bins,
        )
    return FixtureDataset(chromosomes=chromosomes, provenance=raw.get("provenance", ""))


def bundled_fixture_path() -> Path:
    from importlib.resources import files

    return Path(str(files("intent2dag").joinpath("data/fixtures/thousand_genomes.json")))


def load_bundled_fixture() -> FixtureDataset:
    return load_fixture(bundled_fixture_path())


def _round_half_up(value: Fraction) -> int:
    return int(value + Fraction(1, 2))


def extract_rows(fixture: ChromosomeFixture, region: GenomicRegion) -> int:
    """Rows overlapping [start, end]: full bins count whole, partial bins
    pro-rate by overlapped span, rounded half up."""
    if region.start < 1 or region.end > fixture.length:
        raise RegionOutsideFixture(region, fixture.length)
    rows = Fraction(0)
    for b in fixture.bins:
        lo, hi = max(b.start, region.start), min(b.end, region.end)
        if lo > hi:
            continue
        if lo == b.start and hi == b.end:
            rows += b.rows
        else:
            rows += Fraction(b.rows * (hi - lo + 1), b.end - b.start + 1)
    return _round_half_up(rows)


def _measure_action(action: StagingAction, fixtures: FixtureDataset) -> tuple[int, int]:
    fixture = fixtures.chromosome(action.chromosome)
    if action.kind == FULL_DOWNLOAD:
        return fixture.total_rows, fixture.full_size_bytes
    assert action.region is not None
    rows = extract_rows(fixture, action.region)
    return rows, _round_half_up(rows * fixture.bytes_per_row)


def provision(
    staging: StagingPlan,
    fixtures: FixtureDataset,
    vcpus: int,
    config: ProvisionConfig | None = None,
    session_id: str = "local",
) -> ProvisionResult:
    """Deterministic simulated provisioning of one staging plan."""
    config = config or ProvisionConfig()
    staged: list[StagedAction] = []
    per_unit: dict[str, UnitMeasurement] = {}
    total_bytes = 0
    for action in staging.actions:
        rows, actual = _measure_action(action, fixtures)
        staged.append(StagedAction(action=action, rows=rows, actual_bytes=actual))
        per_unit[action.unit.label] = UnitMeasurement(rows=rows, bytes=actual)
        total_bytes += actual
    elapsed = config.namespace_overhead_s + total_bytes / config.bandwidth_bytes_per_s
    measurements = Measurements(per_unit=per_unit, total_vcpus=vcpus, measured_at=elapsed)
    return ProvisionResult(
        namespace=f"i2d-{session_id}",
        staged=tuple(staged),
        measurements=measurements,
        elapsed_sim_s=elapsed,
    )


_HOOK_OUTPUT = re.compile(r"rows=(\d+)\s+bytes=(\d+)")


def provision_external(
    staging: StagingPlan,
    hook: str,
    vcpus: int,
    session_id: str = "local",
) -> ProvisionResult:
    """Delegate staging to an external command (one invocation per action).

    The command receives chromosome, start, end, url as arguments (start and
    end are 0 for full downloads) and must print ``rows=<n> bytes=<n>``.
    """
    staged: list[StagedAction] = []
    per_unit: dict[str, UnitMeasurement] = {}
    for action in staging.actions:
        start = action.region.start if action.region else 0
        end = action.region.end if action.region else 0
        argv = shlex.split(hook) + [action.chromosome, str(start), str(end), action.source_url]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise HookFailed(proc.returncode, proc.stderr)
        match = _HOOK_OUTPUT.search(proc.stdout)
        if not match:
            raise HookOutputUnparseable(
                f"hook output lacks 'rows=<n> bytes=<n>': {proc.stdout.strip()[:200]!r}"
            )
        rows, actual = int(match.group(1)), int(match.group(2))
        staged.append(StagedAction(action=action, rows=rows, actual_bytes=actual))
        per_unit[action.unit.label] = UnitMeasurement(rows=rows, bytes=actual)
    measurements = Measurements(per_unit=per_unit, total_vcpus=vcpus, measured_at=0.0)
    return ProvisionResult(
        namespace=f"i2d-{session_id}",
        staged=tuple(staged),
        measurements=measurements,
        elapsed_sim_s=0.0,
    )
