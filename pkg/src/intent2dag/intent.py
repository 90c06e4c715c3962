"""ResearchIntent: the contract between the semantic and deterministic layers.

An intent captures what the scientist asked for (analysis type, population
codes, chromosomes and/or coordinate regions, variant focus) without
committing to execution details. Everything downstream of a fixed intent is
deterministic, so this module also owns the canonical form and its hash.

Canonical serialization (the byte form fed to ``intent_hash``): UTF-8 JSON
with keys in the fixed order analysis_type, populations, chromosomes,
regions, focus; no insignificant whitespace; absent optionals as null;
regions as objects with keys name, chromosome, start, end.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Sequence

from .genome import chromosome_sort_key, normalize_chromosome


class AnalysisType(str, Enum):
    SINGLE_POPULATION = "single_population"
    POPULATION_COMPARISON = "population_comparison"
    MULTI_POPULATION = "multi_population"
    REGION_ANALYSIS = "region_analysis"


class Focus(str, Enum):
    ALL_VARIANTS = "all_variants"
    DELETERIOUS = "deleterious"
    COMMON = "common"
    RARE = "rare"


@dataclass(frozen=True)
class GenomicRegion:
    name: str
    chromosome: str
    start: int
    end: int

    def sort_key(self) -> tuple[tuple[int, int], int]:
        return (chromosome_sort_key(self.chromosome), self.start)

    def as_record(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "chromosome": self.chromosome,
            "start": self.start,
            "end": self.end,
        }


@dataclass(frozen=True)
class ResearchIntent:
    analysis_type: AnalysisType
    populations: tuple[str, ...]
    chromosomes: tuple[str, ...] | None
    regions: tuple[GenomicRegion, ...] | None
    focus: Focus

    def as_record(self) -> dict[str, Any]:
        """JSON-able record with the canonical key order."""
        return {
            "analysis_type": self.analysis_type.value,
            "populations": list(self.populations),
            "chromosomes": list(self.chromosomes) if self.chromosomes else None,
            "regions": [r.as_record() for r in self.regions] if self.regions else None,
            "focus": self.focus.value,
        }


@dataclass(frozen=True)
class Violation:
    code: str
    field: str
    message: str


class IntentValidationError(ValueError):
    """Structured list of schema/invariant violations for one raw record."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = tuple(violations)
        summary = "; ".join(f"{v.code}({v.field}): {v.message}" for v in self.violations)
        super().__init__(summary or "invalid intent")

    def codes(self) -> tuple[str, ...]:
        return tuple(v.code for v in self.violations)


@dataclass(frozen=True)
class FieldScore:
    """Per-field agreement between a predicted and a gold intent."""

    analysis_type: bool
    populations: bool
    chromosomes: bool
    regions: bool
    focus: bool

    @property
    def full_match(self) -> bool:
        return (
            self.analysis_type
            and self.populations
            and self.chromosomes
            and self.regions
            and self.focus
        )


def _coerce_regions(raw: Any, violations: list[Violation]) -> tuple[GenomicRegion, ...] | None:
    if raw is None:
        return None
    if not isinstance(raw, (list, tuple)):
        violations.append(Violation("unknown_enum_value", "regions", "regions must be a list"))
        return None
    out: list[GenomicRegion] = []
    for item in raw:
        if isinstance(item, GenomicRegion):
            item = item.as_record()
        if not isinstance(item, Mapping):
            violations.append(
                Violation("unknown_enum_value", "regions", f"region entry {item!r} is not an object")
            )
            continue
        name = str(item.get("name", "")).strip()
        chrom_raw = item.get("chromosome")
        chrom = normalize_chromosome(str(chrom_raw)) if chrom_raw is not None else None
        if not name or chrom is None:
            violations.append(
                Violation("unknown_enum_value", "regions", f"bad region name/chromosome in {item!r}")
            )
            continue
        try:
            start, end = int(item["start"]), int(item["end"])
        except (KeyError, TypeError, ValueError):
            violations.append(
                Violation("unknown_enum_value", "regions", f"bad coordinates in region {name}")
            )
            continue
        if start < 1 or end <= start:
            violations.append(
                Violation(
                    "unknown_enum_value",
                    "regions",
                    f"region {name}: need end > start >= 1, got [{start}, {end}]",
                )
            )
            continue
        out.append(GenomicRegion(name, chrom, start, end))
    return tuple(out) if out else None


def validate(raw: Mapping[str, Any], skills) -> ResearchIntent:
    """Validate a raw intent record against the schema and the active Skills.

    Returns the canonicalized intent, or raises IntentValidationError carrying
    every violation found. Population codes are checked against the active
    populations table, so with no Skills loaded no intent can validate.
    """
    violations: list[Violation] = []

    at_raw = raw.get("analysis_type")
    analysis_type = None
    try:
        analysis_type = AnalysisType(str(at_raw))
    except ValueError:
        violations.append(Violation("unknown_enum_value", "analysis_type", f"{at_raw!r}"))

    focus_raw = raw.get("focus")
    focus = Focus.ALL_VARIANTS
    if focus_raw not in (None, ""):
        try:
            focus = Focus(str(focus_raw))
        except ValueError:
            violations.append(Violation("unknown_enum_value", "focus", f"{focus_raw!r}"))

    pops_raw = raw.get("populations") or []
    if not isinstance(pops_raw, (list, tuple)):
        pops_raw = [pops_raw]
    known_codes = skills.population_codes()
    populations: list[str] = []
    for code in pops_raw:
        folded = str(code).strip().upper()
        if folded not in known_codes:
            violations.append(Violation("unknown_population_code", "populations", str(code)))
        elif folded in populations:
            violations.append(Violation("duplicate_population", "populations", folded))
        else:
            populations.append(folded)
    if not pops_raw:
        violations.append(Violation("empty_populations", "populations", "no population codes"))

    chroms_raw = raw.get("chromosomes")
    chromosomes: list[str] = []
    if chroms_raw:
        if not isinstance(chroms_raw, (list, tuple)):
            chroms_raw = [chroms_raw]
        for label in chroms_raw:
            norm = normalize_chromosome(str(label))
            if norm is None:
                violations.append(Violation("unknown_enum_value", "chromosomes", str(label)))
            elif norm not in chromosomes:
                chromosomes.append(norm)

    regions = _coerce_regions(raw.get("regions"), violations)

    if not chromosomes and regions is None:
        violations.append(
            Violation("no_locus", "chromosomes", "neither chromosomes nor regions given")
        )
    if chromosomes and regions:
        for region in regions:
            if region.chromosome not in chromosomes:
                violations.append(
                    Violation(
                        "inconsistent_region_chromosome",
                        "regions",
                        f"region {region.name} is on chromosome {region.chromosome}, "
                        "absent from the chromosomes list",
                    )
                )

    if analysis_type is AnalysisType.SINGLE_POPULATION and len(populations) != 1:
        violations.append(
            Violation("invalid_cardinality", "analysis_type", "single_population needs exactly 1 code")
        )
    if analysis_type is AnalysisType.POPULATION_COMPARISON and len(populations) < 2:
        violations.append(
            Violation("invalid_cardinality", "analysis_type", "population_comparison needs >= 2 codes")
        )

    if violations:
        raise IntentValidationError(violations)
    assert analysis_type is not None
    return canonicalize(
        ResearchIntent(
            analysis_type=analysis_type,
            populations=tuple(populations),
            chromosomes=tuple(chromosomes) if chromosomes else None,
            regions=regions,
            focus=focus,
        )
    )


def canonicalize(intent: ResearchIntent) -> ResearchIntent:
    """Deterministic field ordering; idempotent; set-equal intents converge."""
    chromosomes = (
        tuple(sorted(set(intent.chromosomes), key=chromosome_sort_key))
        if intent.chromosomes
        else None
    )
    regions = (
        tuple(sorted(set(intent.regions), key=GenomicRegion.sort_key))
        if intent.regions
        else None
    )
    return ResearchIntent(
        analysis_type=intent.analysis_type,
        populations=tuple(sorted(set(intent.populations))),
        chromosomes=chromosomes,
        regions=regions,
        focus=intent.focus,
    )


def canonical_json_bytes(intent: ResearchIntent) -> bytes:
    record = canonicalize(intent).as_record()
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def intent_hash(intent: ResearchIntent) -> str:
    """SHA-256 digest of the canonical serialization."""
    return hashlib.sha256(canonical_json_bytes(intent)).hexdigest()


def compare(predicted: ResearchIntent, gold: ResearchIntent) -> FieldScore:
    """Exact set matching per field; regions compared as coordinate tuples.

    Region names participate case-insensitively (labels are presentation,
    coordinates are semantics); absent optional fields match only absent.
    """

    def region_key(r: GenomicRegion) -> tuple[str, str, int, int]:
        return (r.name.lower(), r.chromosome, r.start, r.end)

    def opt_set(values, key=lambda v: v):
        return {key(v) for v in values} if values is not None else None

    return FieldScore(
        analysis_type=predicted.analysis_type is gold.analysis_type,
        populations=set(predicted.populations) == set(gold.populations),
        chromosomes=opt_set(predicted.chromosomes) == opt_set(gold.chromosomes),
        regions=opt_set(predicted.regions, region_key) == opt_set(gold.regions, region_key),
        focus=predicted.focus is gold.focus,
    )
