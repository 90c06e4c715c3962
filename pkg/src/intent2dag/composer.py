"""Deterministic workflow composition.

Phase 2 turns a canonical intent into an advisory plan: staging actions with
byte estimates and a deliberately pessimistic parallelism estimate (actual
row counts are unknown before provisioning, so the advisory estimate assumes
a unit could carry its whole chromosome's rows). Phase 5 consumes measured
rows/bytes/vCPUs and generates the definitive DAG with calibrated
parallelism. Everything here is a pure function of its inputs: identical
intents plus identical measurements yield byte-identical workflow files.

Workflow file schema (canonical JSON, documented in docs/workflow.schema.json):
top-level keys name, version, metadata, tasks, edges; tasks sorted by id;
edges sorted lexicographically; no insignificant whitespace; one trailing
newline.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Mapping

from .config import CalibrationConfig, GeneratorConfig, StagingConfig
from .genome import GRCH37_CHROMOSOME_LENGTHS, chromosome_sort_key
from .intent import GenomicRegion, ResearchIntent, canonicalize, intent_hash
from .skills import SkillSet

SCHEMA_VERSION = "1.0"

FULL_DOWNLOAD = "full_download"
REGION_EXTRACT = "region_extract"


class UnknownChromosomeSource(KeyError):
    def __init__(self, chromosome: str):
        self.chromosome = chromosome
        super().__init__(f"no data source entry for chromosome {chromosome}")


class MissingMeasurement(KeyError):
    def __init__(self, unit_label: str):
        self.unit_label = unit_label
        super().__init__(f"no measurement for unit {unit_label}")


@dataclass(frozen=True)
class Unit:
    """One staging/generation unit: a chromosome, optionally narrowed to a region."""

    chromosome: str
    region: GenomicRegion | None = None

    @property
    def label(self) -> str:
        if self.region is None:
            return f"chr{self.chromosome}"
        safe = "".join(c if c.isalnum() else "-" for c in self.region.name)
        return f"chr{self.chromosome}-{safe}"

    def sort_key(self):
        return (chromosome_sort_key(self.chromosome), self.region.start if self.region else 0)


@dataclass(frozen=True)
class StagingAction:
    kind: str
    chromosome: str
    region: GenomicRegion | None
    source_url: str
    est_bytes: int
    full_bytes: int

    def __post_init__(self) -> None:
        if (self.kind == REGION_EXTRACT) != (self.region is not None):
            raise ValueError("region must be present iff kind is region_extract")
        if self.est_bytes > self.full_bytes:
            raise ValueError("est_bytes cannot exceed full_bytes")

    @property
    def unit(self) -> Unit:
        return Unit(self.chromosome, self.region)


@dataclass(frozen=True)
class StagingPlan:
    actions: tuple[StagingAction, ...]
    degraded: bool = False  # true when byte sizing fell back to defaults

    @property
    def total_est_bytes(self) -> int:
        return sum(a.est_bytes for a in self.actions)

    @property
    def total_full_bytes(self) -> int:
        return sum(a.full_bytes for a in self.actions)

    @property
    def savings_fraction(self) -> float:
        full = self.total_full_bytes
        return 1.0 - self.total_est_bytes / full if full else 0.0


@dataclass(frozen=True)
class AdvisoryPlan:
    intent: ResearchIntent
    staging: StagingPlan
    advisory_parallelism: Mapping[str, int]
    description: str
    skill_fingerprint: str


@dataclass(frozen=True)
class UnitMeasurement:
    rows: int
    bytes: int


@dataclass(frozen=True)
class Measurements:
    per_unit: Mapping[str, UnitMeasurement]  # keyed by Unit.label
    total_vcpus: int
    measured_at: float  # simulated seconds since provisioning started

    def as_record(self) -> dict:
        return {
            "per_unit": {
                label: {"rows": m.rows, "bytes": m.bytes}
                for label, m in sorted(self.per_unit.items())
            },
            "total_vcpus": self.total_vcpus,
            "measured_at": self.measured_at,
        }


def measurements_digest(measurements: Measurements) -> str:
    canonical = json.dumps(measurements.as_record(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Task:
    id: str
    type: str  # individuals | individuals_merge | sifting | mutation_overlap | frequency
    chromosome: str
    region: str | None
    population: str | None
    cpu_request: int
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]

    def as_record(self) -> dict:
        return {
            "id": self.id,
            "type": self.type,
            "chromosome": self.chromosome,
            "region": self.region,
            "population": self.population,
            "cpu_request": self.cpu_request,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
        }


@dataclass(frozen=True)
class WorkflowDag:
    name: str
    tasks: tuple[Task, ...]
    edges: tuple[tuple[str, str], ...]
    metadata: Mapping[str, object]

    def task_ids(self) -> frozenset[str]:
        return frozenset(t.id for t in self.tasks)


@dataclass(frozen=True)
class ApprovalSummary:
    task_count: int
    est_peak_storage_bytes: int
    projected_runtime_s: float


def intent_units(intent: ResearchIntent) -> tuple[Unit, ...]:
    """Units of work: one per region, plus one per chromosome no region covers."""
    intent = canonicalize(intent)
    units = [Unit(r.chromosome, r) for r in (intent.regions or ())]
    covered = {u.chromosome for u in units}
    units.extend(Unit(c) for c in (intent.chromosomes or ()) if c not in covered)
    return tuple(sorted(units, key=Unit.sort_key))


def calibrate_parallelism(rows: int, total_vcpus: int, config: CalibrationConfig) -> int:
    """J = clamp(ceil(rows / target), 1, cap).

    The cap is the configured max_parallelism when set (an explicit config
    wins over measured capacity; schedulers queue the excess), otherwise the
    measured vCPU count. Zero rows calibrate to J = 1; the caller records the
    zero-rows warning.
    """
    if rows < 0:
        raise ValueError("rows must be >= 0")
    cap = config.max_parallelism if config.max_parallelism is not None else total_vcpus
    cap = max(1, cap)
    return max(1, min(math.ceil(rows / config.rows_per_task_target), cap))


def _advisory_parallelism(est_rows_upper: int, config: CalibrationConfig) -> int:
    return max(1, min(math.ceil(est_rows_upper / config.rows_per_task_target), config.advisory_cap))


def plan_advisory(
    intent: ResearchIntent,
    skills: SkillSet,
    staging_cfg: StagingConfig | None = None,
    calibration: CalibrationConfig | None = None,
) -> AdvisoryPlan:
    """Estimate-based plan: staging actions with byte estimates and advisory J.

    Staging rule: a unit with a region stages a region extract when its
    chromosome's source supports it, sized at span-fraction of the full file
    (floored at the configured minimum); otherwise a full download. The
    advisory J for a unit assumes worst case, the whole chromosome's rows,
    since extraction counts are unknown until provisioning; calibration then
    only lowers it.
    """
    staging_cfg = staging_cfg or StagingConfig()
    calibration = calibration or CalibrationConfig()
    intent = canonicalize(intent)

    have_sources = bool(skills.sources)
    actions: list[StagingAction] = []
    advisory: dict[str, int] = {}
    degraded = not have_sources
    full_downloads_staged: set[str] = set()
    for unit in intent_units(intent):
        source = skills.sources.get(unit.chromosome)
        if source is None:
            if have_sources:
                raise UnknownChromosomeSource(unit.chromosome)
            full_bytes = staging_cfg.default_full_size_bytes
            total_rows = staging_cfg.default_total_rows
            url = f"fixture://chr{unit.chromosome}"
            can_extract = False
        else:
            full_bytes = source.full_size_bytes
            total_rows = source.total_rows
            url = source.url_for(unit.chromosome)
            can_extract = source.extraction == REGION_EXTRACT

        if unit.region is not None and can_extract:
            length = GRCH37_CHROMOSOME_LENGTHS.get(unit.chromosome, unit.region.end)
            span_fraction = (unit.region.end - unit.region.start + 1) / length
            est = max(staging_cfg.min_extract_bytes, round(span_fraction * full_bytes))
            actions.append(
                StagingAction(
                    kind=REGION_EXTRACT,
                    chromosome=unit.chromosome,
                    region=unit.region,
                    source_url=url,
                    est_bytes=min(est, full_bytes),
                    full_bytes=full_bytes,
                )
            )
        elif unit.chromosome not in full_downloads_staged:
            # Region units whose source cannot extract degrade to one full
            # chromosome download; generation falls back to chromosome-level
            # measurements for them.
            full_downloads_staged.add(unit.chromosome)
            actions.append(
                StagingAction(
                    kind=FULL_DOWNLOAD,
                    chromosome=unit.chromosome,
                    region=None,
                    source_url=url,
                    est_bytes=full_bytes,
                    full_bytes=full_bytes,
                )
            )
        advisory[unit.label] = _advisory_parallelism(total_rows, calibration)

    staging = StagingPlan(actions=tuple(actions), degraded=degraded)
    description = _render_description(intent, staging, advisory)
    return AdvisoryPlan(
        intent=intent,
        staging=staging,
        advisory_parallelism=advisory,
        description=description,
        skill_fingerprint=skills.fingerprint,
    )


def _human_bytes(n: int) -> str:
    value = float(n)
    for suffix in ("B", "KB", "MB", "GB"):
        if value < 1000.0 or suffix == "GB":
            return f"{value:.2f} {suffix}" if suffix != "B" else f"{int(value)} B"
        value /= 1000.0
    return f"{value:.2f} GB"


def _render_description(intent: ResearchIntent, staging: StagingPlan, advisory: Mapping[str, int]) -> str:
    lines = [
        f"Analysis: {intent.analysis_type.value} over populations "
        + ", ".join(intent.populations)
        + f" (focus: {intent.focus.value})."
    ]
    if intent.regions:
        lines.append(
            "Regions: "
            + "; ".join(
                f"{r.name} (chr{r.chromosome}:{r.start}-{r.end})" for r in intent.regions
            )
            + "."
        )
    if intent.chromosomes:
        lines.append("Chromosomes: " + ", ".join(intent.chromosomes) + ".")
    lines.append("Staging:")
    for action in staging.actions:
        target = action.unit.label
        if action.kind == REGION_EXTRACT:
            lines.append(
                f"  - {target}: region extract, est. {_human_bytes(action.est_bytes)} "
                f"of {_human_bytes(action.full_bytes)} full file"
            )
        else:
            lines.append(f"  - {target}: full download, {_human_bytes(action.full_bytes)}")
    lines.append(
        f"Estimated transfer {_human_bytes(staging.total_est_bytes)} "
        f"(savings {staging.savings_fraction:.1%} vs full files)."
    )
    lines.append(
        "Advisory parallelism: "
        + ", ".join(f"{label}={j}" for label, j in sorted(advisory.items()))
        + " (pessimistic; calibrated after provisioning)."
    )
    if staging.degraded:
        lines.append("Note: no data-sources knowledge loaded; sizes use defaults.")
    return "\n".join(lines)


def refine_staging(plan: StagingPlan, measurements: Measurements) -> StagingPlan:
    """Replace byte estimates with measured transfer sizes after provisioning."""
    refined = []
    for action in plan.actions:
        measured = measurements.per_unit.get(action.unit.label)
        if measured is None:
            raise MissingMeasurement(action.unit.label)
        refined.append(
            StagingAction(
                kind=action.kind,
                chromosome=action.chromosome,
                region=action.region,
                source_url=action.source_url,
                est_bytes=min(measured.bytes, action.full_bytes),
                full_bytes=action.full_bytes,
            )
        )
    return StagingPlan(actions=tuple(refined), degraded=plan.degraded)


def generate_dag(
    intent: ResearchIntent,
    measurements: Measurements,
    config: GeneratorConfig | None = None,
    skill_fingerprint: str = "",
) -> WorkflowDag:
    """Definitive DAG from measured data volumes.

    Per unit: J individuals tasks feed one merge; one sifting task runs from
    the staged input; per (unit, population) a mutation_overlap and a
    frequency task consume the merge and sifting outputs. Task ids derive
    from role, unit, and index only.
    """
    config = config or GeneratorConfig()
    intent = canonicalize(intent)
    units = intent_units(intent)

    tasks: list[Task] = []
    edges: list[tuple[str, str]] = []
    parallelism: dict[str, int] = {}
    warnings: list[str] = []
    cpu = config.cpu_request

    for unit in units:
        measured = measurements.per_unit.get(unit.label)
        if measured is None and unit.region is not None:
            # region staged as a full chromosome download (no extract support)
            measured = measurements.per_unit.get(f"chr{unit.chromosome}")
        if measured is None:
            raise MissingMeasurement(unit.label)
        j = calibrate_parallelism(measured.rows, measurements.total_vcpus, config.calibration)
        if measured.rows == 0:
            warnings.append(f"unit {unit.label} measured zero rows; J forced to 1")
        parallelism[unit.label] = j
        label = unit.label
        staged_input = f"{label}.vcf.gz"
        region_name = unit.region.name if unit.region else None

        merge_id = f"individuals_merge_{label}"
        sifting_id = f"sifting_{label}"
        individual_outputs = []
        for index in range(1, j + 1):
            task_id = f"individuals_{label}_{index:04d}"
            out = f"{label}.individuals.{index:04d}.tar.gz"
            individual_outputs.append(out)
            tasks.append(
                Task(
                    id=task_id,
                    type="individuals",
                    chromosome=unit.chromosome,
                    region=region_name,
                    population=None,
                    cpu_request=cpu,
                    inputs=(staged_input,),
                    outputs=(out,),
                )
            )
            edges.append((task_id, merge_id))
        merged_out = f"{label}.individuals.merged.tar.gz"
        tasks.append(
            Task(
                id=merge_id,
                type="individuals_merge",
                chromosome=unit.chromosome,
                region=region_name,
                population=None,
                cpu_request=cpu,
                inputs=tuple(individual_outputs),
                outputs=(merged_out,),
            )
        )
        sifted_out = f"{label}.sifted.txt"
        tasks.append(
            Task(
                id=sifting_id,
                type="sifting",
                chromosome=unit.chromosome,
                region=region_name,
                population=None,
                cpu_request=cpu,
                inputs=(staged_input,),
                outputs=(sifted_out,),
            )
        )
        for population in intent.populations:
            for analysis in ("mutation_overlap", "frequency"):
                task_id = f"{analysis}_{label}_{population}"
                tasks.append(
                    Task(
                        id=task_id,
                        type=analysis,
                        chromosome=unit.chromosome,
                        region=region_name,
                        population=population,
                        cpu_request=cpu,
                        inputs=(merged_out, sifted_out, f"{population}.panel"),
                        outputs=(f"{label}.{population}.{analysis}.tar.gz",),
                    )
                )
                edges.append((merge_id, task_id))
                edges.append((sifting_id, task_id))

    digest = intent_hash(intent)
    metadata = {
        "intent_hash": digest,
        "skill_fingerprint": skill_fingerprint,
        "measurements_digest": measurements_digest(measurements),
        "generator_version": config.generator_version,
        "parallelism": dict(sorted(parallelism.items())),
        "warnings": sorted(warnings),
    }
    return WorkflowDag(
        name=f"genomes-{digest[:12]}",
        tasks=tuple(sorted(tasks, key=lambda t: t.id)),
        edges=tuple(sorted(edges)),
        metadata=metadata,
    )


class DagInvariantError(ValueError):
    pass


def validate_dag(dag: WorkflowDag) -> None:
    """Unique deterministic ids, edge endpoints exist, graph is acyclic."""
    ids = [t.id for t in dag.tasks]
    if len(ids) != len(set(ids)):
        raise DagInvariantError("task ids are not unique")
    id_set = set(ids)
    adjacency: dict[str, list[str]] = {task_id: [] for task_id in ids}
    indegree = {task_id: 0 for task_id in ids}
    for producer, consumer in dag.edges:
        if producer not in id_set or consumer not in id_set:
            raise DagInvariantError(f"edge ({producer}, {consumer}) references unknown task")
        adjacency[producer].append(consumer)
        indegree[consumer] += 1
    ready = [task_id for task_id, deg in indegree.items() if deg == 0]
    visited = 0
    while ready:
        node = ready.pop()
        visited += 1
        for nxt in adjacency[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                ready.append(nxt)
    if visited != len(ids):
        raise DagInvariantError("graph contains a cycle")


def serialize_dag(dag: WorkflowDag) -> bytes:
    """Canonical bytes: fixed key order, sorted tasks/edges, trailing newline."""
    record = {
        "name": dag.name,
        "version": SCHEMA_VERSION,
        "metadata": dag.metadata,
        "tasks": [t.as_record() for t in sorted(dag.tasks, key=lambda t: t.id)],
        "edges": [list(edge) for edge in sorted(dag.edges)],
    }
    return (json.dumps(record, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def parse_dag(data: bytes | str) -> WorkflowDag:
    record = json.loads(data)
    tasks = tuple(
        Task(
            id=t["id"],
            type=t["type"],
            chromosome=t["chromosome"],
            region=t["region"],
            population=t["population"],
            cpu_request=t["cpu_request"],
            inputs=tuple(t["inputs"]),
            outputs=tuple(t["outputs"]),
        )
        for t in record["tasks"]
    )
    edges = tuple((edge[0], edge[1]) for edge in record["edges"])
    return WorkflowDag(
        name=record["name"], tasks=tasks, edges=edges, metadata=record["metadata"]
    )


def task_count_formula(parallelism: Mapping[str, int], population_count: int) -> int:
    """|tasks| = sum(J) + 2*|units| + 2*|units|*|populations|."""
    units = len(parallelism)
    return sum(parallelism.values()) + 2 * units + 2 * units * population_count


def summarize_for_approval(
    dag: WorkflowDag,
    staging: StagingPlan,
    measurements: Measurements,
    storage_multiplier: int = 3,
    executor_cfg=None,
) -> ApprovalSummary:
    """Human-facing gate summary: exact task count, staged-bytes-derived peak
    storage, and the simulator cost model's runtime projection."""
    from .simexec import estimate_runtime

    return ApprovalSummary(
        task_count=len(dag.tasks),
        est_peak_storage_bytes=staging.total_est_bytes * storage_multiplier,
        projected_runtime_s=estimate_runtime(dag, measurements, executor_cfg, measurements.total_vcpus),
    )
