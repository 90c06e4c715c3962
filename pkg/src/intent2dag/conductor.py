"""User-facing orchestrator: session lifecycle over the six-phase pipeline.

A session walks Routing -> Planning -> (AwaitingClarification) ->
PlanValidation -> Provisioning -> DeferredGeneration -> ExecutionApproval ->
Executing -> Completed, with Rejected/Failed as the other terminal states.
Two human gates are enforced: no provisioning without plan approval, no
execution without execution approval. Every session appends an event journal
(JSON lines) from which the terminal phase, intent hash, and DAG bytes can be
reconstructed without recomputation.

Provisioning and execution are simulated and fast, so this conductor runs
them synchronously inside the triggering action while preserving the
interface contract (ordered per-session events, snapshot reads).
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from . import composer, deploy_sim, simexec
from .config import AppConfig
from .extraction import ExtractionResult, TokenCost, extract_rule, merge_revision
from .intent import ResearchIntent, intent_hash
from .sentinel import RunSummary
from .skills import SkillSet, normalize_text


class Phase(str, Enum):
    ROUTING = "Routing"
    PLANNING = "Planning"
    AWAITING_CLARIFICATION = "AwaitingClarification"
    PLAN_VALIDATION = "PlanValidation"
    PROVISIONING = "Provisioning"
    DEFERRED_GENERATION = "DeferredGeneration"
    EXECUTION_APPROVAL = "ExecutionApproval"
    EXECUTING = "Executing"
    COMPLETED = "Completed"
    FAILED = "Failed"
    REJECTED = "Rejected"


TERMINAL_PHASES = frozenset({Phase.COMPLETED, Phase.FAILED, Phase.REJECTED})

# When set, staging runs through the external command instead of the fixture.
STAGING_HOOK_ENV = "I2D_STAGING_HOOK"


class IllegalAction(RuntimeError):
    def __init__(self, phase: Phase, action: str):
        self.phase, self.action = phase, action
        super().__init__(f"action {action!r} is not legal in phase {phase.value}")


@dataclass(frozen=True)
class Answer:
    text: str


@dataclass(frozen=True)
class ApprovePlan:
    actor: str = "user"


@dataclass(frozen=True)
class Revise:
    text: str
    actor: str = "user"


@dataclass(frozen=True)
class Reject:
    actor: str = "user"


@dataclass(frozen=True)
class ApproveExecution:
    actor: str = "user"


UserAction = Answer | ApprovePlan | Revise | Reject | ApproveExecution


@dataclass(frozen=True)
class Message:
    role: str  # user | system
    text: str


@dataclass(frozen=True)
class ApprovalRecord:
    gate: str  # plan | execution
    actor: str
    at: str  # wall-clock ISO timestamp


@dataclass(frozen=True)
class TimingRow:
    name: str
    seconds: float
    fraction: float


@dataclass(frozen=True)
class TimingReport:
    rows: tuple[TimingRow, ...]
    token_cost: TokenCost | None

    def as_record(self) -> dict:
        record = {
            "rows": [
                {"name": r.name, "seconds": r.seconds, "fraction": r.fraction} for r in self.rows
            ],
            "token_cost": None,
        }
        if self.token_cost:
            record["token_cost"] = {
                "prompt_tokens": self.token_cost.prompt_tokens,
                "completion_tokens": self.token_cost.completion_tokens,
                "usd_estimate": self.token_cost.usd_estimate,
            }
        return record


class Journal:
    """Append-only JSON-lines event log for one session."""

    def __init__(self, path: Path | None):
        self.path = path
        self.seq = 0
        self.events: list[dict] = []
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("", encoding="utf-8")

    def write(self, kind: str, data: dict) -> dict:
        self.seq += 1
        event = {
            "seq": self.seq,
            "at": datetime.now(timezone.utc).isoformat(),
            "kind": kind,
            "data": data,
        }
        self.events.append(event)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, separators=(",", ":"), ensure_ascii=False) + "\n")
        return event


@dataclass
class Session:
    id: str
    query: str
    phase: Phase
    skill_config: str
    skill_fingerprint: str
    journal: Journal
    domain: str | None = None
    context: str = ""  # merged extraction input (query + corrections)
    messages: list[Message] = field(default_factory=list)
    extraction: ExtractionResult | None = None
    extraction_elapsed_ms: float = 0.0
    token_cost: TokenCost | None = None
    intent: ResearchIntent | None = None
    advisory: composer.AdvisoryPlan | None = None
    staging: composer.StagingPlan | None = None
    provision: deploy_sim.ProvisionResult | None = None
    measurements: composer.Measurements | None = None
    dag: composer.WorkflowDag | None = None
    dag_bytes: bytes | None = None
    summary: composer.ApprovalSummary | None = None
    run_summary: RunSummary | None = None
    approvals: list[ApprovalRecord] = field(default_factory=list)
    phase_timings: dict[str, float] = field(default_factory=dict)
    clarification_rounds: int = 0
    terminal_cause: str | None = None
    _phase_entered_at: float = 0.0


def _session_id(counter: int, query: str) -> str:
    digest = hashlib.sha256(f"{counter}:{query}".encode("utf-8")).hexdigest()[:8]
    return f"s{counter:04d}-{digest}"


class Conductor:
    """Owns sessions, Skills, fixtures, and the simulated backends."""

    def __init__(
        self,
        config: AppConfig,
        skillset: SkillSet,
        fixtures: deploy_sim.FixtureDataset,
        extractor: Callable[[str, SkillSet], ExtractionResult] | None = None,
        clock: Callable[[], float] = time.perf_counter,
        journal_dir: Path | None = None,
    ):
        self.config = config
        self.skillset = skillset
        self.fixtures = fixtures
        self.extractor = extractor or extract_rule
        self.clock = clock
        self.journal_dir = journal_dir
        self.sessions: dict[str, Session] = {}
        self._counter = 0

    # -- session lifecycle ---------------------------------------------------

    def open_session(self, query: str) -> Session:
        """Route the query; a routable session lands in Planning and is planned."""
        self._counter += 1
        session_id = _session_id(self._counter, query)
        journal_path = self.journal_dir / f"{session_id}.jsonl" if self.journal_dir else None
        session = Session(
            id=session_id,
            query=query,
            phase=Phase.ROUTING,
            skill_config=self.skillset.config,
            skill_fingerprint=self.skillset.fingerprint,
            journal=Journal(journal_path),
            context=query,
        )
        session._phase_entered_at = self.clock()
        self.sessions[session_id] = session
        self._say(session, "user", query)

        routed = self._route(query)
        session.journal.write(
            "session_opened",
            {
                "session_id": session_id,
                "query": query,
                "domain": routed,
                "skill_config": session.skill_config,
                "skill_fingerprint": session.skill_fingerprint,
            },
        )
        if routed is None:
            self._terminate(session, Phase.REJECTED, "no registered domain matches this query")
            return session
        session.domain = routed
        self._enter(session, Phase.PLANNING)
        self._run_planning(session)
        return session

    def _route(self, query: str) -> str | None:
        text = normalize_text(query)
        words = set(text.split())
        if words & set(self.config.conductor.routing_keywords):
            return self.config.conductor.domain
        # fallback: any vocabulary hit against the domain's Skills
        from .skills import resolve_population, resolve_region

        for token in text.replace(",", " ").split():
            if resolve_population(token, self.skillset) or resolve_region(token, self.skillset):
                return self.config.conductor.domain
        return None

    def step(self, session: Session, action: UserAction) -> list[Message]:
        """Apply one user action; returns the system messages it produced."""
        before = len(session.messages)
        if session.phase in TERMINAL_PHASES:
            raise IllegalAction(session.phase, type(action).__name__)
        if isinstance(action, Answer):
            if session.phase is not Phase.AWAITING_CLARIFICATION:
                raise IllegalAction(session.phase, "Answer")
            self._say(session, "user", action.text)
            session.context = merge_revision(session.context, action.text)
            self._enter(session, Phase.PLANNING)
            self._run_planning(session)
        elif isinstance(action, Revise):
            if session.phase is not Phase.PLAN_VALIDATION:
                raise IllegalAction(session.phase, "Revise")
            self._say(session, "user", action.text)
            session.context = merge_revision(session.context, action.text)
            self._enter(session, Phase.PLANNING)
            self._run_planning(session)
        elif isinstance(action, ApprovePlan):
            if session.phase is not Phase.PLAN_VALIDATION:
                raise IllegalAction(session.phase, "ApprovePlan")
            self._record_approval(session, "plan", action.actor)
            self._run_provisioning(session)
        elif isinstance(action, ApproveExecution):
            if session.phase is not Phase.EXECUTION_APPROVAL:
                raise IllegalAction(session.phase, "ApproveExecution")
            self._record_approval(session, "execution", action.actor)
            self._run_execution(session)
        elif isinstance(action, Reject):
            if session.phase not in (
                Phase.AWAITING_CLARIFICATION,
                Phase.PLAN_VALIDATION,
                Phase.EXECUTION_APPROVAL,
            ):
                raise IllegalAction(session.phase, "Reject")
            self._terminate(session, Phase.REJECTED, f"rejected by {action.actor}")
        else:
            raise IllegalAction(session.phase, type(action).__name__)
        return session.messages[before:]

    # -- phase workers -------------------------------------------------------

    def _run_planning(self, session: Session) -> None:
        result = self.extractor(session.context, self.skillset)
        session.extraction = result
        session.extraction_elapsed_ms += result.elapsed_ms
        if result.token_cost:
            session.token_cost = result.token_cost
        record: dict = {
            "outcome": result.outcome_kind,
            "extractor_id": result.extractor_id,
            "elapsed_ms": result.elapsed_ms,
            "skill_fingerprint": result.skill_fingerprint,
        }
        if result.intent is not None:
            record["intent"] = result.intent.as_record()
            record["intent_hash"] = intent_hash(result.intent)
        elif result.clarification is not None:
            record["clarification"] = {
                "missing_fields": list(result.clarification.missing_fields),
                "question": result.clarification.question,
            }
        else:
            assert result.rejection is not None
            record["rejection"] = {
                "unresolved_terms": list(result.rejection.unresolved_terms),
                "message": result.rejection.message,
            }
        session.journal.write("extraction", record)

        if result.rejection is not None:
            self._say(session, "system", result.rejection.message)
            self._terminate(session, Phase.REJECTED, result.rejection.message)
            return
        if result.clarification is not None:
            if session.clarification_rounds >= self.config.conductor.clarification_rounds_max:
                self._terminate(
                    session,
                    Phase.REJECTED,
                    "clarification rounds exhausted without a complete intent",
                )
                return
            session.clarification_rounds += 1
            self._say(session, "system", result.clarification.question)
            self._enter(session, Phase.AWAITING_CLARIFICATION)
            return

        assert result.intent is not None
        session.intent = result.intent
        advisory = composer.plan_advisory(
            result.intent, self.skillset, self.config.staging, self.config.calibration
        )
        session.advisory = advisory
        session.staging = advisory.staging
        session.journal.write(
            "plan",
            {
                "intent_hash": intent_hash(result.intent),
                "description": advisory.description,
                "advisory_parallelism": dict(advisory.advisory_parallelism),
                "total_est_bytes": advisory.staging.total_est_bytes,
                "total_full_bytes": advisory.staging.total_full_bytes,
                "savings_fraction": advisory.staging.savings_fraction,
                "actions": [
                    {
                        "unit": a.unit.label,
                        "kind": a.kind,
                        "est_bytes": a.est_bytes,
                        "full_bytes": a.full_bytes,
                        "source_url": a.source_url,
                    }
                    for a in advisory.staging.actions
                ],
            },
        )
        self._say(session, "system", advisory.description)
        self._enter(session, Phase.PLAN_VALIDATION)

    def _run_provisioning(self, session: Session) -> None:
        assert session.staging is not None and session.intent is not None
        self._enter(session, Phase.PROVISIONING)
        hook = os.environ.get(STAGING_HOOK_ENV)
        try:
            if hook:
                result = deploy_sim.provision_external(
                    session.staging,
                    hook,
                    vcpus=self.config.provision.vcpus,
                    session_id=session.id,
                )
            else:
                result = deploy_sim.provision(
                    session.staging,
                    self.fixtures,
                    vcpus=self.config.provision.vcpus,
                    config=self.config.provision,
                    session_id=session.id,
                )
        except (
            deploy_sim.UnknownChromosome,
            deploy_sim.RegionOutsideFixture,
            deploy_sim.HookFailed,
            deploy_sim.HookOutputUnparseable,
        ) as exc:
            self._fail(session, f"provisioning failed: {exc}")
            return
        session.provision = result
        session.measurements = result.measurements
        session.staging = composer.refine_staging(session.staging, result.measurements)
        session.journal.write(
            "provision",
            {
                "namespace": result.namespace,
                "elapsed_sim_s": result.elapsed_sim_s,
                "measurements": result.measurements.as_record(),
                "staged": [
                    {"unit": s.action.unit.label, "rows": s.rows, "bytes": s.actual_bytes}
                    for s in result.staged
                ],
            },
        )

        self._enter(session, Phase.DEFERRED_GENERATION)
        try:
            dag = composer.generate_dag(
                session.intent,
                result.measurements,
                self.config.generator,
                skill_fingerprint=session.skill_fingerprint,
            )
        except composer.MissingMeasurement as exc:
            self._fail(session, f"deferred generation failed: {exc}")
            return
        session.dag = dag
        session.dag_bytes = composer.serialize_dag(dag)
        session.summary = composer.summarize_for_approval(
            dag,
            session.staging,
            result.measurements,
            storage_multiplier=self.config.staging.storage_multiplier,
            executor_cfg=self.config.executor,
        )
        session.journal.write(
            "dag",
            {
                "intent_hash": dag.metadata["intent_hash"],
                "task_count": len(dag.tasks),
                "dag_json": session.dag_bytes.decode("utf-8"),
            },
        )
        session.journal.write(
            "summary",
            {
                "task_count": session.summary.task_count,
                "est_peak_storage_bytes": session.summary.est_peak_storage_bytes,
                "projected_runtime_s": session.summary.projected_runtime_s,
            },
        )
        self._say(
            session,
            "system",
            f"Workflow ready: {session.summary.task_count} tasks, estimated peak storage "
            f"{session.summary.est_peak_storage_bytes} bytes, projected runtime "
            f"{session.summary.projected_runtime_s:.1f}s (simulated). Approve to execute.",
        )
        self._enter(session, Phase.EXECUTION_APPROVAL)

    def _run_execution(self, session: Session) -> None:
        assert session.dag is not None and session.measurements is not None
        self._enter(session, Phase.EXECUTING)
        result = simexec.run_simulation(
            session.dag,
            session.measurements,
            exec_cfg=self.config.executor,
            sentinel_cfg=self.config.sentinel,
            vcpus=self.config.provision.vcpus,
            on_event=lambda e: session.journal.write("run_event", e.as_record()),
        )
        session.run_summary = result.summary
        session.journal.write("run_summary", result.summary.as_record())
        if result.summary.failed:
            self._fail(session, f"{result.summary.failed} tasks failed")
            return
        self._say(
            session,
            "system",
            f"Run complete: {result.summary.completed}/{result.summary.total_tasks} tasks, "
            f"0 failed, simulated wall clock {result.summary.wall_clock_s:.1f}s.",
        )
        self._terminate(session, Phase.COMPLETED, None)

    # -- bookkeeping ----------------------------------------------------------

    def _say(self, session: Session, role: str, text: str) -> None:
        session.messages.append(Message(role=role, text=text))
        session.journal.write("message", {"role": role, "text": text})

    def _enter(self, session: Session, phase: Phase) -> None:
        now = self.clock()
        elapsed = now - session._phase_entered_at
        session.phase_timings[session.phase.value] = (
            session.phase_timings.get(session.phase.value, 0.0) + elapsed
        )
        session.journal.write("phase", {"from": session.phase.value, "to": phase.value})
        session.phase = phase
        session._phase_entered_at = now

    def _record_approval(self, session: Session, gate: str, actor: str) -> None:
        record = ApprovalRecord(
            gate=gate, actor=actor, at=datetime.now(timezone.utc).isoformat()
        )
        session.approvals.append(record)
        session.journal.write("approval", {"gate": gate, "actor": actor, "at": record.at})

    def _terminate(self, session: Session, phase: Phase, cause: str | None) -> None:
        self._enter(session, phase)
        session.terminal_cause = cause
        session.journal.write(
            "terminal",
            {
                "phase": phase.value,
                "cause": cause,
                "intent_hash": intent_hash(session.intent) if session.intent else None,
                "skill_fingerprint": session.skill_fingerprint,
                "measurements_digest": (
                    composer.measurements_digest(session.measurements)
                    if session.measurements
                    else None
                ),
            },
        )

    def _fail(self, session: Session, cause: str) -> None:
        self._say(session, "system", cause)
        self._terminate(session, Phase.FAILED, cause)

    # -- reporting -----------------------------------------------------------

    def timing_report(self, session: Session) -> TimingReport:
        """Phase timing ledger: measured LLM/extraction time, simulated
        provisioning and execution, real conductor overhead."""
        llm_s = session.extraction_elapsed_ms / 1000.0
        provisioning_s = session.provision.elapsed_sim_s if session.provision else 0.0
        execution_s = session.run_summary.wall_clock_s if session.run_summary else 0.0
        real_total = sum(session.phase_timings.values())
        overhead_s = max(real_total - llm_s, 0.0)
        rows = [
            ("llm", llm_s),
            ("provisioning", provisioning_s),
            ("execution", execution_s),
            ("conductor_overhead", overhead_s),
        ]
        total = sum(seconds for _, seconds in rows) or 1.0
        report = TimingReport(
            rows=tuple(TimingRow(name, seconds, seconds / total) for name, seconds in rows),
            token_cost=session.token_cost,
        )
        session.journal.write("timing", report.as_record())
        return report

    # -- batch driver ----------------------------------------------------------

    def run_pipeline(
        self,
        query: str,
        answers: Sequence[str] = (),
        auto_approve: bool = False,
        actor: str = "auto",
    ) -> Session:
        """Drive one query end to end; used by `run --yes`, tests, scripts.

        Clarifications consume ``answers`` in order; approvals require
        ``auto_approve`` (recorded as synthetic approvals by ``actor``).
        """
        session = self.open_session(query)
        answer_queue = list(answers)
        while session.phase is Phase.AWAITING_CLARIFICATION and answer_queue:
            self.step(session, Answer(answer_queue.pop(0)))
        if session.phase is Phase.AWAITING_CLARIFICATION:
            return session  # out of answers; caller decides
        if session.phase is Phase.PLAN_VALIDATION:
            if not auto_approve:
                return session
            self.step(session, ApprovePlan(actor=actor))
        if session.phase is Phase.EXECUTION_APPROVAL:
            if not auto_approve:
                return session
            self.step(session, ApproveExecution(actor=actor))
        return session


# ---------------------------------------------------------------------------
# Journal replay


@dataclass(frozen=True)
class ReplaySummary:
    session_id: str
    query: str
    terminal_phase: str | None
    intent_hash: str | None
    skill_fingerprint: str | None
    measurements_digest: str | None
    dag_bytes: bytes | None
    completed: int
    failed: int
    event_count: int


def replay_journal(path: Path) -> ReplaySummary:
    """Reconstruct a session's terminal state purely from its event journal."""
    session_id = ""
    query = ""
    terminal_phase = None
    digest = None
    fingerprint = None
    meas_digest = None
    dag_bytes = None
    completed = failed = 0
    count = 0
    last_seq = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            event = json.loads(line)
            count += 1
            if event["seq"] <= last_seq:
                raise ValueError(f"journal {path} is not strictly ordered at seq {event['seq']}")
            last_seq = event["seq"]
            kind, data = event["kind"], event["data"]
            if kind == "session_opened":
                session_id = data["session_id"]
                query = data["query"]
                fingerprint = data["skill_fingerprint"]
            elif kind == "dag":
                dag_bytes = data["dag_json"].encode("utf-8")
            elif kind == "run_summary":
                completed = data["completed"]
                failed = data["failed"]
            elif kind == "terminal":
                terminal_phase = data["phase"]
                digest = data.get("intent_hash")
                meas_digest = data.get("measurements_digest")
    return ReplaySummary(
        session_id=session_id,
        query=query,
        terminal_phase=terminal_phase,
        intent_hash=digest,
        skill_fingerprint=fingerprint,
        measurements_digest=meas_digest,
        dag_bytes=dag_bytes,
        completed=completed,
        failed=failed,
        event_count=count,
    )
