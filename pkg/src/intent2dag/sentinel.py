"""Execution Sentinel: task state tracking, anomaly detection, summaries.

State transitions follow scheduled -> started -> completed | failed, with two
extras the simulator needs: failed -> scheduled (retry) and pending/scheduled
-> failed (upstream cascade). Out-of-order events are logged and leave the
state unchanged; events for unknown tasks are an error. Anomaly detection is
idempotent: an anomaly already raised for a task is never re-raised.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from statistics import median
from typing import Iterable

from .config import SentinelConfig

logger = logging.getLogger(__name__)

EVENT_KINDS = ("scheduled", "started", "progressed", "failed", "completed")


class UnknownTask(KeyError):
    def __init__(self, task_id: str):
        self.task_id = task_id
        super().__init__(f"event for task {task_id!r} unknown to this run")


class TaskState(str, Enum):
    PENDING = "pending"
    SCHEDULED = "scheduled"
    STARTED = "started"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass(frozen=True)
class ExecutionEvent:
    at: float  # simulated seconds
    task_id: str
    kind: str
    detail: str | None = None

    def as_record(self) -> dict:
        return {"at": self.at, "task_id": self.task_id, "kind": self.kind, "detail": self.detail}


@dataclass(frozen=True)
class Anomaly:
    kind: str  # stalled | repeated_failure
    task_id: str
    evidence: str
    raised_at: float

    def as_record(self) -> dict:
        return {
            "kind": self.kind,
            "task_id": self.task_id,
            "evidence": self.evidence,
            "raised_at": self.raised_at,
        }


@dataclass
class RunState:
    task_ids: frozenset[str]
    states: dict[str, TaskState] = field(default_factory=dict)
    failure_counts: dict[str, int] = field(default_factory=dict)
    last_event_at: dict[str, float] = field(default_factory=dict)
    started_at: dict[str, float] = field(default_factory=dict)
    completed_durations: list[float] = field(default_factory=list)
    anomalies: list[Anomaly] = field(default_factory=list)
    out_of_order: list[ExecutionEvent] = field(default_factory=list)
    clock: float = 0.0
    _raised: set[tuple[str, str]] = field(default_factory=set)

    def state_of(self, task_id: str) -> TaskState:
        return self.states.get(task_id, TaskState.PENDING)

    def counts(self) -> dict[str, int]:
        tally = {state.value: 0 for state in TaskState}
        for task_id in self.task_ids:
            tally[self.state_of(task_id).value] += 1
        return tally

    @property
    def completed(self) -> int:
        return self.counts()["completed"]

    @property
    def failed(self) -> int:
        return self.counts()["failed"]

    @property
    def in_flight(self) -> int:
        tally = self.counts()
        return tally["pending"] + tally["scheduled"] + tally["started"]


@dataclass(frozen=True)
class RunSummary:
    total_tasks: int
    completed: int
    failed: int
    in_flight: int
    anomalies: tuple[Anomaly, ...]
    wall_clock_s: float
    phase_durations: dict[str, float]

    def as_record(self) -> dict:
        return {
            "total_tasks": self.total_tasks,
            "completed": self.completed,
            "failed": self.failed,
            "in_flight": self.in_flight,
            "anomalies": [a.as_record() for a in self.anomalies],
            "wall_clock_s": self.wall_clock_s,
            "phase_durations": dict(self.phase_durations),
        }


def new_run_state(task_ids: Iterable[str]) -> RunState:
    return RunState(task_ids=frozenset(task_ids))


_LEGAL = {
    TaskState.PENDING: {"scheduled", "failed"},
    TaskState.SCHEDULED: {"started", "failed"},
    TaskState.STARTED: {"progressed", "completed", "failed"},
    TaskState.FAILED: {"scheduled"},  # retry
    TaskState.COMPLETED: set(),
}

_TARGET = {
    "scheduled": TaskState.SCHEDULED,
    "started": TaskState.STARTED,
    "completed": TaskState.COMPLETED,
    "failed": TaskState.FAILED,
}


def ingest(state: RunState, event: ExecutionEvent) -> RunState:
    """Apply one event; mutates and returns the state."""
    if event.task_id not in state.task_ids:
        raise UnknownTask(event.task_id)
    state.clock = max(state.clock, event.at)
    current = state.state_of(event.task_id)
    if event.kind not in _LEGAL[current]:
        logger.warning(
            "out-of-order event %s for task %s in state %s", event.kind, event.task_id, current.value
        )
        state.out_of_order.append(event)
        return state
    state.last_event_at[event.task_id] = event.at
    if event.kind == "progressed":
        return state
    state.states[event.task_id] = _TARGET[event.kind]
    if event.kind == "started":
        state.started_at[event.task_id] = event.at
    elif event.kind == "completed":
        started = state.started_at.get(event.task_id, event.at)
        state.completed_durations.append(event.at - started)
    elif event.kind == "failed":
        state.failure_counts[event.task_id] = state.failure_counts.get(event.task_id, 0) + 1
    return state


def detect(state: RunState, now: float, config: SentinelConfig | None = None) -> list[Anomaly]:
    """Return newly raised anomalies as of ``now`` (already-raised are suppressed).

    A started task is stalled after stall_factor x the median completed-task
    duration with no event (absolute fallback before any completion exists).
    A task with failure count at or past the threshold is a repeated failure.
    """
    config = config or SentinelConfig()
    fresh: list[Anomaly] = []

    if state.completed_durations:
        threshold = config.stall_factor * max(median(state.completed_durations), 1e-9)
    else:
        threshold = config.stall_absolute_s
    for task_id in sorted(state.task_ids):
        if state.state_of(task_id) is not TaskState.STARTED:
            continue
        silent_for = now - state.last_event_at.get(task_id, now)
        if silent_for > threshold and ("stalled", task_id) not in state._raised:
            state._raised.add(("stalled", task_id))
            fresh.append(
                Anomaly(
                    kind="stalled",
                    task_id=task_id,
                    evidence=f"no event for {silent_for:.1f}s (threshold {threshold:.1f}s)",
                    raised_at=now,
                )
            )

    for task_id, count in sorted(state.failure_counts.items()):
        if count >= config.repeated_failure_threshold and ("repeated_failure", task_id) not in state._raised:
            state._raised.add(("repeated_failure", task_id))
            fresh.append(
                Anomaly(
                    kind="repeated_failure",
                    task_id=task_id,
                    evidence=f"failed {count} times (threshold {config.repeated_failure_threshold})",
                    raised_at=now,
                )
            )

    state.anomalies.extend(fresh)
    return fresh


def summarize(state: RunState, phase_durations: dict[str, float] | None = None) -> RunSummary:
    """Counts consistent with ingested events; valid mid-run and at completion."""
    tally = state.counts()
    return RunSummary(
        total_tasks=len(state.task_ids),
        completed=tally["completed"],
        failed=tally["failed"],
        in_flight=tally["pending"] + tally["scheduled"] + tally["started"],
        anomalies=tuple(state.anomalies),
        wall_clock_s=state.clock,
        phase_durations=dict(phase_durations or {"execution": state.clock}),
    )
