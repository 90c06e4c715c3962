"""Tick-based deterministic workflow executor over simulated time.

Each tick starts every ready task that fits in the free vCPU slots, then
advances the clock to the next completion. Task durations derive from the
measured row volume of the task's unit; faults are injected only through an
explicit FaultPlan (optionally seeded-random), so the default run is
fault-free and byte-reproducible. A task that exhausts its retries drags its
transitive dependents into failed state so runs always terminate with zero
in-flight tasks.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .composer import Measurements, Task, WorkflowDag
from .config import ExecutorConfig, SentinelConfig
from .sentinel import (
    ExecutionEvent,
    RunState,
    RunSummary,
    detect,
    ingest,
    new_run_state,
    summarize,
)


@dataclass(frozen=True)
class FaultPlan:
    """How many times each task should fail before being allowed to finish."""

    fail_counts: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def seeded(cls, dag: WorkflowDag, fault_rate: float, seed: int, failures_per_task: int = 1) -> "FaultPlan":
        rng = random.Random(seed)
        counts = {
            task.id: failures_per_task
            for task in sorted(dag.tasks, key=lambda t: t.id)
            if rng.random() < fault_rate
        }
        return cls(fail_counts=counts)


@dataclass(frozen=True)
class SimulationResult:
    state: RunState
    summary: RunSummary
    events: tuple[ExecutionEvent, ...]


def _unit_rows(task: Task, measurements: Measurements) -> int:
    label = f"chr{task.chromosome}" + (
        "-" + "".join(c if c.isalnum() else "-" for c in task.region) if task.region else ""
    )
    measured = measurements.per_unit.get(label) or measurements.per_unit.get(f"chr{task.chromosome}")
    return measured.rows if measured else 0


def task_duration(task: Task, dag: WorkflowDag, measurements: Measurements, cfg: ExecutorConfig) -> float:
    rows = _unit_rows(task, measurements)
    if task.type == "individuals":
        label = f"chr{task.chromosome}" + (
            "-" + "".join(c if c.isalnum() else "-" for c in task.region) if task.region else ""
        )
        j = dag.metadata.get("parallelism", {}).get(label, 1)
        work = rows / max(j, 1) / cfg.throughput_rows_per_s
    elif task.type == "individuals_merge":
        work = rows / cfg.merge_rows_per_s
    elif task.type == "sifting":
        work = rows / cfg.sifting_rows_per_s
    else:
        work = rows / cfg.analysis_rows_per_s
    return cfg.task_overhead_s + work


def run_simulation(
    dag: WorkflowDag,
    measurements: Measurements,
    exec_cfg: ExecutorConfig | None = None,
    sentinel_cfg: SentinelConfig | None = None,
    vcpus: int | None = None,
    fault_plan: FaultPlan | None = None,
    on_event: Callable[[ExecutionEvent], None] | None = None,
) -> SimulationResult:
    """Run the DAG to termination over simulated time."""
    exec_cfg = exec_cfg or ExecutorConfig()
    sentinel_cfg = sentinel_cfg or SentinelConfig()
    slots = max(1, vcpus if vcpus is not None else measurements.total_vcpus)
    faults = dict(fault_plan.fail_counts) if fault_plan else {}

    tasks = {t.id: t for t in dag.tasks}
    dependents: dict[str, list[str]] = {t.id: [] for t in dag.tasks}
    pending_deps: dict[str, int] = {t.id: 0 for t in dag.tasks}
    for producer, consumer in dag.edges:
        dependents[producer].append(consumer)
        pending_deps[consumer] += 1

    state = new_run_state(tasks)
    events: list[ExecutionEvent] = []

    def emit(at: float, task_id: str, kind: str, detail: str | None = None) -> None:
        event = ExecutionEvent(at=at, task_id=task_id, kind=kind, detail=detail)
        ingest(state, event)
        events.append(event)
        if on_event is not None:
            on_event(event)

    clock = 0.0
    ready = sorted(task_id for task_id, deps in pending_deps.items() if deps == 0)
    running: list[tuple[float, str]] = []  # (finish time, task id) min-heap
    permanently_failed: set[str] = set()

    def cascade_failure(root: str) -> None:
        stack = list(dependents[root])
        while stack:
            task_id = stack.pop()
            if task_id in permanently_failed:
                continue
            permanently_failed.add(task_id)
            emit(clock, task_id, "failed", detail=f"upstream task failed ({root})")
            stack.extend(dependents[task_id])

    while ready or running:
        while ready and len(running) < slots:
            task_id = ready.pop(0)
            if task_id in permanently_failed:
                continue
            emit(clock, task_id, "scheduled")
            emit(clock, task_id, "started")
            duration = task_duration(tasks[task_id], dag, measurements, exec_cfg)
            heapq.heappush(running, (clock + duration, task_id))
        if not running:
            break
        finish_at, task_id = heapq.heappop(running)
        clock = finish_at
        if faults.get(task_id, 0) > 0:
            faults[task_id] -= 1
            emit(clock, task_id, "failed", detail="injected fault")
            if state.failure_counts[task_id] > exec_cfg.retry_limit:
                permanently_failed.add(task_id)
                cascade_failure(task_id)
            else:
                ready.append(task_id)
                ready.sort()
        else:
            emit(clock, task_id, "completed")
            for consumer in dependents[task_id]:
                pending_deps[consumer] -= 1
                if pending_deps[consumer] == 0 and consumer not in permanently_failed:
                    ready.append(consumer)
            ready.sort()
        detect(state, clock, sentinel_cfg)

    detect(state, clock, sentinel_cfg)
    return SimulationResult(
        state=state,
        summary=summarize(state, {"execution": state.clock}),
        events=tuple(events),
    )


def estimate_runtime(
    dag: WorkflowDag,
    measurements: Measurements,
    cfg: ExecutorConfig | None = None,
    vcpus: int | None = None,
) -> float:
    """Optimistic utilization-bound runtime projection for approval summaries.

    total work / capacity plus per-task scheduling overhead: coarser than the
    simulator but monotone nondecreasing in row volume at fixed capacity.
    """
    cfg = cfg or ExecutorConfig()
    capacity = max(1, vcpus if vcpus is not None else measurements.total_vcpus)
    work = sum(
        task_duration(task, dag, measurements, cfg) - cfg.task_overhead_s for task in dag.tasks
    )
    overhead = len(dag.tasks) * cfg.task_overhead_s
    return (work + overhead) / capacity
