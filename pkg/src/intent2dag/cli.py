"""intent2dag command line: lint, compose, run, serve, eval, replay.

Exit codes: 0 success, 1 domain errors (lint findings, rejected sessions,
backend faults), 2 usage errors. `--json` switches every subcommand to
machine-readable output on stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import composer, deploy_sim, evalharness, skills
from .conductor import (
    Answer,
    ApprovePlan,
    ApproveExecution,
    Conductor,
    Phase,
    Reject,
    Revise,
    replay_journal,
)
from .config import AppConfig, ConfigError, load_config
from .extraction import extract_llm, extract_rule
from .llm_backend import LlmBackendConfig, LlmBackendError, RecordedTransport


def _echo_err(message: str) -> None:
    click.echo(message, err=True)


def _load_app_config(config_path: str | None, workspace: str | None) -> AppConfig:
    overrides = {}
    if workspace:
        overrides["workspace"] = Path(workspace)
    try:
        return load_config(Path(config_path) if config_path else None, overrides)
    except (ConfigError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


def _load_library(cfg: AppConfig, skills_dir: str | None):
    directory = Path(skills_dir) if skills_dir else (cfg.skills_dir or skills.bundled_skills_dir())
    try:
        return skills.load_library(directory)
    except skills.SkillParseError as exc:
        raise click.ClickException(str(exc)) from exc


def _load_fixture(cfg: AppConfig, fixture: str | None) -> deploy_sim.FixtureDataset:
    path = Path(fixture) if fixture else (cfg.fixture_path or deploy_sim.bundled_fixture_path())
    try:
        return deploy_sim.load_fixture(path)
    except (deploy_sim.FixtureError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


def _make_extractor(extractor: str, recorded: str | None):
    if extractor == "rule":
        return extract_rule
    backend = LlmBackendConfig.from_env()
    transport = RecordedTransport(Path(recorded)) if recorded else None

    def llm_extractor(query, skillset):
        return extract_llm(query, skillset, backend, transport=transport)

    return llm_extractor


def _build_conductor(cfg: AppConfig, library, fixture, extractor) -> Conductor:
    skillset = skills.select_skillset(cfg.conductor.skill_config, library)
    journal_dir = cfg.workspace / "sessions"
    return Conductor(cfg, skillset, fixture, extractor=extractor, journal_dir=journal_dir)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="TOML config file; flags override it.")
@click.option("--workspace", default=None, help="Working directory for journals and outputs (default ./.i2d).")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, workspace: str | None, as_json: bool) -> None:
    """Compose reproducible workflow DAGs from natural-language research queries."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_app_config(config_path, workspace)
    ctx.obj["json"] = as_json


@main.group("skills")
def skills_group() -> None:
    """Skill library maintenance."""


@skills_group.command("lint")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.pass_context
def skills_lint(ctx: click.Context, directory: str) -> None:
    """Parse and cross-check every Skill document in DIRECTORY."""
    try:
        library = skills.load_library(Path(directory))
    except skills.SkillParseError as exc:
        if ctx.obj["json"]:
            click.echo(json.dumps({"error": "parse", "message": str(exc)}))
        else:
            _echo_err(f"parse error: {exc}")
        sys.exit(1)
    findings = skills.lint_library(library)
    if ctx.obj["json"]:
        click.echo(
            json.dumps(
                {
                    "documents": [d.id for d in library],
                    "findings": [
                        {"kind": f.kind, "message": f.message, "documents": list(f.documents)}
                        for f in findings
                    ],
                }
            )
        )
    else:
        click.echo(f"parsed {len(library)} documents")
        for finding in findings:
            click.echo(f"[{finding.kind}] {finding.message} ({', '.join(finding.documents)})")
        if not findings:
            click.echo("library is consistent")
    sys.exit(1 if findings else 0)


@main.command()
@click.option("--query", required=True, help="Natural-language research query.")
@click.option("--skills", "skills_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--fixture", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="TOML config file (overrides the group-level --config).")
@click.option("--out", type=click.Path(dir_okay=False), default="workflow.json", show_default=True)
@click.pass_context
def compose(ctx: click.Context, query: str, skills_dir: str | None, fixture: str | None,
            config_path: str | None, out: str) -> None:
    """Offline one-shot: rule extraction + fixture measurements -> workflow.json."""
    cfg: AppConfig = _load_app_config(config_path, None) if config_path else ctx.obj["config"]
    library = _load_library(cfg, skills_dir)
    fixtures = _load_fixture(cfg, fixture)
    skillset = skills.select_skillset(cfg.conductor.skill_config, library)

    result = extract_rule(query, skillset)
    if result.intent is None:
        detail = result.clarification or result.rejection
        if ctx.obj["json"]:
            click.echo(json.dumps({"outcome": result.outcome_kind, "detail": detail.__dict__}, default=list))
        else:
            _echo_err(f"{result.outcome_kind}: {detail}")
        sys.exit(1)

    advisory = composer.plan_advisory(result.intent, skillset, cfg.staging, cfg.calibration)
    provision = deploy_sim.provision(advisory.staging, fixtures, vcpus=cfg.provision.vcpus, config=cfg.provision)
    dag = composer.generate_dag(
        result.intent, provision.measurements, cfg.generator, skill_fingerprint=skillset.fingerprint
    )
    data = composer.serialize_dag(dag)
    Path(out).write_bytes(data)
    if ctx.obj["json"]:
        click.echo(
            json.dumps(
                {
                    "out": out,
                    "task_count": len(dag.tasks),
                    "intent_hash": dag.metadata["intent_hash"],
                    "parallelism": dag.metadata["parallelism"],
                }
            )
        )
    else:
        click.echo(f"wrote {out}: {len(dag.tasks)} tasks, intent {dag.metadata['intent_hash'][:12]}")


@main.command()
@click.option("--query", required=True)
@click.option("--yes", "auto_approve", is_flag=True, help="Auto-approve both human gates.")
@click.option("--answer", "answers", multiple=True, help="Pre-seeded clarification answers (repeatable).")
@click.option("--skills", "skills_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--fixture", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--extractor", type=click.Choice(["rule", "llm"]), default="rule", show_default=True)
@click.option("--recorded", type=click.Path(exists=True, file_okay=False), default=None,
              help="Recorded-response directory for the llm extractor.")
@click.option("--out", type=click.Path(dir_okay=False), default="workflow.json", show_default=True)
@click.pass_context
def run(
    ctx: click.Context,
    query: str,
    auto_approve: bool,
    answers: tuple[str, ...],
    skills_dir: str | None,
    fixture: str | None,
    extractor: str,
    recorded: str | None,
    out: str,
) -> None:
    """Run the full six-phase pipeline against the simulated backend."""
    cfg: AppConfig = ctx.obj["config"]
    library = _load_library(cfg, skills_dir)
    fixtures = _load_fixture(cfg, fixture)
    try:
        extract = _make_extractor(extractor, recorded)
    except LlmBackendError as exc:
        raise click.ClickException(str(exc)) from exc
    conductor = _build_conductor(cfg, library, fixtures, extract)

    if auto_approve or answers or not sys.stdin.isatty():
        session = conductor.run_pipeline(query, answers=list(answers), auto_approve=auto_approve)
    else:
        session = conductor.open_session(query)
        while session.phase not in (Phase.COMPLETED, Phase.FAILED, Phase.REJECTED):
            click.echo(session.messages[-1].text)
            if session.phase is Phase.AWAITING_CLARIFICATION:
                conductor.step(session, Answer(click.prompt("answer")))
            elif session.phase is Phase.PLAN_VALIDATION:
                choice = click.prompt("approve/revise/reject", default="approve")
                if choice.startswith("a"):
                    conductor.step(session, ApprovePlan())
                elif choice.startswith("rev"):
                    conductor.step(session, Revise(click.prompt("revision")))
                else:
                    conductor.step(session, Reject())
            elif session.phase is Phase.EXECUTION_APPROVAL:
                if click.confirm("start execution?", default=True):
                    conductor.step(session, ApproveExecution())
                else:
                    conductor.step(session, Reject())

    timing = conductor.timing_report(session)
    if session.dag_bytes is not None:
        Path(out).write_bytes(session.dag_bytes)
    if ctx.obj["json"]:
        from .service import session_view

        view = session_view(conductor, session)
        view["timing"] = timing.as_record()
        view["journal"] = str(session.journal.path) if session.journal.path else None
        view["workflow_path"] = out if session.dag_bytes is not None else None
        click.echo(json.dumps(view))
    else:
        click.echo(f"session {session.id}: {session.phase.value}")
        if session.terminal_cause:
            click.echo(f"cause: {session.terminal_cause}")
        if session.run_summary:
            click.echo(
                f"tasks: {session.run_summary.completed} completed, "
                f"{session.run_summary.failed} failed"
            )
        if session.dag_bytes is not None:
            click.echo(f"workflow written to {out}")
        for row in timing.rows:
            click.echo(f"  {row.name:<20} {row.seconds:>10.2f}s  {row.fraction * 100:5.1f}%")
    if session.phase is not Phase.COMPLETED:
        sys.exit(1)


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Static directory with the built web UI.")
@click.option("--skills", "skills_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--fixture", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_context
def serve(ctx: click.Context, port: int, host: str, ui_dir: str | None,
          skills_dir: str | None, fixture: str | None) -> None:
    """Host the conductor HTTP API (and optionally the web UI)."""
    import uvicorn

    from .service import create_app

    cfg: AppConfig = ctx.obj["config"]
    library = _load_library(cfg, skills_dir)
    fixtures = _load_fixture(cfg, fixture)
    conductor = _build_conductor(cfg, library, fixtures, extract_rule)
    app = create_app(conductor, ui_dir=Path(ui_dir) if ui_dir else None)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("eval")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSONL query dataset (default: bundled 50-case set).")
@click.option("--configs", default="S0,S1,S2,S3", show_default=True)
@click.option("--extractor", type=click.Choice(["rule", "llm"]), default="rule", show_default=True)
@click.option("--recorded", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--report", "fmt", type=click.Choice(["table", "csv", "json"]), default="table", show_default=True)
@click.option("--skills", "skills_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.pass_context
def eval_command(ctx: click.Context, dataset: str | None, configs: str, extractor: str,
                 recorded: str | None, fmt: str, skills_dir: str | None) -> None:
    """Score the extractor across Skill configurations, per difficulty tier."""
    cfg: AppConfig = ctx.obj["config"]
    library = _load_library(cfg, skills_dir)
    skillset = skills.select_skillset("S3", library)
    path = Path(dataset) if dataset else evalharness.bundled_dataset_path()
    try:
        cases = evalharness.load_dataset(path, skillset)
    except (evalharness.MalformedCase, evalharness.DuplicateId, evalharness.InvalidGoldIntent) as exc:
        raise click.ClickException(str(exc)) from exc
    try:
        extract = _make_extractor(extractor, recorded)
    except LlmBackendError as exc:
        raise click.ClickException(str(exc)) from exc
    config_list = [c.strip() for c in configs.split(",") if c.strip()]
    report = evalharness.run_ablation(cases, config_list, library, extractor=extract)
    render_fmt = {"table": "text-table", "csv": "csv", "json": "json"}[fmt]
    if ctx.obj["json"] and fmt == "table":
        render_fmt = "json"
    sys.stdout.write(evalharness.render_report(report, render_fmt).decode("utf-8"))


@main.command()
@click.argument("journal", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def replay(ctx: click.Context, journal: str) -> None:
    """Reconstruct a session's terminal state from its event journal."""
    summary = replay_journal(Path(journal))
    if ctx.obj["json"]:
        record = {
            "session_id": summary.session_id,
            "query": summary.query,
            "terminal_phase": summary.terminal_phase,
            "intent_hash": summary.intent_hash,
            "skill_fingerprint": summary.skill_fingerprint,
            "measurements_digest": summary.measurements_digest,
            "completed": summary.completed,
            "failed": summary.failed,
            "event_count": summary.event_count,
            "workflow_bytes": len(summary.dag_bytes) if summary.dag_bytes else None,
        }
        click.echo(json.dumps(record))
    else:
        click.echo(f"session {summary.session_id} ({summary.query!r})")
        click.echo(f"terminal phase: {summary.terminal_phase}")
        click.echo(f"intent hash: {summary.intent_hash}")
        click.echo(f"tasks: {summary.completed} completed, {summary.failed} failed")
        click.echo(f"events: {summary.event_count}")


if __name__ == "__main__":
    main()
