"""Evaluation protocol: tiered query dataset, per-field scoring, ablations.

Dataset format is JSON lines, one case per line:
  {"id": ..., "tier": "T1".."T5", "query": ..., "gold": {...}}
where gold is one of
  {"intent": {<ResearchIntent record>}}
  {"expect_clarification": ["populations", ...]}
  {"expect_rejection": ["HBP", ...], "alternate_intent": {...}?}

T4 gold is a clarification expectation and T5 a rejection expectation: that
is the architecture's correct behavior for underspecified and adversarial
queries, and partially-valid adversarial cases may carry the salvageable
intent as an alternate gold.

Scoring: intent golds require a full field match; clarification golds match
when the outcome's missing fields cover the expected ones; rejection golds
match when every expected term is among the unresolved terms. Per-field
accuracy counts non-intent golds as all-or-nothing, so it never drops below
full-match accuracy.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .extraction import ExtractionResult, extract_rule
from .intent import FieldScore, IntentValidationError, ResearchIntent, compare, validate
from .skills import SkillDocument, SkillSet, select_skillset

logger = logging.getLogger(__name__)

TIERS = ("T1", "T2", "T3", "T4", "T5")
FIELD_NAMES = ("analysis_type", "populations", "chromosomes", "regions", "focus")


class MalformedCase(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class DuplicateId(ValueError):
    pass


class InvalidGoldIntent(ValueError):
    def __init__(self, case_id: str, cause: Exception):
        self.case_id = case_id
        super().__init__(f"case {case_id}: gold intent invalid: {cause}")


@dataclass(frozen=True)
class QueryCase:
    id: str
    tier: str
    query: str
    gold_intent: ResearchIntent | None = None
    expect_clarification: tuple[str, ...] | None = None
    expect_rejection: tuple[str, ...] | None = None
    alternate_intent: ResearchIntent | None = None

    @property
    def gold_kind(self) -> str:
        if self.gold_intent is not None:
            return "intent"
        return "clarification" if self.expect_clarification is not None else "rejection"


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    tier: str
    matched: bool
    field_score: FieldScore | None = None
    fault: str | None = None


@dataclass(frozen=True)
class TierCell:
    n: int
    full_match_count: int

    @property
    def accuracy(self) -> float:
        return self.full_match_count / self.n if self.n else 0.0


@dataclass(frozen=True)
class ConfigReport:
    config: str
    per_tier: Mapping[str, TierCell]
    per_field_accuracy: Mapping[str, float]

    @property
    def overall(self) -> TierCell:
        return TierCell(
            n=sum(cell.n for cell in self.per_tier.values()),
            full_match_count=sum(cell.full_match_count for cell in self.per_tier.values()),
        )


@dataclass(frozen=True)
class AblationReport:
    configs: tuple[str, ...]
    by_config: Mapping[str, ConfigReport]

    def accuracy(self, config: str, tier: str) -> float:
        return self.by_config[config].per_tier[tier].accuracy

    def overall(self, config: str) -> float:
        return self.by_config[config].overall.accuracy


def load_dataset(path: Path, skills: SkillSet) -> list[QueryCase]:
    """Load and validate a JSONL dataset; gold intents must validate against
    the provided SkillSet."""
    cases: list[QueryCase] = []
    seen: set[str] = set()
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        logger.warning("dataset %s is empty", path)
        return []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedCase(line_no, f"bad JSON: {exc}") from exc
        try:
            case_id = record["id"]
            tier = record["tier"]
            query = record["query"]
            gold = record["gold"]
        except KeyError as exc:
            raise MalformedCase(line_no, f"missing field {exc}") from exc
        if tier not in TIERS:
            raise MalformedCase(line_no, f"unknown tier {tier!r}")
        if case_id in seen:
            raise DuplicateId(f"duplicate case id {case_id!r}")
        seen.add(case_id)

        gold_intent = expect_clar = expect_rej = alternate = None
        if "intent" in gold:
            try:
                gold_intent = validate(gold["intent"], skills)
            except IntentValidationError as exc:
                raise InvalidGoldIntent(case_id, exc) from exc
        elif "expect_clarification" in gold:
            expect_clar = tuple(gold["expect_clarification"])
        elif "expect_rejection" in gold:
            expect_rej = tuple(gold["expect_rejection"])
            if "alternate_intent" in gold:
                try:
                    alternate = validate(gold["alternate_intent"], skills)
                except IntentValidationError as exc:
                    raise InvalidGoldIntent(case_id, exc) from exc
        else:
            raise MalformedCase(line_no, "gold must carry intent, expect_clarification, or expect_rejection")
        cases.append(
            QueryCase(
                id=case_id,
                tier=tier,
                query=query,
                gold_intent=gold_intent,
                expect_clarification=expect_clar,
                expect_rejection=expect_rej,
                alternate_intent=alternate,
            )
        )
    return cases


def bundled_dataset_path() -> Path:
    from importlib.resources import files

    return Path(str(files("intent2dag").joinpath("data/eval/queries.jsonl")))


def score_case(case: QueryCase, result: ExtractionResult) -> CaseScore:
    if case.gold_intent is not None:
        if result.intent is None:
            return CaseScore(case.id, case.tier, matched=False)
        fs = compare(result.intent, case.gold_intent)
        return CaseScore(case.id, case.tier, matched=fs.full_match, field_score=fs)
    if case.expect_clarification is not None:
        matched = result.clarification is not None and set(case.expect_clarification) <= set(
            result.clarification.missing_fields
        )
        return CaseScore(case.id, case.tier, matched=matched)
    assert case.expect_rejection is not None
    matched = result.rejection is not None and set(case.expect_rejection) <= set(
        result.rejection.unresolved_terms
    )
    if not matched and case.alternate_intent is not None and result.intent is not None:
        matched = compare(result.intent, case.alternate_intent).full_match
    return CaseScore(case.id, case.tier, matched=matched)


def run_ablation(
    cases: Sequence[QueryCase],
    configs: Sequence[str],
    library: Sequence[SkillDocument],
    extractor: Callable[[str, SkillSet], ExtractionResult] = extract_rule,
) -> AblationReport:
    """Score every case under every Skill configuration.

    Extractor faults never abort the matrix: a case whose extraction raises
    is scored as a miss with the fault recorded.
    """
    by_config: dict[str, ConfigReport] = {}
    for config in configs:
        skillset = select_skillset(config, library)
        scores: list[CaseScore] = []
        for case in cases:
            try:
                result = extractor(case.query, skillset)
            except Exception as exc:  # fault isolation per spec
                logger.warning("case %s under %s faulted: %s", case.id, config, exc)
                scores.append(CaseScore(case.id, case.tier, matched=False, fault=str(exc)))
                continue
            scores.append(score_case(case, result))

        per_tier = {}
        for tier in TIERS:
            tier_scores = [s for s in scores if s.tier == tier]
            per_tier[tier] = TierCell(
                n=len(tier_scores), full_match_count=sum(s.matched for s in tier_scores)
            )
        per_field: dict[str, float] = {}
        if scores:
            for field_name in FIELD_NAMES:
                correct = sum(
                    (
                        getattr(s.field_score, field_name)
                        if s.field_score is not None
                        else s.matched  # non-intent golds: all-or-nothing
                    )
                    for s in scores
                )
                per_field[field_name] = correct / len(scores)
        by_config[config] = ConfigReport(
            config=config, per_tier=per_tier, per_field_accuracy=per_field
        )
    return AblationReport(configs=tuple(configs), by_config=by_config)


# ---------------------------------------------------------------------------
# Rendering

_TIER_DESCRIPTIONS = {
    "T1": "explicit",
    "T2": "synonym",
    "T3": "implicit",
    "T4": "underspecified",
    "T5": "adversarial",
}


def render_report(report: AblationReport, fmt: str = "text-table") -> bytes:
    """Config x tier matrix with an Overall row; percentages to one decimal."""
    if fmt == "json":
        record = {
            "configs": list(report.configs),
            "tiers": {
                config: {
                    tier: {
                        "n": cell.n,
                        "full_match_count": cell.full_match_count,
                        "accuracy": round(cell.accuracy, 4),
                    }
                    for tier, cell in report.by_config[config].per_tier.items()
                }
                for config in report.configs
            },
            "overall": {config: round(report.overall(config), 4) for config in report.configs},
            "per_field": {
                config: {
                    field: round(acc, 4)
                    for field, acc in report.by_config[config].per_field_accuracy.items()
                }
                for config in report.configs
            },
        }
        return (json.dumps(record, indent=1, sort_keys=True) + "\n").encode("utf-8")

    rows = [["Tier"] + list(report.configs)]
    for tier in TIERS:
        rows.append(
            [f"{tier} ({_TIER_DESCRIPTIONS[tier]})"]
            + [f"{report.accuracy(config, tier) * 100:.1f}" for config in report.configs]
        )
    rows.append(["Overall"] + [f"{report.overall(config) * 100:.1f}" for config in report.configs])

    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerows(rows)
        return buffer.getvalue().encode("utf-8")
    if fmt == "text-table":
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        lines = []
        for index, row in enumerate(rows):
            lines.append(
                "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
            )
            if index == 0:
                lines.append("  ".join("-" * widths[i] for i in range(len(widths))))
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}; expected text-table, csv, or json")


def parse_report_csv(data: bytes) -> dict[str, dict[str, float]]:
    """Inverse of the csv rendering: {config: {tier/Overall: accuracy%}}."""
    rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
    header = rows[0]
    configs = header[1:]
    out: dict[str, dict[str, float]] = {config: {} for config in configs}
    for row in rows[1:]:
        label = row[0].split(" ")[0]
        for config, cell in zip(configs, row[1:]):
            out[config][label] = float(cell)
    return out
