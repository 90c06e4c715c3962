"""Query understanding: a deterministic rule extractor plus LLM plumbing.

The rule extractor scans a query for knowledge the active SkillSet actually
contains (codes, synonyms, region names, context keywords) and for built-in
grammar (chromosome mentions, comparison and focus cues), then assembles a
ResearchIntent. It never invents a code or coordinate that is not in the
SkillSet: unknown entity terms become a rejection, missing mandatory fields a
clarification. Identical (query, SkillSet) pairs always produce identical
results.

Merged revision contexts are one string whose segments are separated by
CORRECTION_SEPARATOR lines; later segments override earlier ones per field.

Analysis-type inference, in order:
  1. no populations -> clarification;
  2. >= 2 populations with a comparative cue -> population_comparison,
     without one -> multi_population;
  3. one population: a matched research context's analysis_type wins, then
     region_analysis if regions are present, else single_population.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, replace

from .intent import AnalysisType, Focus, IntentValidationError, ResearchIntent, validate
from .skills import (
    ResearchContextEntry,
    RegionEntry,
    SkillSet,
    normalize_population_term,
    normalize_region_term,
    resolve_context,
    resolve_population,
    resolve_region,
)

CORRECTION_SEPARATOR = "--- correction ---"

RULE_EXTRACTOR_ID = "rule"

_COMPARATIVE = re.compile(
    r"\b(compare|compared|comparing|comparison|versus|vs\.?|across|between|differ|differs|difference|differences)\b",
    re.IGNORECASE,
)
_FOCUS_CUES: tuple[tuple[Focus, re.Pattern], ...] = (
    (Focus.DELETERIOUS, re.compile(r"\b(deleterious|damaging|harmful|pathogenic)\b", re.IGNORECASE)),
    (Focus.RARE, re.compile(r"\brare\b", re.IGNORECASE)),
    (Focus.COMMON, re.compile(r"\bcommon\b", re.IGNORECASE)),
)

_CHROM_TOKEN = r"(?:\d{1,2}|[XY])"
_CHROM_LIST = re.compile(
    rf"\bchromosomes?\s+({_CHROM_TOKEN}(?:\s*(?:,|and|through|to|-|–)\s*{_CHROM_TOKEN})*)\b",
    re.IGNORECASE,
)
_CHROM_SHORT = re.compile(
    rf"\bchr\s*({_CHROM_TOKEN})(?:\s*(?:-|through|to)\s*({_CHROM_TOKEN}))?\b", re.IGNORECASE
)
_CHROM_SPLIT = re.compile(rf"({_CHROM_TOKEN})|(,|and|through|to|-|–)", re.IGNORECASE)

_ALL_SUPERS = re.compile(r"\ball\s+(?:five\s+)?super[\s-]?populations?\b", re.IGNORECASE)

# "use X instead of Y" / "use X rather than Y": Y is replaced text, not a request
_EXCLUSION_CLAUSE = re.compile(r"\b(?:instead of|rather than)\b.*?(?=[.;]|$)", re.IGNORECASE | re.DOTALL)

_GENE_CANDIDATE = re.compile(r"\b([A-Za-z][A-Za-z0-9-]*)\s+(?:gene|region|locus)s?\b")
_POP_KEYWORD = r"(?:populations?|individuals|samples|people|ethnic\s+groups?)"
_POP_CANDIDATE = re.compile(
    rf"\b((?:[A-Z][\w'-]*)(?:\s+(?:and\s+|,\s*(?:and\s+)?)?[A-Z][\w'-]*)*)\s+{_POP_KEYWORD}\b"
)
_CAPS_TOKEN = re.compile(r"\b[A-Z][A-Z0-9]{2,7}\b")
_CAPS_STOPWORDS = frozenset({"VCF", "DNA", "RNA", "SNP", "GRCH37", "GRCH38", "LLM", "DAG"})
_GENERIC_CANDIDATES = frozenset(
    {"the", "a", "an", "this", "that", "each", "every", "genomic", "gene", "region", "same", "their"}
)
# Query verbs and framing words that sentence-position capitalization sweeps
# into candidate captures; stripped from the front of candidate terms.
_LEADING_STOPWORDS = frozenset(
    {
        "compare", "comparing", "analyze", "analyse", "study", "find", "check",
        "examine", "investigate", "profile", "evaluate", "assess", "explore",
        "look", "show", "what", "which", "how", "between", "across", "versus",
        "vs", "in", "for", "of", "the", "all", "and",
    }
)


def _strip_leading_stopwords(term: str) -> str:
    words = term.split()
    while words and words[0].lower() in _LEADING_STOPWORDS:
        words = words[1:]
    return " ".join(words)


@dataclass(frozen=True)
class ClarificationRequest:
    missing_fields: tuple[str, ...]
    question: str


@dataclass(frozen=True)
class RejectionNotice:
    unresolved_terms: tuple[str, ...]
    message: str


@dataclass(frozen=True)
class TokenCost:
    prompt_tokens: int
    completion_tokens: int
    usd_estimate: float | None = None


@dataclass(frozen=True)
class ExtractionResult:
    """Outcome of one extraction attempt: exactly one of intent,
    clarification, or rejection is populated."""

    skill_fingerprint: str
    extractor_id: str
    elapsed_ms: float
    intent: ResearchIntent | None = None
    clarification: ClarificationRequest | None = None
    rejection: RejectionNotice | None = None
    token_cost: TokenCost | None = None

    def __post_init__(self) -> None:
        populated = sum(x is not None for x in (self.intent, self.clarification, self.rejection))
        if populated != 1:
            raise ValueError(f"exactly one outcome must be populated, got {populated}")

    @property
    def outcome_kind(self) -> str:
        if self.intent is not None:
            return "intent"
        return "clarification" if self.clarification is not None else "rejection"


class UnparseableResponse(ValueError):
    """The model completion contains no parseable JSON object."""


class SchemaViolation(ValueError):
    """The model emitted JSON that does not validate against the schema."""

    def __init__(self, cause: IntentValidationError):
        self.violations = cause.violations
        super().__init__(str(cause))


@dataclass
class _Span:
    start: int
    end: int


@dataclass
class _SegmentScan:
    """Everything one query segment said, before cross-segment merging."""

    populations: list[str] = field(default_factory=list)
    chromosomes: list[str] = field(default_factory=list)
    regions: list[RegionEntry] = field(default_factory=list)
    contexts: list[ResearchContextEntry] = field(default_factory=list)
    focus_cue: Focus | None = None
    comparative: bool = False
    unresolved_pop_terms: list[str] = field(default_factory=list)
    unresolved_region_terms: list[str] = field(default_factory=list)

    @property
    def population_signal(self) -> bool:
        return bool(self.populations or self.unresolved_pop_terms)

    @property
    def locus_signal(self) -> bool:
        return bool(self.chromosomes or self.regions or self.unresolved_region_terms)


def split_merged_context(text: str) -> list[str]:
    segments = [seg.strip() for seg in re.split(rf"^{re.escape(CORRECTION_SEPARATOR)}$", text, flags=re.M)]
    return [seg for seg in segments if seg]


def merge_revision(original: str, correction: str) -> str:
    """Append a correction to an extraction context; later statements win on
    conflicting fields."""
    correction = correction.strip()
    if not correction:
        return original
    return f"{original}\n{CORRECTION_SEPARATOR}\n{correction}"


def _overlaps(start: int, end: int, spans: list[_Span]) -> bool:
    return any(start < s.end and end > s.start for s in spans)


def _consume(spans: list[_Span], start: int, end: int) -> None:
    spans.append(_Span(start, end))


def _parse_chromosome_list(text: str) -> list[str]:
    tokens: list[tuple[str, str]] = []
    for match in _CHROM_SPLIT.finditer(text):
        if match.group(1):
            tokens.append(("label", match.group(1).upper()))
        else:
            tokens.append(("sep", match.group(2).lower()))
    labels: list[str] = []
    i = 0
    while i < len(tokens):
        kind, value = tokens[i]
        if kind != "label":
            i += 1
            continue
        if (
            i + 2 < len(tokens)
            and tokens[i + 1][0] == "sep"
            and tokens[i + 1][1] in ("through", "to", "-", "–")
            and tokens[i + 2][0] == "label"
        ):
            lo, hi = value, tokens[i + 2][1]
            if lo.isdigit() and hi.isdigit() and int(lo) <= int(hi):
                labels.extend(str(n) for n in range(int(lo), int(hi) + 1))
            else:
                labels.extend([lo, hi])
            i += 3
        else:
            labels.append(value)
            i += 1
    out: list[str] = []
    for label in labels:
        label = str(int(label)) if label.isdigit() else label
        if label not in out and (label in ("X", "Y") or 1 <= int(label) <= 22):
            out.append(label)
    return out


def _scan_chromosomes(text: str, consumed: list[_Span]) -> list[str]:
    labels: list[str] = []
    for match in _CHROM_LIST.finditer(text):
        _consume(consumed, match.start(), match.end())
        labels.extend(_parse_chromosome_list(match.group(1)))
    for match in _CHROM_SHORT.finditer(text):
        if _overlaps(match.start(), match.end(), consumed):
            continue
        _consume(consumed, match.start(), match.end())
        lo = match.group(1).upper()
        hi = match.group(2).upper() if match.group(2) else None
        if hi and lo.isdigit() and hi.isdigit() and int(lo) <= int(hi):
            labels.extend(str(n) for n in range(int(lo), int(hi) + 1))
        else:
            labels.append(str(int(lo)) if lo.isdigit() else lo)
            if hi:
                labels.append(str(int(hi)) if hi.isdigit() else hi)
    seen: list[str] = []
    for label in labels:
        if label not in seen:
            seen.append(label)
    return seen


_PATTERN_CACHE: dict[str, list[tuple[re.Pattern, str, str]]] = {}


def _vocabulary_patterns(skills: SkillSet) -> list[tuple[re.Pattern, str, str]]:
    """(pattern, route, canonical term) for every phrase the SkillSet knows."""
    cached = _PATTERN_CACHE.get(skills.fingerprint)
    if cached is not None:
        return cached
    phrases: list[tuple[str, str, str]] = []
    for doc in skills.documents:
        for entry in doc.populations:
            phrases.append((entry.name, "population", entry.code))
        for syn in doc.synonyms:
            route = "population" if doc.kind.value == "populations" else "region"
            phrases.append((syn.term, route, syn.target))
        for region in doc.regions:
            phrases.append((region.name, "region", region.name))
    patterns = []
    for phrase, route, target in sorted(phrases, key=lambda p: (-len(p[0]), p[0])):
        words = [re.escape(w) for w in phrase.split()]
        if not words:
            continue
        patterns.append((re.compile(r"\b" + r"\s+".join(words) + r"\b", re.IGNORECASE), route, target))
    _PATTERN_CACHE[skills.fingerprint] = patterns
    return patterns


def _scan_segment(text: str, skills: SkillSet) -> _SegmentScan:
    text = _EXCLUSION_CLAUSE.sub("", text)
    scan = _SegmentScan()
    consumed: list[_Span] = []

    scan.chromosomes = _scan_chromosomes(text, consumed)

    for match in _ALL_SUPERS.finditer(text):
        _consume(consumed, match.start(), match.end())
        for code in skills.super_population_codes():
            if code not in scan.populations:
                scan.populations.append(code)

    # exact population codes: uppercase only, to keep 3-letter words inert
    for match in _CAPS_TOKEN.finditer(text):
        token = match.group(0)
        if _overlaps(match.start(), match.end(), consumed):
            continue
        if resolve_population(token, skills) == [token]:
            _consume(consumed, match.start(), match.end())
            if token not in scan.populations:
                scan.populations.append(token)

    for pattern, route, target in _vocabulary_patterns(skills):
        for match in pattern.finditer(text):
            if _overlaps(match.start(), match.end(), consumed):
                continue
            _consume(consumed, match.start(), match.end())
            if route == "population":
                codes = resolve_population(target, skills) or [target]
                if codes[0] not in scan.populations:
                    scan.populations.append(codes[0])
            else:
                entry = resolve_region(target, skills)
                if entry and all(r.name != entry.name for r in scan.regions):
                    scan.regions.append(entry)

    scan.contexts = resolve_context(text, skills)
    for context in scan.contexts:
        # matched keyword phrases are spoken-for text, not entity candidates
        for keyword in context.keywords:
            words = [re.escape(w) for w in keyword.split()]
            pattern = re.compile(r"\b" + r"\s+".join(words) + r"\b", re.IGNORECASE)
            for match in pattern.finditer(text):
                _consume(consumed, match.start(), match.end())
        for name in context.regions:
            entry = resolve_region(name, skills)
            if entry and all(r.name != entry.name for r in scan.regions):
                scan.regions.append(entry)

    _collect_candidates(text, skills, scan, consumed)

    for focus, pattern in _FOCUS_CUES:
        if pattern.search(text):
            scan.focus_cue = focus
            break
    if scan.focus_cue is None:
        context_focus = {c.focus for c in scan.contexts}
        if len(context_focus) == 1 and scan.contexts:
            scan.focus_cue = None if context_focus == {Focus.ALL_VARIANTS} else context_focus.pop()

    scan.comparative = bool(_COMPARATIVE.search(text))
    return scan


def _collect_candidates(text: str, skills: SkillSet, scan: _SegmentScan, consumed: list[_Span]) -> None:
    def try_population(term: str) -> bool:
        codes = resolve_population(term, skills)
        if codes:
            for code in codes:
                if code not in scan.populations:
                    scan.populations.append(code)
            return True
        return False

    def try_region(term: str) -> bool:
        entry = resolve_region(term, skills)
        if entry is None:
            return False
        if all(r.name != entry.name for r in scan.regions):
            scan.regions.append(entry)
        return True

    for match in _GENE_CANDIDATE.finditer(text):
        term = match.group(1)
        if _overlaps(match.start(1), match.end(1), consumed):
            continue
        if term.lower() in _GENERIC_CANDIDATES | _LEADING_STOPWORDS or not normalize_region_term(term):
            continue
        _consume(consumed, match.start(1), match.end(1))
        if not (try_region(term) or try_population(term)):
            scan.unresolved_region_terms.append(term)

    for match in _POP_CANDIDATE.finditer(text):
        capture = match.group(1)
        offset = match.start(1)
        for piece in re.split(r",|\band\b", capture):
            raw_term = piece.strip()
            if not raw_term:
                continue
            start = text.find(raw_term, offset, match.end(1))
            if start < 0:
                continue
            if _overlaps(start, start + len(raw_term), consumed):
                continue
            _consume(consumed, start, start + len(raw_term))
            term = _strip_leading_stopwords(raw_term)
            if not term or term.lower() in _GENERIC_CANDIDATES:
                continue
            if not normalize_population_term(term):
                continue
            if not (try_population(term) or try_region(term)):
                scan.unresolved_pop_terms.append(term)

    for match in _CAPS_TOKEN.finditer(text):
        token = match.group(0)
        if _overlaps(match.start(), match.end(), consumed) or token in _CAPS_STOPWORDS:
            continue
        _consume(consumed, match.start(), match.end())
        if not (try_population(token) or try_region(token)):
            scan.unresolved_pop_terms.append(token)


def _merge_scans(scans: list[_SegmentScan]) -> _SegmentScan:
    merged = scans[0]
    for scan in scans[1:]:
        merged = replace(merged)  # shallow copy; fields reassigned below
        if scan.population_signal:
            merged.populations = scan.populations
            merged.unresolved_pop_terms = scan.unresolved_pop_terms
        if scan.locus_signal:
            merged.chromosomes = scan.chromosomes
            merged.regions = scan.regions
            merged.unresolved_region_terms = scan.unresolved_region_terms
        if scan.contexts:
            merged.contexts = scan.contexts
        if scan.focus_cue is not None:
            merged.focus_cue = scan.focus_cue
        merged.comparative = merged.comparative or scan.comparative
    return merged


def _infer_analysis_type(scan: _SegmentScan) -> AnalysisType:
    if len(scan.populations) >= 2:
        return AnalysisType.POPULATION_COMPARISON if scan.comparative else AnalysisType.MULTI_POPULATION
    context_types = [c.analysis_type for c in scan.contexts]
    if context_types:
        return context_types[0]
    if scan.regions:
        return AnalysisType.REGION_ANALYSIS
    return AnalysisType.SINGLE_POPULATION


def extract_rule(query: str, skills: SkillSet) -> ExtractionResult:
    """Deterministic extraction: (query bytes, SkillSet fingerprint) -> result."""
    started = time.perf_counter()
    scans = [_scan_segment(segment, skills) for segment in split_merged_context(query)]
    if not scans:
        scans = [_SegmentScan()]
    scan = _merge_scans(scans)

    def finish(**outcome) -> ExtractionResult:
        return ExtractionResult(
            skill_fingerprint=skills.fingerprint,
            extractor_id=RULE_EXTRACTOR_ID,
            elapsed_ms=(time.perf_counter() - started) * 1000.0,
            **outcome,
        )

    unresolved = list(dict.fromkeys(scan.unresolved_region_terms + scan.unresolved_pop_terms))
    if unresolved:
        return finish(
            rejection=RejectionNotice(
                unresolved_terms=tuple(unresolved),
                message="these terms match nothing in the loaded domain knowledge: "
                + ", ".join(unresolved),
            )
        )

    missing = []
    if not scan.populations:
        missing.append("populations")
    if not scan.chromosomes and not scan.regions:
        missing.append("chromosomes_or_regions")
    if missing:
        questions = {
            "populations": "Which population(s) should the analysis cover?",
            "chromosomes_or_regions": "Which chromosomes or genomic regions should be analyzed?",
        }
        return finish(
            clarification=ClarificationRequest(
                missing_fields=tuple(missing),
                question=" ".join(questions[m] for m in missing),
            )
        )

    chromosomes = list(scan.chromosomes)
    if chromosomes and scan.regions:
        for region in scan.regions:
            if region.chromosome not in chromosomes:
                chromosomes.append(region.chromosome)

    raw = {
        "analysis_type": _infer_analysis_type(scan).value,
        "populations": scan.populations,
        "chromosomes": chromosomes or None,
        "regions": [
            {"name": r.name, "chromosome": r.chromosome, "start": r.start, "end": r.end}
            for r in scan.regions
        ]
        or None,
        "focus": (scan.focus_cue or Focus.ALL_VARIANTS).value,
    }
    return finish(intent=validate(raw, skills))


# ---------------------------------------------------------------------------
# LLM path


def _serialize_tables(skills: SkillSet) -> str:
    blocks: list[str] = []
    for doc in skills.documents:
        if doc.kind.value == "composer_guidelines":
            continue
        lines = [f"### {doc.id} ({doc.kind.value}, v{doc.version})"]
        if doc.populations:
            lines.append("| code | name | super_population | sample_count |")
            lines += [
                f"| {e.code} | {e.name} | {e.super_population} | {e.sample_count} |"
                for e in doc.populations
            ]
        if doc.regions:
            lines.append("| name | chromosome | start | end |")
            lines += [f"| {e.name} | {e.chromosome} | {e.start} | {e.end} |" for e in doc.regions]
        if doc.synonyms:
            lines.append("| term | target |")
            lines += [f"| {e.term} | {e.target} |" for e in doc.synonyms]
        if doc.contexts:
            lines.append("| topic | keywords | regions | analysis_type | focus |")
            lines += [
                f"| {e.topic} | {'; '.join(e.keywords)} | {';'.join(e.regions)} "
                f"| {e.analysis_type.value} | {e.focus.value} |"
                for e in doc.contexts
            ]
        if doc.sources:
            lines.append("| chromosome | url_template | full_size_bytes | total_rows | extraction |")
            lines += [
                f"| {e.chromosome} | {e.url_template} | {e.full_size_bytes} "
                f"| {e.total_rows} | {e.extraction} |"
                for e in doc.sources
            ]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


_SCHEMA_BLOCK = """\
ResearchIntent:
  analysis_type: single_population | population_comparison | multi_population | region_analysis
  populations:   list of population codes, e.g. ["EUR", "AFR"]
  chromosomes:   list of chromosome labels (1-22, X, Y) or null
  regions:       list of {name, chromosome, start, end} or null
  focus:         all_variants | deleterious | common | rare"""


def build_prompt(query: str, skills: SkillSet) -> str:
    """Byte-deterministic prompt: guidelines prose, tables for loaded
    documents only, the intent schema, the output contract, the query."""
    parts: list[str] = []
    prose = skills.guidelines_prose()
    if prose:
        parts.append(prose)
    tables = _serialize_tables(skills)
    if tables:
        parts.append("## Domain knowledge\n\n" + tables)
    parts.append("## Intent schema\n\n" + _SCHEMA_BLOCK)
    parts.append(
        "## Output format\n\nRespond with a single JSON object conforming to the "
        "schema. No prose, no code fences, no additional keys."
    )
    parts.append("## Query\n\n" + query)
    return "\n\n".join(parts)


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def parse_llm_response(text: str, skills: SkillSet) -> dict:
    """Extract the first JSON object from a completion and validate it.

    Returns the raw record; raises UnparseableResponse when no JSON object is
    present and SchemaViolation when validation fails. Callers decide whether
    those become scored misses (the harness) or surfaced faults (the
    conductor).
    """
    import json

    fenced = _FENCE.search(text)
    body = fenced.group(1) if fenced else text
    brace = body.find("{")
    if brace < 0:
        raise UnparseableResponse("completion contains no JSON object")
    try:
        record, _ = json.JSONDecoder().raw_decode(body[brace:])
    except json.JSONDecodeError as exc:
        raise UnparseableResponse(f"completion JSON does not parse: {exc}") from exc
    if not isinstance(record, dict):
        raise UnparseableResponse("completion JSON is not an object")
    try:
        validate(record, skills)
    except IntentValidationError as exc:
        raise SchemaViolation(exc) from exc
    return record


def extract_llm(query: str, skills: SkillSet, backend, transport=None) -> ExtractionResult:
    """Extraction through a chat-completion backend.

    ``backend`` is an LlmBackendConfig; ``transport`` overrides the HTTP
    transport (recorded-response fixtures, test doubles). Transport errors
    surface as llm_backend exceptions; schema problems as
    UnparseableResponse/SchemaViolation.
    """
    from . import llm_backend

    started = time.perf_counter()
    prompt = build_prompt(query, skills)
    body = llm_backend.request_body(prompt, query, backend.model)
    sender = transport if transport is not None else llm_backend.HttpTransport(backend)
    response = sender.send(body)
    try:
        content = response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise llm_backend.BackendUnavailable("response lacks choices[0].message.content") from None
    record = parse_llm_response(content, skills)
    usage = response.get("usage") or {}
    token_cost = None
    if usage:
        token_cost = TokenCost(
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            usd_estimate=usage.get("usd_estimate"),
        )
    return ExtractionResult(
        skill_fingerprint=skills.fingerprint,
        extractor_id=f"llm:{backend.model}",
        elapsed_ms=(time.perf_counter() - started) * 1000.0,
        intent=validate(record, skills),
        token_cost=token_cost,
    )
