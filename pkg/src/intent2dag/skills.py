"""Expert-authored markdown Skill documents: parsing, linting, selection.

A Skill file is front matter delimited by ``---`` lines (keys id, kind,
domain, version) followed by markdown whose typed content lives in pipe
tables with fixed, case-insensitive headers:

  populations        | code | name | super_population | sample_count |
                     | term | code |                       (synonyms)
  genomic_regions    | name | chromosome | start | end |
                     | term | name |                       (synonyms)
  research_contexts  | topic | keywords | regions | analysis_type | focus |
  data_sources       | chromosome | url_template | full_size_bytes | total_rows | extraction |
  composer_guidelines  prose only

Parsed documents and SkillSets are immutable; resolution is exact after
normalization, never fuzzy, so the knowledge layer stays deterministic.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .genome import normalize_chromosome
from .intent import AnalysisType, Focus


class SkillKind(str, Enum):
    POPULATIONS = "populations"
    GENOMIC_REGIONS = "genomic_regions"
    RESEARCH_CONTEXTS = "research_contexts"
    DATA_SOURCES = "data_sources"
    COMPOSER_GUIDELINES = "composer_guidelines"


SKILLSET_CONFIGS: dict[str, frozenset[SkillKind]] = {
    "S0": frozenset(),
    "S1": frozenset({SkillKind.POPULATIONS, SkillKind.GENOMIC_REGIONS}),
    "S2": frozenset({SkillKind.DATA_SOURCES, SkillKind.RESEARCH_CONTEXTS}),
    "S3": frozenset(SkillKind),
}


class SkillParseError(ValueError):
    """Base class for Skill grammar violations."""


class MissingFrontMatter(SkillParseError):
    pass


class UnknownKind(SkillParseError):
    pass


class MissingRequiredTable(SkillParseError):
    def __init__(self, kind: SkillKind, table: str):
        self.kind, self.table = kind, table
        super().__init__(f"{kind.value} document is missing required table {table!r}")


class MalformedRow(SkillParseError):
    def __init__(self, line: int, reason: str):
        self.line, self.reason = line, reason
        super().__init__(f"line {line}: {reason}")


class DuplicateKey(SkillParseError):
    def __init__(self, table: str, key: str):
        self.table, self.key = table, key
        super().__init__(f"duplicate key {key!r} in table {table!r}")


class MissingDocument(ValueError):
    def __init__(self, kind: SkillKind):
        self.kind = kind
        super().__init__(f"skill configuration requires a {kind.value} document")


@dataclass(frozen=True)
class PopulationEntry:
    code: str
    name: str
    super_population: str
    sample_count: int

    @property
    def is_super_population(self) -> bool:
        return self.super_population == self.code


@dataclass(frozen=True)
class SynonymEntry:
    term: str  # normalized
    target: str


@dataclass(frozen=True)
class RegionEntry:
    name: str
    chromosome: str
    start: int
    end: int
    build: str = "GRCh37"

    @property
    def span(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class ResearchContextEntry:
    topic: str
    keywords: tuple[str, ...]
    regions: tuple[str, ...]
    analysis_type: AnalysisType
    focus: Focus


@dataclass(frozen=True)
class DataSourceEntry:
    chromosome: str
    url_template: str
    full_size_bytes: int
    total_rows: int
    extraction: str  # full_download | region_extract

    @property
    def bytes_per_row(self) -> Fraction:
        return Fraction(self.full_size_bytes, self.total_rows)

    def url_for(self, chromosome: str) -> str:
        return self.url_template.replace("{chromosome}", chromosome)


@dataclass(frozen=True)
class SkillDocument:
    id: str
    domain: str
    version: str
    kind: SkillKind
    tables: Mapping[str, tuple]
    prose: str
    source: str = field(repr=False, default="")

    @property
    def populations(self) -> tuple[PopulationEntry, ...]:
        return self.tables.get("populations", ())

    @property
    def synonyms(self) -> tuple[SynonymEntry, ...]:
        return self.tables.get("synonyms", ())

    @property
    def regions(self) -> tuple[RegionEntry, ...]:
        return self.tables.get("regions", ())

    @property
    def contexts(self) -> tuple[ResearchContextEntry, ...]:
        return self.tables.get("contexts", ())

    @property
    def sources(self) -> tuple[DataSourceEntry, ...]:
        return self.tables.get("sources", ())


@dataclass(frozen=True)
class LintFinding:
    kind: str
    message: str
    documents: tuple[str, ...]


_POPULATION_SUFFIXES = frozenset({"population", "populations", "individuals", "ancestry"})
_REGION_SUFFIXES = frozenset({"gene", "genes", "region", "regions", "locus", "loci"})
_ARTICLES = frozenset({"the", "a", "an"})


def _normalize(term: str, suffixes: frozenset[str]) -> str:
    words = term.lower().split()
    while words and words[0] in _ARTICLES:
        words = words[1:]
    while words and words[-1] in suffixes:
        words = words[:-1]
    return " ".join(words)


def normalize_population_term(term: str) -> str:
    """Lowercase, collapse whitespace, strip articles and trailing
    population/individuals/ancestry qualifiers."""
    return _normalize(term, _POPULATION_SUFFIXES)


def normalize_region_term(term: str) -> str:
    return _normalize(term, _REGION_SUFFIXES)


def normalize_text(text: str) -> str:
    return " ".join(text.lower().split())


# ---------------------------------------------------------------------------
# Parsing

_HEADER_TABLES = {
    ("code", "name", "super_population", "sample_count"): "populations",
    ("term", "code"): "synonyms",
    ("name", "chromosome", "start", "end"): "regions",
    ("term", "name"): "synonyms",
    ("topic", "keywords", "regions", "analysis_type", "focus"): "contexts",
    ("chromosome", "url_template", "full_size_bytes", "total_rows", "extraction"): "sources",
}

_REQUIRED_TABLES = {
    SkillKind.POPULATIONS: ("populations", "synonyms"),
    SkillKind.GENOMIC_REGIONS: ("regions", "synonyms"),
    SkillKind.RESEARCH_CONTEXTS: ("contexts",),
    SkillKind.DATA_SOURCES: ("sources",),
    SkillKind.COMPOSER_GUIDELINES: (),
}

_SEMVER = re.compile(r"^\d+\.\d+\.\d+$")
_CODE = re.compile(r"^[A-Z]{3}$")


def _split_front_matter(source: str) -> tuple[dict[str, str], list[str], int]:
    lines = source.splitlines()
    idx = 0
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines) or lines[idx].strip() != "---":
        raise MissingFrontMatter("document does not start with a '---' front matter block")
    meta: dict[str, str] = {}
    idx += 1
    while idx < len(lines):
        line = lines[idx].strip()
        if line == "---":
            return meta, lines[idx + 1 :], idx + 2
        if line and ":" in line:
            key, _, value = line.partition(":")
            meta[key.strip().lower()] = value.strip()
        idx += 1
    raise MissingFrontMatter("front matter block is not closed by a '---' line")


def _split_cells(line: str) -> list[str]:
    return [cell.strip() for cell in line.strip().strip("|").split("|")]


def _is_separator(line: str) -> bool:
    body = line.strip()
    return body.startswith("|") and set(body) <= set("|-: ")


def _int_cell(value: str, line_no: int, what: str, minimum: int = 0) -> int:
    try:
        number = int(value.replace(",", "").replace("_", ""))
    except ValueError:
        raise MalformedRow(line_no, f"{what} must be an integer, got {value!r}") from None
    if number < minimum:
        raise MalformedRow(line_no, f"{what} must be >= {minimum}, got {number}")
    return number


def _iter_tables(lines: Sequence[str], offset: int):
    """Yield (table_name, header_cells, [(line_no, cells), ...]) per pipe table."""
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.strip().startswith("|") and i + 1 < len(lines) and _is_separator(lines[i + 1]):
            header = tuple(cell.lower() for cell in _split_cells(line))
            name = _HEADER_TABLES.get(header)
            rows: list[tuple[int, list[str]]] = []
            j = i + 2
            while j < len(lines) and lines[j].strip().startswith("|"):
                cells = _split_cells(lines[j])
                if any(cells):
                    rows.append((offset + j, cells))
                j += 1
            if name is not None:
                yield name, header, rows
            i = j
        else:
            i += 1


def _parse_populations(rows, seen: dict) -> list[PopulationEntry]:
    entries = []
    for line_no, cells in rows:
        if len(cells) != 4:
            raise MalformedRow(line_no, f"expected 4 columns, got {len(cells)}")
        code, name, super_pop, count = cells
        if not _CODE.match(code):
            raise MalformedRow(line_no, f"population code must match [A-Z]{{3}}, got {code!r}")
        if not _CODE.match(super_pop):
            raise MalformedRow(line_no, f"super_population must match [A-Z]{{3}}, got {super_pop!r}")
        if not name:
            raise MalformedRow(line_no, "population name is empty")
        if code in seen:
            raise DuplicateKey("populations", code)
        seen[code] = line_no
        entries.append(PopulationEntry(code, name, super_pop, _int_cell(count, line_no, "sample_count")))
    return entries


def _parse_synonyms(rows, kind: SkillKind, seen: dict) -> list[SynonymEntry]:
    suffix_normalize = (
        normalize_population_term if kind is SkillKind.POPULATIONS else normalize_region_term
    )
    entries = []
    for line_no, cells in rows:
        if len(cells) != 2:
            raise MalformedRow(line_no, f"expected 2 columns, got {len(cells)}")
        term, target = cells
        normalized = suffix_normalize(term)
        if not normalized:
            raise MalformedRow(line_no, f"synonym term {term!r} normalizes to nothing")
        if not target:
            raise MalformedRow(line_no, "synonym target is empty")
        if normalized in seen:
            raise DuplicateKey("synonyms", normalized)
        seen[normalized] = line_no
        entries.append(SynonymEntry(normalized, target))
    return entries


def _parse_regions(rows, seen: dict) -> list[RegionEntry]:
    entries = []
    for line_no, cells in rows:
        if len(cells) != 4:
            raise MalformedRow(line_no, f"expected 4 columns, got {len(cells)}")
        name, chrom_raw, start_raw, end_raw = cells
        if not name:
            raise MalformedRow(line_no, "region name is empty")
        chrom = normalize_chromosome(chrom_raw)
        if chrom is None:
            raise MalformedRow(line_no, f"bad chromosome label {chrom_raw!r}")
        start = _int_cell(start_raw, line_no, "start", minimum=1)
        end = _int_cell(end_raw, line_no, "end", minimum=1)
        if end <= start:
            raise MalformedRow(line_no, f"need end > start, got [{start}, {end}]")
        if name.lower() in seen:
            raise DuplicateKey("regions", name)
        seen[name.lower()] = line_no
        entries.append(RegionEntry(name, chrom, start, end))
    return entries


def _parse_contexts(rows, seen: dict) -> list[ResearchContextEntry]:
    entries = []
    for line_no, cells in rows:
        if len(cells) != 5:
            raise MalformedRow(line_no, f"expected 5 columns, got {len(cells)}")
        topic, keywords_raw, regions_raw, at_raw, focus_raw = cells
        if not topic:
            raise MalformedRow(line_no, "context topic is empty")
        if topic in seen:
            raise DuplicateKey("contexts", topic)
        seen[topic] = line_no
        keywords = tuple(normalize_text(k) for k in keywords_raw.split(";") if k.strip())
        if not keywords:
            raise MalformedRow(line_no, f"context {topic!r} has no keywords")
        regions = tuple(r.strip() for r in regions_raw.split(";") if r.strip())
        try:
            analysis_type = AnalysisType(at_raw)
        except ValueError:
            raise MalformedRow(line_no, f"bad analysis_type {at_raw!r}") from None
        try:
            focus = Focus(focus_raw)
        except ValueError:
            raise MalformedRow(line_no, f"bad focus {focus_raw!r}") from None
        entries.append(ResearchContextEntry(topic, keywords, regions, analysis_type, focus))
    return entries


def _parse_sources(rows, seen: dict) -> list[DataSourceEntry]:
    entries = []
    for line_no, cells in rows:
        if len(cells) != 5:
            raise MalformedRow(line_no, f"expected 5 columns, got {len(cells)}")
        chrom_raw, url, size_raw, rows_raw, extraction = cells
        chrom = normalize_chromosome(chrom_raw)
        if chrom is None:
            raise MalformedRow(line_no, f"bad chromosome label {chrom_raw!r}")
        if chrom in seen:
            raise DuplicateKey("sources", chrom)
        seen[chrom] = line_no
        if "{chromosome}" not in url:
            raise MalformedRow(line_no, "url_template lacks the {chromosome} placeholder")
        if extraction not in ("full_download", "region_extract"):
            raise MalformedRow(line_no, f"bad extraction mode {extraction!r}")
        entries.append(
            DataSourceEntry(
                chromosome=chrom,
                url_template=url,
                full_size_bytes=_int_cell(size_raw, line_no, "full_size_bytes", minimum=1),
                total_rows=_int_cell(rows_raw, line_no, "total_rows", minimum=1),
                extraction=extraction,
            )
        )
    return entries


def parse_skill(source: str) -> SkillDocument:
    """Parse one markdown Skill. Total over the grammar: every table row is
    typed and checked, or the document is rejected with a specific error."""
    meta, body_lines, body_offset = _split_front_matter(source)
    for key in ("id", "kind", "domain", "version"):
        if not meta.get(key):
            raise MissingFrontMatter(f"front matter is missing {key!r}")
    if not _SEMVER.match(meta["version"]):
        raise MissingFrontMatter(f"version must be MAJOR.MINOR.PATCH, got {meta['version']!r}")
    try:
        kind = SkillKind(meta["kind"])
    except ValueError:
        raise UnknownKind(f"unknown skill kind {meta['kind']!r}") from None

    tables: dict[str, tuple] = {}
    keys_seen: dict[str, dict] = {}
    for name, _header, rows in _iter_tables(body_lines, body_offset):
        seen = keys_seen.setdefault(name, {})
        if name == "populations":
            parsed = _parse_populations(rows, seen)
        elif name == "synonyms":
            parsed = _parse_synonyms(rows, kind, seen)
        elif name == "regions":
            parsed = _parse_regions(rows, seen)
        elif name == "contexts":
            parsed = _parse_contexts(rows, seen)
        else:
            parsed = _parse_sources(rows, seen)
        tables[name] = tables.get(name, ()) + tuple(parsed)

    for required in _REQUIRED_TABLES[kind]:
        if not tables.get(required):
            raise MissingRequiredTable(kind, required)

    if kind is SkillKind.POPULATIONS:
        codes = {e.code for e in tables["populations"]}
        supers = {e.code for e in tables["populations"] if e.is_super_population}
        for entry in tables["populations"]:
            if entry.super_population not in supers:
                raise MalformedRow(
                    keys_seen["populations"][entry.code],
                    f"super_population {entry.super_population!r} is not defined "
                    "as a super-population row",
                )
        for syn in tables["synonyms"]:
            if syn.target not in codes:
                raise MalformedRow(
                    keys_seen["synonyms"][syn.term],
                    f"synonym target {syn.target!r} is not a population code in this document",
                )
    if kind is SkillKind.GENOMIC_REGIONS:
        names = {e.name.lower() for e in tables["regions"]}
        for syn in tables["synonyms"]:
            if syn.target.lower() not in names:
                raise MalformedRow(
                    keys_seen["synonyms"][syn.term],
                    f"synonym target {syn.target!r} is not a region in this document",
                )

    return SkillDocument(
        id=meta["id"],
        domain=meta["domain"],
        version=meta["version"],
        kind=kind,
        tables=tables,
        prose="\n".join(body_lines).strip(),
        source=source,
    )


# ---------------------------------------------------------------------------
# Library linting and SkillSet selection


def lint_library(documents: Sequence[SkillDocument]) -> list[LintFinding]:
    """Cross-document consistency findings; an empty list means clean."""
    findings: list[LintFinding] = []

    by_id: dict[str, list[str]] = {}
    for doc in documents:
        by_id.setdefault(doc.id, []).append(doc.id)
    for doc_id, hits in sorted(by_id.items()):
        if len(hits) > 1:
            findings.append(
                LintFinding("duplicate_document_id", f"document id {doc_id!r} appears {len(hits)} times", (doc_id,))
            )

    # synonym collisions, per namespace (population terms vs region terms)
    for namespace, kind in (("population", SkillKind.POPULATIONS), ("region", SkillKind.GENOMIC_REGIONS)):
        targets: dict[str, dict[str, list[str]]] = {}
        for doc in documents:
            if doc.kind is not kind:
                continue
            for syn in doc.synonyms:
                targets.setdefault(syn.term, {}).setdefault(syn.target, []).append(doc.id)
        for term, by_target in sorted(targets.items()):
            if len(by_target) > 1:
                docs = tuple(sorted({d for ids in by_target.values() for d in ids}))
                findings.append(
                    LintFinding(
                        "synonym_collision",
                        f"{namespace} synonym {term!r} maps to {sorted(by_target)}",
                        docs,
                    )
                )

    region_names = {
        r.name.lower() for doc in documents if doc.kind is SkillKind.GENOMIC_REGIONS for r in doc.regions
    }
    region_chromosomes = {
        r.chromosome for doc in documents if doc.kind is SkillKind.GENOMIC_REGIONS for r in doc.regions
    }
    for doc in documents:
        if doc.kind is not SkillKind.RESEARCH_CONTEXTS:
            continue
        for context in doc.contexts:
            for name in context.regions:
                if name.lower() not in region_names:
                    findings.append(
                        LintFinding(
                            "dangling_region_reference",
                            f"context {context.topic!r} references unknown region {name!r}",
                            (doc.id,),
                        )
                    )

    source_docs = [doc for doc in documents if doc.kind is SkillKind.DATA_SOURCES]
    if source_docs:
        covered = {s.chromosome for doc in source_docs for s in doc.sources}
        for chrom in sorted(region_chromosomes - covered):
            findings.append(
                LintFinding(
                    "missing_data_source",
                    f"chromosome {chrom} has regions but no data source entry",
                    tuple(sorted(d.id for d in source_docs)),
                )
            )
    return findings


def library_fingerprint(documents: Iterable[SkillDocument]) -> str:
    digest = hashlib.sha256()
    for doc in sorted(documents, key=lambda d: (d.kind.value, d.id)):
        digest.update(f"{doc.kind.value}\n{doc.id}\n{doc.version}\n".encode())
        digest.update(hashlib.sha256(doc.source.encode("utf-8")).hexdigest().encode())
        digest.update(b"\n")
    return digest.hexdigest()


@dataclass(frozen=True)
class SkillSet:
    """The documents active under one ablation configuration (S0..S3)."""

    config: str
    documents: tuple[SkillDocument, ...]
    fingerprint: str

    def has_kind(self, kind: SkillKind) -> bool:
        return any(doc.kind is kind for doc in self.documents)

    def documents_of(self, kind: SkillKind) -> tuple[SkillDocument, ...]:
        return tuple(doc for doc in self.documents if doc.kind is kind)

    @cached_property
    def _population_index(self) -> dict[str, PopulationEntry]:
        return {
            e.code: e
            for doc in self.documents_of(SkillKind.POPULATIONS)
            for e in doc.populations
        }

    @cached_property
    def _population_terms(self) -> dict[str, str]:
        terms: dict[str, str] = {}
        for doc in self.documents_of(SkillKind.POPULATIONS):
            for entry in doc.populations:
                terms.setdefault(normalize_population_term(entry.name), entry.code)
            for syn in doc.synonyms:
                terms.setdefault(syn.term, syn.target)
        return terms

    @cached_property
    def _region_index(self) -> dict[str, RegionEntry]:
        return {
            e.name.lower(): e
            for doc in self.documents_of(SkillKind.GENOMIC_REGIONS)
            for e in doc.regions
        }

    @cached_property
    def _region_terms(self) -> dict[str, str]:
        terms: dict[str, str] = {}
        for doc in self.documents_of(SkillKind.GENOMIC_REGIONS):
            for entry in doc.regions:
                terms.setdefault(normalize_region_term(entry.name), entry.name)
            for syn in doc.synonyms:
                terms.setdefault(syn.term, syn.target)
        return terms

    @cached_property
    def contexts(self) -> tuple[ResearchContextEntry, ...]:
        return tuple(
            c for doc in self.documents_of(SkillKind.RESEARCH_CONTEXTS) for c in doc.contexts
        )

    @cached_property
    def sources(self) -> dict[str, DataSourceEntry]:
        return {
            s.chromosome: s
            for doc in self.documents_of(SkillKind.DATA_SOURCES)
            for s in doc.sources
        }

    def population_codes(self) -> frozenset[str]:
        return frozenset(self._population_index)

    def super_population_codes(self) -> tuple[str, ...]:
        return tuple(
            sorted(e.code for e in self._population_index.values() if e.is_super_population)
        )

    def population_entry(self, code: str) -> PopulationEntry | None:
        return self._population_index.get(code)

    def region_entries(self) -> tuple[RegionEntry, ...]:
        return tuple(sorted(self._region_index.values(), key=lambda r: r.name))

    def guidelines_prose(self) -> str:
        return "\n\n".join(
            doc.prose for doc in self.documents_of(SkillKind.COMPOSER_GUIDELINES)
        )


def select_skillset(config: str, library: Sequence[SkillDocument]) -> SkillSet:
    """Assemble the SkillSet for one ablation configuration.

    S0 selects nothing, S1 the vocabulary documents, S2 the strategy
    documents, S3 all five kinds. The caller is expected to have linted the
    library; this only enforces presence of the required kinds.
    """
    try:
        kinds = SKILLSET_CONFIGS[config]
    except KeyError:
        raise ValueError(f"unknown skill configuration {config!r}; expected S0..S3") from None
    present = {doc.kind for doc in library}
    for kind in sorted(kinds, key=lambda k: k.value):
        if kind not in present:
            raise MissingDocument(kind)
    documents = tuple(
        sorted(
            (doc for doc in library if doc.kind in kinds),
            key=lambda d: (d.kind.value, d.id),
        )
    )
    return SkillSet(config=config, documents=documents, fingerprint=library_fingerprint(documents))


def resolve_population(term: str, skills: SkillSet) -> list[str]:
    """Resolve a natural-language population term to codes.

    Exact code match returns itself; otherwise name/synonym lookup after
    normalization. A miss is an empty list, never an error.
    """
    folded = term.strip().upper()
    if folded in skills._population_index:
        return [folded]
    code = skills._population_terms.get(normalize_population_term(term))
    return [code] if code else []


def resolve_region(term: str, skills: SkillSet) -> RegionEntry | None:
    normalized = normalize_region_term(term)
    entry = skills._region_index.get(normalized)
    if entry is not None:
        return entry
    name = skills._region_terms.get(normalized)
    return skills._region_index.get(name.lower()) if name else None


def resolve_context(query: str, skills: SkillSet) -> list[ResearchContextEntry]:
    """Contexts whose keyword phrases occur in the query (case-insensitive
    substring over normalized text), longest matched phrase first."""
    text = normalize_text(query)
    hits: list[tuple[int, str, ResearchContextEntry]] = []
    for context in skills.contexts:
        matched = [k for k in context.keywords if k in text]
        if matched:
            hits.append((max(len(k) for k in matched), context.topic, context))
    hits.sort(key=lambda h: (-h[0], h[1]))
    return [context for _, _, context in hits]


# ---------------------------------------------------------------------------
# Library IO


def load_library(directory: Path) -> list[SkillDocument]:
    """Parse every ``*.md`` file in a directory, sorted by filename."""
    documents = []
    for path in sorted(Path(directory).glob("*.md")):
        try:
            documents.append(parse_skill(path.read_text(encoding="utf-8")))
        except SkillParseError as exc:
            raise SkillParseError(f"{path.name}: {exc}") from exc
    return documents


def bundled_skills_dir() -> Path:
    from importlib.resources import files

    return Path(str(files("intent2dag").joinpath("data/skills")))


def load_bundled_library() -> list[SkillDocument]:
    return load_library(bundled_skills_dir())
