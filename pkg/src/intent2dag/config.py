"""Dataclass configuration for every tunable in the pipeline.

Values come from, in increasing precedence: built-in defaults, a TOML config
file, command-line flags. Environment variables are reserved for secrets and
endpoints (the LLM backend) and never override file-pinned run parameters.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class CalibrationConfig:
    """Parallelism calibration knobs.

    ``rows_per_task_target`` is the default row volume one individuals task
    should absorb; 3257 reproduces the reference calibration point
    166,052 rows -> J = 51. When ``max_parallelism`` is set it overrides the
    measured-vCPU cap; when None the cap falls back to measured vCPUs.
    """

    rows_per_task_target: int = 3257
    max_parallelism: int | None = 64
    advisory_cap: int = 100


@dataclass(frozen=True)
class StagingConfig:
    # Floor on extract estimates models index/header overhead of region pulls.
    min_extract_bytes: int = 1_000_000
    storage_multiplier: int = 3
    # Fallbacks when no data-sources knowledge is loaded (degraded plans).
    default_full_size_bytes: int = 1_000_000_000
    default_total_rows: int = 100_000


@dataclass(frozen=True)
class GeneratorConfig:
    generator_version: str = "1.0.0"
    cpu_request: int = 1000  # millicores per task
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)


@dataclass(frozen=True)
class ProvisionConfig:
    bandwidth_bytes_per_s: float = 100e6
    namespace_overhead_s: float = 30.0
    vcpus: int = 48


@dataclass(frozen=True)
class ExecutorConfig:
    throughput_rows_per_s: float = 500.0
    merge_rows_per_s: float = 50_000.0
    sifting_rows_per_s: float = 100_000.0
    analysis_rows_per_s: float = 100_000.0
    task_overhead_s: float = 2.0
    retry_limit: int = 3
    seed: int = 0


@dataclass(frozen=True)
class SentinelConfig:
    repeated_failure_threshold: int = 3
    stall_factor: float = 5.0
    stall_absolute_s: float = 120.0


@dataclass(frozen=True)
class ConductorConfig:
    skill_config: str = "S3"
    clarification_rounds_max: int = 3
    domain: str = "1000-genomes"
    # Keyword routing table; vocabulary hits against the domain's Skills are
    # the fallback route.
    routing_keywords: tuple[str, ...] = (
        "population",
        "populations",
        "chromosome",
        "chromosomes",
        "variant",
        "variants",
        "gene",
        "genes",
        "genome",
        "genomic",
        "mutation",
        "mutations",
        "allele",
        "ancestry",
        "vcf",
    )


@dataclass(frozen=True)
class AppConfig:
    """Bundle of all component configs plus data-file overrides."""

    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    staging: StagingConfig = field(default_factory=StagingConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    provision: ProvisionConfig = field(default_factory=ProvisionConfig)
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    sentinel: SentinelConfig = field(default_factory=SentinelConfig)
    conductor: ConductorConfig = field(default_factory=ConductorConfig)
    skills_dir: Path | None = None
    fixture_path: Path | None = None
    workspace: Path = Path(".i2d")

    def __post_init__(self) -> None:
        # generator carries its own calibration copy; keep them in sync
        object.__setattr__(
            self, "generator", replace(self.generator, calibration=self.calibration)
        )


_SECTION_TYPES = {
    "calibration": CalibrationConfig,
    "staging": StagingConfig,
    "generator": GeneratorConfig,
    "provision": ProvisionConfig,
    "executor": ExecutorConfig,
    "sentinel": SentinelConfig,
    "conductor": ConductorConfig,
}


class ConfigError(ValueError):
    """Raised for unknown keys or sections in a config file."""


def _build_section(cls: type, values: Mapping[str, Any], section: str) -> Any:
    known = {f.name: f for f in fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        if key == "calibration":
            continue  # nested; reconstructed in AppConfig.__post_init__
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path: Path | None = None, overrides: Mapping[str, Any] | None = None) -> AppConfig:
    """Load an AppConfig from a TOML file, then apply flat overrides.

    Overrides use dotted keys, e.g. ``{"provision.vcpus": 96}``.
    """
    sections: dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        for name, values in raw.items():
            if name in ("skills_dir", "fixture_path", "workspace"):
                sections[name] = Path(values)
                continue
            cls = _SECTION_TYPES.get(name)
            if cls is None:
                raise ConfigError(f"unknown config section [{name}]")
            sections[name] = _build_section(cls, values, name)
    cfg = AppConfig(**sections)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def apply_overrides(cfg: AppConfig, overrides: Mapping[str, Any]) -> AppConfig:
    updates: dict[str, Any] = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        if "." in dotted:
            section, key = dotted.split(".", 1)
            current = updates.get(section, getattr(cfg, section))
            updates[section] = replace(current, **{key: value})
        else:
            updates[dotted] = value
    return replace(cfg, **updates) if updates else cfg
