#!/usr/bin/env python3
"""Deferred-generation study: advisory estimates vs simulated measurements.

Prints, per reference region: measured rows, advisory vs final parallelism,
full file size, downloaded bytes, and the per-region savings. Mirrors how the
deferred-generation impact is reported for the six showcase regions.
"""

from __future__ import annotations

from intent2dag import deploy_sim, skills
from intent2dag.composer import generate_dag, plan_advisory, refine_staging
from intent2dag.intent import validate

REGIONS = ["HLA", "BRCA1", "BRCA2", "CFTR", "HBB", "APOE"]


def main() -> int:
    library = skills.load_bundled_library()
    skillset = skills.select_skillset("S3", library)
    fixtures = deploy_sim.load_bundled_fixture()

    header = f"{'Region':<8}{'Chr':>4}{'Rows':>10}{'Adv J':>7}{'Final J':>9}{'Full':>10}{'Downloaded':>13}{'Saved':>8}"
    print(header)
    print("-" * len(header))
    total_full = total_down = 0
    for name in REGIONS:
        entry = skills.resolve_region(name, skillset)
        intent = validate(
            {
                "analysis_type": "region_analysis",
                "populations": ["EUR"],
                "chromosomes": None,
                "regions": [
                    {"name": entry.name, "chromosome": entry.chromosome,
                     "start": entry.start, "end": entry.end}
                ],
                "focus": "all_variants",
            },
            skillset,
        )
        plan = plan_advisory(intent, skillset)
        result = deploy_sim.provision(plan.staging, fixtures, vcpus=48)
        refined = refine_staging(plan.staging, result.measurements)
        dag = generate_dag(intent, result.measurements, skill_fingerprint=skillset.fingerprint)
        (label,) = dag.metadata["parallelism"]
        staged = result.staged[0]
        total_full += refined.total_full_bytes
        total_down += refined.total_est_bytes
        print(
            f"{name:<8}{entry.chromosome:>4}{staged.rows:>10,}"
            f"{plan.advisory_parallelism[label]:>7}{dag.metadata['parallelism'][label]:>9}"
            f"{refined.total_full_bytes / 1e9:>9.2f}G"
            f"{refined.total_est_bytes / 1e6:>12.1f}M"
            f"{refined.savings_fraction:>8.1%}"
        )
    print("-" * len(header))
    print(
        f"{'Total':<8}{'':>4}{'':>10}{'':>7}{'':>9}"
        f"{total_full / 1e9:>9.2f}G{total_down / 1e6:>12.1f}M"
        f"{1 - total_down / total_full:>8.1%}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
