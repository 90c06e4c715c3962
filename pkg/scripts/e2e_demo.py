#!/usr/bin/env python3
"""End-to-end demonstration: three queries through the full simulated pipeline.

Each query runs routing -> extraction -> plan -> provisioning -> deferred
generation -> execution with auto-approved gates, then prints the task
accounting and the phase-timing breakdown.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from intent2dag import deploy_sim, skills
from intent2dag.conductor import Conductor
from intent2dag.config import AppConfig

QUERIES = [
    "Compare HLA and BRCA1 variants in European, African, and East Asian populations",
    "Analyze BRCA2 and BRCA1 in British and Finnish populations",
    "Compare sickle cell, cystic fibrosis, and Alzheimer's variants across all five super-populations",
]


def main() -> int:
    library = skills.load_bundled_library()
    skillset = skills.select_skillset("S3", library)
    fixtures = deploy_sim.load_bundled_fixture()
    workdir = Path(tempfile.mkdtemp(prefix="i2d-demo-"))
    conductor = Conductor(AppConfig(), skillset, fixtures, journal_dir=workdir)

    for index, query in enumerate(QUERIES, start=1):
        session = conductor.run_pipeline(query, auto_approve=True)
        print(f"\nQ{index}: {query}")
        print(f"  phase: {session.phase.value}")
        print(f"  intent: {session.intent.as_record()}")
        print(f"  tasks: {len(session.dag.tasks)} total, {session.run_summary.failed} failed")
        print(f"  downloaded: {session.staging.total_est_bytes / 1e6:.1f} MB "
              f"of {session.staging.total_full_bytes / 1e9:.2f} GB "
              f"({session.staging.savings_fraction:.1%} saved)")
        for row in conductor.timing_report(session).rows:
            print(f"  {row.name:<20} {row.seconds:>9.2f}s  {row.fraction * 100:5.1f}%")
        print(f"  journal: {session.journal.path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
