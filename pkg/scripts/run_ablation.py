#!/usr/bin/env python3
"""Run the Skill-ablation study on the bundled dataset and print the matrix.

Usage: python scripts/run_ablation.py [--configs S0,S1,S2,S3] [--format table|csv|json]
"""

from __future__ import annotations

import argparse
import sys

from intent2dag import evalharness, skills


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--configs", default="S0,S1,S2,S3")
    parser.add_argument("--format", default="table", choices=["table", "csv", "json"])
    args = parser.parse_args()

    library = skills.load_bundled_library()
    skillset = skills.select_skillset("S3", library)
    cases = evalharness.load_dataset(evalharness.bundled_dataset_path(), skillset)
    report = evalharness.run_ablation(cases, args.configs.split(","), library)
    fmt = {"table": "text-table", "csv": "csv", "json": "json"}[args.format]
    sys.stdout.write(evalharness.render_report(report, fmt).decode("utf-8"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
