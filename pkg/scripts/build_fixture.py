#!/usr/bin/env python3
"""Regenerate the bundled chromosome fixture dataset.

Each chromosome gets a row-density histogram: one exact bin per named region
(so simulated extraction reproduces the measured row counts), with the
remaining rows spread over the gaps proportionally to their base-pair length.
Writes src/intent2dag/data/fixtures/thousand_genomes.json.
"""

from __future__ import annotations

import json
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
OUT = REPO / "src" / "intent2dag" / "data" / "fixtures" / "thousand_genomes.json"

GRCH37_LENGTHS = {
    "1": 249_250_621,
    "2": 243_199_373,
    "3": 198_022_430,
    "4": 191_154_276,
    "5": 180_915_260,
    "6": 171_115_067,
    "7": 159_138_663,
    "11": 135_006_516,
    "13": 115_169_878,
    "17": 81_195_210,
    "19": 59_128_983,
    "21": 48_129_895,
    "22": 51_304_566,
}

# chromosome -> (full_size_bytes, total_rows); must match the data-sources Skill
SIZES = {
    "1": (4_200_000_000, 433_000),
    "2": (4_000_000_000, 412_000),
    "3": (3_300_000_000, 340_000),
    "4": (3_200_000_000, 330_000),
    "5": (3_000_000_000, 309_000),
    "6": (13_000_000_000, 1_374_935),
    "7": (2_600_000_000, 265_523),
    "11": (2_100_000_000, 204_002),
    "13": (1_600_000_000, 166_806),
    "17": (1_300_000_000, 133_896),
    "19": (1_000_000_000, 102_722),
    "21": (900_000_000, 92_800),
    "22": (1_100_000_000, 113_400),
}

# chromosome -> [(start, end, rows)] exact bins for named regions
REGION_BINS = {
    "6": [(28_477_797, 33_448_354, 166_052)],   # HLA
    "7": [(117_120_017, 117_308_719, 4_391)],   # CFTR
    "11": [(5_246_696, 5_248_301, 136)],        # HBB
    "13": [(32_889_611, 32_973_805, 2_502)],    # BRCA2
    "17": [(7_571_720, 7_590_868, 823),         # TP53
           (41_196_312, 41_277_500, 2_369)],    # BRCA1
    "19": [(45_409_039, 45_412_650, 113)],      # APOE
    "22": [(42_522_501, 42_526_883, 452)],      # CYP2D6
}


def build_bins(chrom: str) -> list[list[int]]:
    length = GRCH37_LENGTHS[chrom]
    _, total_rows = SIZES[chrom]
    fixed = sorted(REGION_BINS.get(chrom, []))
    remaining = total_rows - sum(rows for _, _, rows in fixed)
    assert remaining >= 0, chrom

    gaps: list[tuple[int, int]] = []
    cursor = 1
    for start, end, _ in fixed:
        if cursor < start:
            gaps.append((cursor, start - 1))
        cursor = end + 1
    if cursor <= length:
        gaps.append((cursor, length))

    gap_bp = sum(end - start + 1 for start, end in gaps)
    bins: list[list[int]] = []
    assigned = 0
    for i, (start, end) in enumerate(gaps):
        if i == len(gaps) - 1:
            rows = remaining - assigned
        else:
            rows = round(remaining * (end - start + 1) / gap_bp)
            assigned += rows
        bins.append([start, end, rows])
    bins.extend([start, end, rows] for start, end, rows in fixed)
    bins.sort()
    assert sum(b[2] for b in bins) == total_rows, chrom
    return bins


def main() -> None:
    chromosomes = {}
    for chrom in sorted(SIZES, key=int):
        size, rows = SIZES[chrom]
        chromosomes[chrom] = {
            "full_size_bytes": size,
            "total_rows": rows,
            "bins": build_bins(chrom),
        }
    dataset = {
        "version": "1",
        "provenance": (
            "Synthetic density fixture modeled on the 1000 Genomes phase 3 "
            "genotype release. Named-region bins carry measured row counts; "
            "remaining rows are spread uniformly per base pair. Regenerate "
            "with scripts/build_fixture.py."
        ),
        "chromosomes": chromosomes,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(dataset, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
