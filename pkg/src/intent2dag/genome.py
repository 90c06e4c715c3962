"""Reference-genome constants and chromosome label helpers (GRCh37)."""

from __future__ import annotations

CHROMOSOME_LABELS: tuple[str, ...] = tuple(str(n) for n in range(1, 23)) + ("X", "Y")

# Chromosome sizes of the GRCh37 primary assembly, in base pairs.
GRCH37_CHROMOSOME_LENGTHS: dict[str, int] = {
    "1": 249_250_621,
    "2": 243_199_373,
    "3": 198_022_430,
    "4": 191_154_276,
    "5": 180_915_260,
    "6": 171_115_067,
    "7": 159_138_663,
    "8": 146_364_022,
    "9": 141_213_431,
    "10": 135_534_747,
    "11": 135_006_516,
    "12": 133_851_895,
    "13": 115_169_878,
    "14": 107_349_540,
    "15": 102_531_392,
    "16": 90_354_753,
    "17": 81_195_210,
    "18": 78_077_248,
    "19": 59_128_983,
    "20": 63_025_520,
    "21": 48_129_895,
    "22": 51_304_566,
    "X": 155_270_560,
    "Y": 59_373_566,
}

GENOME_BUILD = "GRCh37"

_LABEL_SET = frozenset(CHROMOSOME_LABELS)


def normalize_chromosome(label: str) -> str | None:
    """Map inputs like ``chr6``, ``06`` or ``x`` onto a canonical label, or None."""
    text = label.strip()
    if text.lower().startswith("chr"):
        text = text[3:]
    text = text.strip().upper()
    if text.isdigit():
        text = str(int(text))
    return text if text in _LABEL_SET else None


def chromosome_sort_key(label: str) -> tuple[int, int]:
    """Total order: 1..22 numerically, then X, then Y."""
    if label.isdigit():
        return (0, int(label))
    return (1, 0) if label == "X" else (2, 0)


def sort_chromosomes(labels) -> list[str]:
    return sorted(labels, key=chromosome_sort_key)
