"""intent2dag: natural-language research queries to reproducible workflow DAGs.

Three layers: expert-authored markdown Skills (knowledge), pluggable intent
extraction (semantic), and deterministic DAG generation with deferred,
measurement-calibrated parallelism (deterministic), orchestrated by a
human-in-the-loop conductor over a simulated cluster backend.
"""

__version__ = "0.1.0"
