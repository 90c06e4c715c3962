#!/usr/bin/env python3
"""Regenerate the bundled recorded LLM responses.

The offline demo (`run --extractor llm --recorded <dir>`) and the backend
tests replay canned chat-completion bodies keyed by request fingerprint.
Contents are the rule extractor's intents for a few showcase queries, so the
recorded path demonstrates the wire format without a live backend.
"""

from __future__ import annotations

import json
from pathlib import Path

from intent2dag import skills
from intent2dag.extraction import build_prompt, extract_rule
from intent2dag.llm_backend import RecordedTransport, completion_response, request_body

REPO = Path(__file__).resolve().parents[1]
OUT = REPO / "src" / "intent2dag" / "data" / "recorded"

QUERIES = [
    "Compare EUR and AFR on chromosome 21",
    "Compare HLA and BRCA1 variants in European, African, and East Asian populations",
    "Analyze BRCA2 and BRCA1 in British and Finnish populations",
    "Compare sickle cell, cystic fibrosis, and Alzheimer's variants across all five super-populations",
]

MODEL = "demo-model"


def main() -> None:
    library = skills.load_bundled_library()
    skillset = skills.select_skillset("S3", library)
    transport = RecordedTransport(OUT)
    for query in QUERIES:
        result = extract_rule(query, skillset)
        assert result.intent is not None, query
        content = json.dumps(result.intent.as_record())
        body = request_body(build_prompt(query, skillset), query, MODEL)
        path = transport.record(
            body, completion_response(content, prompt_tokens=len(body["messages"][0]["content"]) // 4,
                                      completion_tokens=len(content) // 4)
        )
        print(f"recorded {path.name} for {query!r}")


if __name__ == "__main__":
    main()
