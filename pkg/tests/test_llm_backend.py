"""LLM backend transport, retries, recorded fixtures, and extract_llm."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from intent2dag.extraction import build_prompt, extract_llm
from intent2dag.intent import compare, validate
from intent2dag.llm_backend import (
    AuthFailure,
    BackendUnavailable,
    HttpTransport,
    LlmBackendConfig,
    RecordedTransport,
    completion_response,
    request_body,
    request_fingerprint,
)

Q1 = "Compare EUR and AFR on chromosome 21"
Q1_GOLD = {
    "analysis_type": "population_comparison",
    "populations": ["AFR", "EUR"],
    "chromosomes": ["21"],
    "regions": None,
    "focus": "all_variants",
}


@pytest.fixture()
def backend_server():
    """Tiny scripted HTTP server; each test seeds a response queue."""
    script: list[tuple[int, dict | None]] = []
    requests: list[dict] = []

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            requests.append(json.loads(self.rfile.read(length)))
            status, body = script.pop(0) if script else (200, completion_response("{}"))
            payload = json.dumps(body or {}).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server, script, requests
    server.shutdown()


def _config(server, retries=2) -> LlmBackendConfig:
    host, port = server.server_address
    return LlmBackendConfig(
        endpoint_url=f"http://{host}:{port}/v1/chat/completions",
        model="test-model",
        timeout_s=5.0,
        max_retries=retries,
    )


def test_recorded_double_reaches_full_match(s3, tmp_path):
    """A canned Q1 completion round-trips to an intent scoring 5/5 fields."""
    transport = RecordedTransport(tmp_path)
    body = request_body(build_prompt(Q1, s3), Q1, "test-model")
    transport.record(body, completion_response(json.dumps(Q1_GOLD), 120, 40))

    config = LlmBackendConfig(endpoint_url="https://unused.example", model="test-model")
    result = extract_llm(Q1, s3, config, transport=transport)
    assert result.intent is not None
    assert compare(result.intent, validate(Q1_GOLD, s3)).full_match
    assert result.extractor_id == "llm:test-model"
    assert result.elapsed_ms >= 0.0
    assert result.token_cost is not None and result.token_cost.prompt_tokens == 120


def test_recorded_transport_misses_loudly(tmp_path):
    transport = RecordedTransport(tmp_path)
    with pytest.raises(BackendUnavailable) as exc:
        transport.send({"model": "m", "messages": [], "temperature": 0})
    assert "recorded" in str(exc.value)


def test_request_fingerprint_is_stable_and_sensitive():
    body = request_body("system", "query", "m")
    assert request_fingerprint(body) == request_fingerprint(json.loads(json.dumps(body)))
    assert request_fingerprint(body) != request_fingerprint(request_body("system", "other", "m"))


def test_http_transport_sends_chat_completion_shape(backend_server, s3):
    server, script, requests = backend_server
    script.append((200, completion_response(json.dumps(Q1_GOLD))))
    result = extract_llm(Q1, s3, _config(server))
    assert result.intent is not None
    sent = requests[0]
    assert sent["model"] == "test-model"
    assert sent["temperature"] == 0
    assert [m["role"] for m in sent["messages"]] == ["system", "user"]
    assert sent["messages"][1]["content"] == Q1


def test_http_401_is_auth_failure(backend_server):
    server, script, _ = backend_server
    script.append((401, {"error": "bad key"}))
    with pytest.raises(AuthFailure):
        HttpTransport(_config(server)).send({"model": "m"})


def test_http_5xx_retries_then_succeeds(backend_server):
    server, script, requests = backend_server
    script.extend([(500, {"error": "boom"}), (200, completion_response("ok"))])
    naps: list[float] = []
    transport = HttpTransport(_config(server), sleeper=naps.append)
    response = transport.send({"model": "m"})
    assert response["choices"][0]["message"]["content"] == "ok"
    assert len(requests) == 2
    assert naps == [0.5]  # exponential backoff starts at 0.5s


def test_http_retries_exhausted(backend_server):
    server, script, _ = backend_server
    script.extend([(503, None)] * 3)
    transport = HttpTransport(_config(server, retries=2), sleeper=lambda _: None)
    with pytest.raises(BackendUnavailable):
        transport.send({"model": "m"})


def test_http_4xx_fails_without_retry(backend_server):
    server, script, requests = backend_server
    script.append((404, {"error": "nope"}))
    with pytest.raises(BackendUnavailable):
        HttpTransport(_config(server), sleeper=lambda _: None).send({"model": "m"})
    assert len(requests) == 1


def test_connection_refused_is_backend_unavailable():
    config = LlmBackendConfig(
        endpoint_url="http://127.0.0.1:9", model="m", timeout_s=0.2, max_retries=0
    )
    with pytest.raises(BackendUnavailable):
        HttpTransport(config, sleeper=lambda _: None).send({"model": "m"})


def test_bundled_recorded_demo_responses_cover_e2e_queries(s3):
    """The committed demo fixtures answer the showcase queries offline."""
    from importlib.resources import files

    recorded_dir = files("intent2dag").joinpath("data/recorded")
    transport = RecordedTransport(recorded_dir)
    config = LlmBackendConfig(endpoint_url="https://unused.example", model="demo-model")
    result = extract_llm(Q1, s3, config, transport=transport)
    assert result.intent is not None
    assert compare(result.intent, validate(Q1_GOLD, s3)).full_match
