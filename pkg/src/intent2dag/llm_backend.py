"""Chat-completion HTTP client with retries and recorded-response fixtures.

The request body is standard chat-completion JSON with temperature pinned to
0 to minimize sampling variance. API keys are taken from the environment
variable named in the config and never written to disk.

Recorded-response mode keys canned response bodies by a fingerprint of the
request body, which makes fixtures self-addressing: tests and the offline
demo build the same request the live path would send and look up
``<fingerprint>.json`` in a fixture directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import httpx


class LlmBackendError(RuntimeError):
    pass


class BackendUnavailable(LlmBackendError):
    pass


class BackendTimeout(LlmBackendError):
    pass


class AuthFailure(LlmBackendError):
    pass


ENDPOINT_ENV = "I2D_LLM_ENDPOINT"
MODEL_ENV = "I2D_LLM_MODEL"
API_KEY_ENV = "I2D_LLM_API_KEY"


@dataclass(frozen=True)
class LlmBackendConfig:
    endpoint_url: str
    model: str
    api_key_env: str = API_KEY_ENV
    timeout_s: float = 30.0
    max_retries: int = 2

    @classmethod
    def from_env(cls) -> "LlmBackendConfig":
        endpoint = os.environ.get(ENDPOINT_ENV)
        model = os.environ.get(MODEL_ENV)
        if not endpoint or not model:
            raise BackendUnavailable(
                f"set {ENDPOINT_ENV} and {MODEL_ENV} to use the LLM extractor"
            )
        return cls(endpoint_url=endpoint, model=model)


def request_body(system_prompt: str, query: str, model: str) -> dict:
    return {
        "model": model,
        "messages": [
            {"role": "system", "content": system_prompt},
            {"role": "user", "content": query},
        ],
        "temperature": 0,
    }


def request_fingerprint(body: dict) -> str:
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class HttpTransport:
    """POSTs a chat-completion request, retrying transport-level failures
    with exponential backoff. 401/403 fail immediately as AuthFailure."""

    def __init__(self, config: LlmBackendConfig, client: httpx.Client | None = None, sleeper=time.sleep):
        self._config = config
        self._client = client
        self._sleep = sleeper

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self._config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def send(self, body: dict) -> dict:
        client = self._client or httpx.Client(timeout=self._config.timeout_s)
        owns_client = self._client is None
        attempt = 0
        try:
            while True:
                try:
                    response = client.post(
                        self._config.endpoint_url, json=body, headers=self._headers()
                    )
                except httpx.TimeoutException as exc:
                    if attempt >= self._config.max_retries:
                        raise BackendTimeout(str(exc)) from exc
                except httpx.TransportError as exc:
                    if attempt >= self._config.max_retries:
                        raise BackendUnavailable(str(exc)) from exc
                else:
                    if response.status_code in (401, 403):
                        raise AuthFailure(f"backend returned HTTP {response.status_code}")
                    if response.status_code == 429 or response.status_code >= 500:
                        if attempt >= self._config.max_retries:
                            raise BackendUnavailable(
                                f"backend returned HTTP {response.status_code}"
                            )
                    elif response.status_code >= 400:
                        raise BackendUnavailable(f"backend returned HTTP {response.status_code}")
                    else:
                        try:
                            return response.json()
                        except ValueError as exc:
                            raise BackendUnavailable(f"non-JSON response: {exc}") from exc
                attempt += 1
                self._sleep(0.5 * 2 ** (attempt - 1))
        finally:
            if owns_client:
                client.close()


class RecordedTransport:
    """Reads canned response bodies from ``<dir>/<request fingerprint>.json``."""

    def __init__(self, directory: Path):
        self._dir = Path(directory)

    def send(self, body: dict) -> dict:
        path = self._dir / f"{request_fingerprint(body)}.json"
        if not path.exists():
            raise BackendUnavailable(
                f"no recorded response {path.name} in {self._dir} "
                "(record one with RecordedTransport.record)"
            )
        return json.loads(path.read_text(encoding="utf-8"))

    def record(self, body: dict, response: dict) -> Path:
        self._dir.mkdir(parents=True, exist_ok=True)
        path = self._dir / f"{request_fingerprint(body)}.json"
        path.write_text(json.dumps(response, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path


def completion_response(content: str, prompt_tokens: int = 0, completion_tokens: int = 0) -> dict:
    """Minimal chat-completion response body, used by fixtures and tests."""
    return {
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
    }
