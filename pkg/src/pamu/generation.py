"""Text-generation backends: a deterministic mock and a JSON-over-HTTP client.

The HTTP client speaks the single-prompt completion protocol used by local
model servers such as Ollama::

    POST {"model": m, "prompt": p, "stream": false, "options": {...}}
    200  {"response": "...", "done": true}
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Mapping

import requests

from pamu.errors import BackendError, BackendUnreachable, EmptyCompletion


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    model: str = "mock"
    max_tokens: int = 256
    temperature: float = 0.0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass
class GenerationLog:
    """Append-only request/response log, safe to share between threads."""

    entries: list = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def append(self, request: GenerationRequest, response: str | None, error: str | None = None) -> None:
        entry = {"model": request.model, "prompt": request.prompt, "response": response}
        if error is not None:
            entry["error"] = error
        with self._lock:
            self.entries.append(entry)

    def __len__(self) -> int:
        with self._lock:
            return len(self.entries)


class Backend:
    def complete(self, request: GenerationRequest) -> str:
        raise NotImplementedError


class MockBackend(Backend):
    """Looks the prompt up in `responses`; otherwise echoes its last line."""

    def __init__(self, responses: Mapping[str, str] | None = None):
        self.responses = dict(responses or {})

    def complete(self, request: GenerationRequest) -> str:
        if request.prompt in self.responses:
            return self.responses[request.prompt]
        return request.prompt.rsplit("\n", 1)[-1]


class HttpBackend(Backend):
    def __init__(self, url: str, model: str | None = None, timeout: float = 120.0,
                 prompt_field: str = "prompt", response_field: str = "response",
                 retries: int = 1, backoff: float = 0.5,
                 session: requests.Session | None = None):
        self.url = url
        self.model = model
        self.timeout = timeout
        self.prompt_field = prompt_field
        self.response_field = response_field
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()

    def _payload(self, request: GenerationRequest) -> dict:
        return {
            "model": self.model or request.model,
            self.prompt_field: request.prompt,
            "stream": False,
            "options": {"num_predict": request.max_tokens, "temperature": request.temperature},
        }

    def complete(self, request: GenerationRequest) -> str:
        payload = self._payload(request)
        attempt = 0
        while True:
            try:
                resp = self.session.post(self.url, json=payload, timeout=self.timeout)
                break
            except requests.RequestException as exc:
                if attempt >= self.retries:
                    raise BackendUnreachable(f"{self.url}: {exc}") from exc
                time.sleep(self.backoff * 2 ** attempt)
                attempt += 1
        if resp.status_code != 200:
            raise BackendError(f"{self.url} returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body[self.response_field]
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendError(f"{self.url} sent an unexpected body") from exc
        if not isinstance(text, str):
            raise BackendError(f"{self.response_field!r} is not a string")
        return text


def generate(request: GenerationRequest, backend: Backend, log: GenerationLog | None = None) -> str:
    try:
        text = backend.complete(request)
    except Exception as exc:
        if log is not None:
            log.append(request, None, error=str(exc))
        raise
    if log is not None:
        log.append(request, text)
    if not text.strip():
        raise EmptyCompletion("backend returned an empty completion")
    return text
