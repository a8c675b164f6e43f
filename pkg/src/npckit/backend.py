"""Pluggable generation backends.

The pipeline reaches multi-adapter serving purely through the
OpenAI-compatible chat-completions wire protocol: each adapter id maps to
a served model name, one request carries exactly a system and a user
message. A scripted mock implements the same surface for deterministic
desk-scale tests and demos.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import httpx


class AdapterId(str, Enum):
    TOOL_CALL = "tool_call"
    DIALOGUE_WITH_RESULTS = "dialogue_with_results"
    DIALOGUE_WITHOUT_RESULTS = "dialogue_without_results"


class BackendError(Exception):
    """Base for generation failures; always carries the adapter id."""

    def __init__(self, message: str, adapter: AdapterId):
        super().__init__(message)
        self.adapter = adapter


class BackendTransportError(BackendError):
    pass


class BackendTimeoutError(BackendError):
    pass


class BackendHTTPError(BackendError):
    def __init__(self, message: str, adapter: AdapterId, status_code: int):
        super().__init__(message, adapter)
        self.status_code = status_code


class BackendProtocolError(BackendError):
    """The response body was not a chat completion we can read."""


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 256
    seed: int | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


# Sampling used when regenerating dialogue data through a backend.
SYNTHESIS_PARAMS = GenerationParams(temperature=0.1, top_p=0.95, max_tokens=256)


@dataclass(frozen=True)
class GenerationRequest:
    system: str
    user: str
    adapter: AdapterId
    params: GenerationParams = field(default_factory=GenerationParams)


@dataclass(frozen=True)
class BackendProfile:
    endpoint_url: str
    adapter_model_names: dict[AdapterId, str]
    request_timeout: float = 30.0
    auth_token: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "adapter_model_names", dict(self.adapter_model_names))
        missing = [a.value for a in AdapterId if a not in self.adapter_model_names]
        if missing:
            raise ValueError(f"profile must map every adapter; missing {missing}")


class Backend(Protocol):
    def generate(self, request: GenerationRequest) -> str: ...


class HttpBackend:
    """OpenAI-compatible chat-completions client.

    One POST per request, two messages (system, user), model name taken
    from the profile's adapter mapping. Transport failures are retried
    once; timeouts are not (the turn budget forbids retry ladders).
    """

    def __init__(self, profile: BackendProfile, client: httpx.Client | None = None):
        self.profile = profile
        self._client = client or httpx.Client(timeout=profile.request_timeout)

    def close(self) -> None:
        self._client.close()

    def generate(self, request: GenerationRequest) -> str:
        url = self.profile.endpoint_url.rstrip("/") + "/v1/chat/completions"
        body = {
            "model": self.profile.adapter_model_names[request.adapter],
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_tokens,
        }
        if request.params.seed is not None:
            body["seed"] = request.params.seed
        headers = {}
        if self.profile.auth_token:
            headers["Authorization"] = f"Bearer {self.profile.auth_token}"

        response = None
        for attempt in (0, 1):
            try:
                response = self._client.post(url, json=body, headers=headers)
                break
            except httpx.TimeoutException as exc:
                raise BackendTimeoutError(f"request timed out: {exc}", request.adapter) from exc
            except httpx.TransportError as exc:
                if attempt == 1:
                    raise BackendTransportError(f"transport failure: {exc}", request.adapter) from exc
        assert response is not None
        if response.status_code >= 400:
            raise BackendHTTPError(
                f"backend returned HTTP {response.status_code}: {response.text[:200]}",
                request.adapter,
                response.status_code,
            )
        try:
            payload = response.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise BackendProtocolError(f"malformed completion body: {exc}", request.adapter) from exc
        if not isinstance(content, str):
            raise BackendProtocolError("completion content is not text", request.adapter)
        return content


@dataclass(frozen=True)
class MockRule:
    """Canned output for requests matching (adapter, user-text predicate)."""

    output: str
    adapter: AdapterId | None = None
    contains: str | None = None

    def matches(self, request: GenerationRequest) -> bool:
        if self.adapter is not None and request.adapter is not self.adapter:
            return False
        if self.contains is not None and self.contains not in request.user:
            return False
        return True


class MockBackend:
    """Deterministic scripted backend; records every request for assertion."""

    def __init__(self, rules=(), default: str = ""):
        self.rules: list[MockRule] = list(rules)
        self.default = default
        self.requests: list[GenerationRequest] = []

    def add_rule(self, output: str, adapter: AdapterId | None = None, contains: str | None = None):
        self.rules.append(MockRule(output=output, adapter=adapter, contains=contains))
        return self

    def generate(self, request: GenerationRequest) -> str:
        self.requests.append(request)
        for rule in self.rules:
            if rule.matches(request):
                return rule.output
        return self.default

    def requests_for(self, adapter: AdapterId) -> list[GenerationRequest]:
        return [r for r in self.requests if r.adapter is adapter]


class FnBackend:
    """Adapts a plain callable (request -> text); handy in tests."""

    def __init__(self, fn: Callable[[GenerationRequest], str]):
        self._fn = fn
        self.requests: list[GenerationRequest] = []

    def generate(self, request: GenerationRequest) -> str:
        self.requests.append(request)
        return self._fn(request)


def load_profile(path) -> Backend:
    """Build a backend from a profile config file.

    ``{"type": "http", ...}`` yields an HttpBackend (auth token read from
    the env var named by ``auth_token_env``); ``{"type": "mock", ...}``
    yields a scripted MockBackend.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = raw.get("type", "http")
    if kind == "mock":
        rules = [
            MockRule(
                output=r["output"],
                adapter=AdapterId(r["adapter"]) if "adapter" in r else None,
                contains=r.get("contains"),
            )
            for r in raw.get("rules", ())
        ]
        return MockBackend(rules=rules, default=raw.get("default", ""))
    if kind == "http":
        token = None
        if raw.get("auth_token_env"):
            token = os.environ.get(raw["auth_token_env"])
        profile = BackendProfile(
            endpoint_url=raw["endpoint_url"],
            adapter_model_names={AdapterId(k): v for k, v in raw["adapter_model_names"].items()},
            request_timeout=float(raw.get("request_timeout", 30.0)),
            auth_token=token,
        )
        return HttpBackend(profile)
    raise ValueError(f"unknown backend profile type {kind!r}")


def describe_backend(backend: Backend) -> dict:
    """Stable, non-secret description echoed into evaluation reports."""
    if isinstance(backend, HttpBackend):
        return {
            "type": "http",
            "endpoint_url": backend.profile.endpoint_url,
            "adapter_model_names": {
                k.value: v for k, v in backend.profile.adapter_model_names.items()
            },
        }
    if isinstance(backend, MockBackend):
        return {"type": "mock", "rules": len(backend.rules)}
    return {"type": type(backend).__name__}
