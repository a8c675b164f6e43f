"""Hermes-style tool-calling codec.

Renders the ``<tools>`` signature block injected into system prompts and
extracts ``<tool_call>`` regions from raw model output. Parsing is total:
arbitrary text never raises, malformed regions surface as diagnostics.

Canonical JSON: UTF-8, ``json.dumps`` default separators, object keys in
insertion order. Fixtures pin these bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

TOOLS_OPEN = "<tools>"
TOOLS_CLOSE = "</tools>"
CALL_OPEN = "<tool_call>"
CALL_CLOSE = "</tool_call>"


def _dumps(value: Any) -> str:
    return json.dumps(value, ensure_ascii=False)


@dataclass(frozen=True, eq=False)
class ToolCall:
    """A parsed function invocation: name plus a JSON-object argument map."""

    name: str
    parameters: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            raise ValueError("tool call name must be non-empty")
        if not isinstance(self.parameters, dict):
            raise ValueError("tool call parameters must be a JSON object")
        # Defensive copy: the call is conceptually immutable once built.
        object.__setattr__(self, "parameters", dict(self.parameters))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ToolCall):
            return NotImplemented
        return self.name == other.name and self.parameters == other.parameters

    def __repr__(self) -> str:
        return f"ToolCall(name={self.name!r}, parameters={self.parameters!r})"

    def to_json_dict(self) -> dict:
        return {"name": self.name, "parameters": self.parameters}


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # unclosed_tag | invalid_json | missing_name | non_object_params | stray_text
    span: tuple[int, int]
    detail: str


@dataclass(frozen=True)
class ParseDiagnostics:
    findings: tuple[Diagnostic, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return bool(self.findings)


def render_tools_block(functions) -> str:
    """Render the ``<tools>`` block: one JSON signature per function.

    Accepts a FunctionList or any iterable of objects exposing
    ``signature_json_dict()``. Input order is preserved; output is
    byte-stable for a given list.
    """
    specs = getattr(functions, "functions", functions)
    lines = [TOOLS_OPEN]
    for spec in specs:
        lines.append(_dumps(spec.signature_json_dict()))
    lines.append(TOOLS_CLOSE)
    return "\n".join(lines)


def render_tool_call(call: ToolCall) -> str:
    """Emit the tagged wire form of one call.

    ``parse_tool_calls(render_tool_call(c))`` yields ``[c]`` with no
    diagnostics.
    """
    body = _dumps({"name": call.name, "parameters": call.parameters})
    return f"{CALL_OPEN}\n{body}\n{CALL_CLOSE}"


def render_tool_results(results) -> str:
    """One JSON object per result ({name, status, payload}), newline-joined."""
    lines = []
    for result in results:
        status = result.status.value if hasattr(result.status, "value") else result.status
        lines.append(_dumps({"name": result.call.name, "status": status, "payload": result.payload}))
    return "\n".join(lines)


def parse_tool_calls(model_output: str) -> tuple[list[ToolCall], ParseDiagnostics]:
    """Extract every well-formed ``<tool_call>`` region from arbitrary text.

    A region is well-formed when its body is a JSON object with a string
    "name" and an object "parameters" ("arguments" accepted as an alias).
    Malformed regions become diagnostics and are skipped. Text outside
    regions never influences the result.
    """
    calls: list[ToolCall] = []
    findings: list[Diagnostic] = []
    cursor = 0
    while True:
        start = model_output.find(CALL_OPEN, cursor)
        if start < 0:
            break
        body_start = start + len(CALL_OPEN)
        end = model_output.find(CALL_CLOSE, body_start)
        if end < 0:
            findings.append(
                Diagnostic("unclosed_tag", (start, len(model_output)), "no matching </tool_call>")
            )
            break
        span = (start, end + len(CALL_CLOSE))
        _parse_region(model_output[body_start:end], span, calls, findings)
        cursor = end + len(CALL_CLOSE)
    return calls, ParseDiagnostics(tuple(findings))


def _parse_region(
    body: str, span: tuple[int, int], calls: list[ToolCall], findings: list[Diagnostic]
) -> None:
    stripped = body.strip()
    payload = None
    try:
        payload = json.loads(stripped)
    except (json.JSONDecodeError, RecursionError):
        # Models sometimes wrap the object in prose; salvage the first JSON value.
        brace = stripped.find("{")
        if brace >= 0:
            try:
                payload, consumed = json.JSONDecoder().raw_decode(stripped[brace:])
            except (json.JSONDecodeError, RecursionError):
                payload = None
            else:
                leftover = stripped[brace + consumed :].strip()
                if brace or leftover:
                    findings.append(
                        Diagnostic("stray_text", span, "non-JSON text inside tool_call region")
                    )
        if payload is None:
            findings.append(Diagnostic("invalid_json", span, "body is not valid JSON"))
            return
    if not isinstance(payload, dict):
        findings.append(Diagnostic("invalid_json", span, "body is not a JSON object"))
        return
    name = payload.get("name")
    if not isinstance(name, str) or not name:
        findings.append(Diagnostic("missing_name", span, "missing or non-string function name"))
        return
    params = payload.get("parameters", payload.get("arguments"))
    if params is None:
        findings.append(Diagnostic("non_object_params", span, "missing parameters object"))
        return
    if not isinstance(params, dict):
        findings.append(Diagnostic("non_object_params", span, "parameters is not a JSON object"))
        return
    calls.append(ToolCall(name=name, parameters=params))
