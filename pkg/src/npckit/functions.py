"""Function registry: candidate function subsets keyed by function_list_id.

Loads the registry file, validates parsed calls against JSON-Schema-like
parameter descriptors, and simulates execution at desk scale: tool-kind
functions resolve item lookups against the conversation's knowledge,
action-kind functions acknowledge by echoing their arguments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any

from .hermes import ToolCall
from .reports import Finding, ValidationReport

if TYPE_CHECKING:
    from .dialogue import Conversation

PARAM_TYPES = ("string", "number", "integer", "boolean", "array")


class RegistryError(ValueError):
    """Raised for malformed registry files or unknown lookups."""


class InvalidCallError(ValueError):
    """Contract error: a call that fails validation was handed to execute_tool."""


class FunctionKind(str, Enum):
    ACTION = "action"
    TOOL = "tool"


@dataclass(frozen=True)
class ParamSpec:
    type: str
    description: str = ""
    enum_values: tuple | None = None

    def __post_init__(self):
        if self.type not in PARAM_TYPES:
            raise RegistryError(f"unknown parameter type {self.type!r}")
        if self.enum_values is not None:
            object.__setattr__(self, "enum_values", tuple(self.enum_values))


@dataclass(frozen=True)
class ParameterSchema:
    properties: dict[str, ParamSpec] = field(default_factory=dict)
    required: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "properties", dict(self.properties))
        object.__setattr__(self, "required", tuple(self.required))
        for name in self.required:
            if name not in self.properties:
                raise RegistryError(f"required parameter {name!r} not in properties")

    def to_json_dict(self) -> dict:
        props = {}
        for name, spec in self.properties.items():
            entry: dict[str, Any] = {"type": spec.type, "description": spec.description}
            if spec.enum_values is not None:
                entry["enum"] = list(spec.enum_values)
            props[name] = entry
        return {"type": "object", "properties": props, "required": list(self.required)}


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    kind: FunctionKind
    description: str = ""
    parameters: ParameterSchema = field(default_factory=ParameterSchema)

    def signature_json_dict(self) -> dict:
        """Hermes-style signature line for the <tools> block."""
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameters.to_json_dict(),
            },
        }


@dataclass(frozen=True)
class FunctionList:
    id: str
    functions: tuple[FunctionSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        seen = set()
        for spec in self.functions:
            if spec.name in seen:
                raise RegistryError(f"duplicate function {spec.name!r} in list {self.id!r}")
            seen.add(spec.name)

    def get(self, name: str) -> FunctionSpec | None:
        for spec in self.functions:
            if spec.name == name:
                return spec
        return None


class ToolStatus(str, Enum):
    OK = "ok"
    NOT_FOUND = "not_found"
    INVALID_ARGS = "invalid_args"


@dataclass(frozen=True)
class ToolResult:
    call: ToolCall
    status: ToolStatus
    payload: Any = None

    def __post_init__(self):
        if self.status is ToolStatus.OK and self.payload is None:
            raise ValueError("ok results require a payload")

    def to_json_dict(self) -> dict:
        return {"call": self.call.to_json_dict(), "status": self.status.value, "payload": self.payload}


class Registry:
    """Immutable index of FunctionLists by id."""

    def __init__(self, lists):
        index: dict[str, FunctionList] = {}
        for fl in lists:
            if fl.id in index:
                raise RegistryError(f"duplicate function list id {fl.id!r}")
            index[fl.id] = fl
        self._lists = index

    def __len__(self) -> int:
        return len(self._lists)

    def __contains__(self, list_id: str) -> bool:
        return list_id in self._lists

    def ids(self) -> list[str]:
        return list(self._lists)

    def lookup(self, function_list_id: str) -> FunctionList:
        try:
            return self._lists[function_list_id]
        except KeyError:
            raise RegistryError(f"unknown function list id {function_list_id!r}") from None


def load_registry(path) -> Registry:
    """Load the registry JSON file (array of {id, functions[]})."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise RegistryError("registry file must contain a JSON array of function lists")
    lists = []
    for entry in raw:
        lists.append(_function_list_from_json(entry))
    return Registry(lists)


def _function_list_from_json(entry) -> FunctionList:
    if not isinstance(entry, dict) or "id" not in entry:
        raise RegistryError("function list entry must be an object with an 'id'")
    list_id = entry["id"]
    functions = []
    for fn in entry.get("functions", []):
        try:
            kind = FunctionKind(fn["kind"])
        except (KeyError, ValueError) as exc:
            raise RegistryError(f"list {list_id!r}: function kind must be 'action' or 'tool'") from exc
        params = fn.get("parameters", {})
        properties = {}
        for pname, pspec in params.get("properties", {}).items():
            if "type" not in pspec:
                raise RegistryError(f"list {list_id!r}: parameter {pname!r} missing a type")
            properties[pname] = ParamSpec(
                type=pspec["type"],
                description=pspec.get("description", ""),
                enum_values=tuple(pspec["enum_values"])
                if "enum_values" in pspec
                else tuple(pspec["enum"]) if "enum" in pspec else None,
            )
        try:
            schema = ParameterSchema(properties=properties, required=tuple(params.get("required", ())))
        except RegistryError as exc:
            raise RegistryError(f"list {list_id!r}: function {fn.get('name')!r}: {exc}") from None
        functions.append(
            FunctionSpec(name=fn["name"], kind=kind, description=fn.get("description", ""), parameters=schema)
        )
    return FunctionList(id=list_id, functions=tuple(functions))


def _type_ok(value, expected: str) -> bool:
    if expected == "string":
        return isinstance(value, str)
    if expected == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected == "integer":
        # Integral floats are accepted; models frequently emit 2.0 for 2.
        if isinstance(value, bool):
            return False
        return isinstance(value, int) or (isinstance(value, float) and value.is_integer())
    if expected == "boolean":
        return isinstance(value, bool)
    if expected == "array":
        return isinstance(value, list)
    return False


def validate_call(call: ToolCall, function_list: FunctionList, strict: bool = False) -> ValidationReport:
    """Check a parsed call against the list's parameter schemas.

    Unknown extra parameters are non-blocking findings unless ``strict``
    is set; everything else (unknown function, missing required, type or
    enum mismatch) blocks.
    """
    spec = function_list.get(call.name)
    if spec is None:
        return ValidationReport(
            (Finding("unknown_function", f"function {call.name!r} not in list {function_list.id!r}"),)
        )
    findings = []
    schema = spec.parameters
    for name in schema.required:
        if name not in call.parameters:
            findings.append(Finding("missing_required", f"missing required: {name}"))
    for name, value in call.parameters.items():
        pspec = schema.properties.get(name)
        if pspec is None:
            findings.append(
                Finding("unknown_parameter", f"parameter {name!r} not in schema", blocking=strict)
            )
            continue
        if not _type_ok(value, pspec.type):
            findings.append(
                Finding("type_mismatch", f"parameter {name!r} expects {pspec.type}, got {value!r}")
            )
        elif pspec.enum_values is not None and value not in pspec.enum_values:
            findings.append(
                Finding(
                    "type_mismatch",
                    f"parameter {name!r} must be one of {list(pspec.enum_values)!r}, got {value!r}",
                )
            )
    return ValidationReport(tuple(findings))


def execute_tool(call: ToolCall, conv: "Conversation", function_list: FunctionList) -> ToolResult:
    """Deterministically simulate one call against the conversation.

    Tool-kind functions look up knowledge items by case-insensitive name
    match over the call's string arguments; action-kind functions return
    an acknowledgement payload echoing name and arguments. Handing in an
    invalid call is a contract error, not a result.
    """
    report = validate_call(call, function_list)
    if not report.ok:
        messages = "; ".join(f.message for f in report.findings if f.blocking)
        raise InvalidCallError(f"invalid call {call.name!r}: {messages}")
    spec = function_list.get(call.name)
    assert spec is not None
    if spec.kind is FunctionKind.ACTION:
        payload = {"action": call.name}
        payload.update(call.parameters)
        return ToolResult(call=call, status=ToolStatus.OK, payload=payload)

    by_name = {item.name.lower(): item for item in conv.background.knowledge.knowledge_info}
    matched = []
    for value in call.parameters.values():
        if isinstance(value, str):
            item = by_name.get(value.strip().lower())
            if item is not None and item not in matched:
                matched.append(item)
    if not matched:
        return ToolResult(call=call, status=ToolStatus.NOT_FOUND, payload=None)
    payloads = [
        {"name": item.name, "item_type": item.item_type, "description": item.description}
        for item in matched
    ]
    return ToolResult(call=call, status=ToolStatus.OK, payload=payloads[0] if len(payloads) == 1 else payloads)


def synthesize_minimal_call(spec: FunctionSpec) -> ToolCall:
    """Build a minimal valid call: every required parameter gets a
    type-appropriate placeholder value."""
    fillers = {"string": "example", "number": 0, "integer": 0, "boolean": False, "array": []}
    params = {}
    for name in spec.parameters.required:
        pspec = spec.parameters.properties[name]
        if pspec.enum_values:
            params[name] = pspec.enum_values[0]
        else:
            params[name] = fillers[pspec.type]
    return ToolCall(name=spec.name, parameters=params)
