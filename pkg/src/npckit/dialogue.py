"""Dialogue dataset schema: fixed game context plus the turn history.

A conversation carries five background parts (worldview, persona, role,
knowledge, state) that stay fixed for its whole lifetime, a
function_list_id selecting the candidate function subset, and a strictly
player-first alternating turn list. All types are immutable after
construction and safe to share across sessions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .functions import Registry, RegistryError, ToolResult, ToolStatus
from .hermes import ToolCall
from .reports import Finding, ValidationReport

PERSONA_FIELDS = ("name", "age", "gender", "occupation", "appearance")
BACKGROUND_FIELDS = ("worldview", "persona", "role", "knowledge", "state")


class DatasetError(ValueError):
    """Raised when a dataset file cannot be parsed or violates an invariant."""


class Speaker(str, Enum):
    PLAYER = "player"
    NPC = "npc"


@dataclass(frozen=True)
class ItemKnowledge:
    name: str
    item_type: str
    description: str


@dataclass(frozen=True)
class GeneralInfoSection:
    title: str
    text: str


@dataclass(frozen=True)
class Knowledge:
    general_info: tuple[GeneralInfoSection, ...] = ()
    knowledge_info: tuple[ItemKnowledge, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "general_info", tuple(self.general_info))
        object.__setattr__(self, "knowledge_info", tuple(self.knowledge_info))


@dataclass(frozen=True)
class StateInfo:
    location: str
    time: str
    weather: str


@dataclass(frozen=True)
class Persona:
    """The five named persona fields plus an open map for anything else,
    so unseen persona attributes survive round-trips."""

    name: str
    age: str
    gender: str
    occupation: str
    appearance: str
    extras: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "extras", dict(self.extras))


@dataclass(frozen=True)
class Background:
    worldview: str
    persona: Persona
    role: str
    knowledge: Knowledge
    state: StateInfo


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str
    tool_calls: tuple[ToolCall, ...] = ()
    tool_results: tuple[ToolResult, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))
        object.__setattr__(self, "tool_results", tuple(self.tool_results))
        if self.speaker is Speaker.PLAYER and (self.tool_calls or self.tool_results):
            raise DatasetError("player turns carry no tool calls or results")


@dataclass(frozen=True)
class Conversation:
    id: str
    background: Background
    function_list_id: str
    turns: tuple[Turn, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        expected = Speaker.PLAYER
        for i, turn in enumerate(self.turns):
            if turn.speaker is not expected:
                raise DatasetError(
                    f"turn alternation violated at turn {i}: expected {expected.value}"
                )
            expected = Speaker.NPC if expected is Speaker.PLAYER else Speaker.PLAYER

    def with_turns(self, turns) -> "Conversation":
        return replace(self, turns=tuple(turns))


# ---------------------------------------------------------------------------
# JSON (de)serialization. Field names mirror the dataset vocabulary exactly;
# tool calls are stored as {"name": ..., "parameters": {...}}.


def turn_to_json_dict(turn: Turn) -> dict:
    out: dict = {"speaker": turn.speaker.value, "text": turn.text}
    if turn.tool_calls:
        out["tool_calls"] = [c.to_json_dict() for c in turn.tool_calls]
    if turn.tool_results:
        out["tool_results"] = [r.to_json_dict() for r in turn.tool_results]
    return out


def conversation_to_json_dict(conv: Conversation) -> dict:
    persona = conv.background.persona
    persona_json = {f: getattr(persona, f) for f in PERSONA_FIELDS}
    persona_json.update(persona.extras)
    return {
        "id": conv.id,
        "function_list_id": conv.function_list_id,
        "background": {
            "worldview": conv.background.worldview,
            "persona": persona_json,
            "role": conv.background.role,
            "knowledge": {
                "general_info": [
                    {"title": s.title, "text": s.text} for s in conv.background.knowledge.general_info
                ],
                "knowledge_info": [
                    {"name": i.name, "item_type": i.item_type, "description": i.description}
                    for i in conv.background.knowledge.knowledge_info
                ],
            },
            "state": {
                "location": conv.background.state.location,
                "time": conv.background.state.time,
                "weather": conv.background.state.weather,
            },
        },
        "turns": [turn_to_json_dict(t) for t in conv.turns],
    }


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise DatasetError(f"{where}: missing field {key!r}")
    return obj[key]


def _tool_call_from_json(raw, where: str) -> ToolCall:
    if not isinstance(raw, dict):
        raise DatasetError(f"{where}: tool call must be an object")
    name = _require(raw, "name", where)
    params = raw.get("parameters", {})
    try:
        return ToolCall(name=name, parameters=params)
    except ValueError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def _tool_result_from_json(raw, where: str) -> ToolResult:
    if not isinstance(raw, dict):
        raise DatasetError(f"{where}: tool result must be an object")
    call = _tool_call_from_json(_require(raw, "call", where), where)
    try:
        status = ToolStatus(_require(raw, "status", where))
    except ValueError as exc:
        raise DatasetError(f"{where}: {exc}") from None
    try:
        return ToolResult(call=call, status=status, payload=raw.get("payload"))
    except ValueError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def turn_from_json_dict(raw: dict, where: str = "turn") -> Turn:
    try:
        speaker = Speaker(_require(raw, "speaker", where))
    except ValueError:
        raise DatasetError(f"{where}: speaker must be 'player' or 'npc'") from None
    calls = tuple(_tool_call_from_json(c, where) for c in raw.get("tool_calls", ()))
    results = tuple(_tool_result_from_json(r, where) for r in raw.get("tool_results", ()))
    return Turn(speaker=speaker, text=_require(raw, "text", where), tool_calls=calls, tool_results=results)


def conversation_from_json_dict(raw: dict, where: str = "conversation") -> Conversation:
    conv_id = raw.get("id")
    if not isinstance(conv_id, str) or not conv_id:
        raise DatasetError(f"{where}: missing or empty conversation id")
    where = f"conversation {conv_id!r}"
    bg = _require(raw, "background", where)
    for fieldname in BACKGROUND_FIELDS:
        if fieldname not in bg:
            raise DatasetError(f"{where}: background missing field {fieldname!r}")

    persona_raw = bg["persona"]
    for fieldname in PERSONA_FIELDS:
        if fieldname not in persona_raw:
            raise DatasetError(f"{where}: persona missing field {fieldname!r}")
    extras = {k: v for k, v in persona_raw.items() if k not in PERSONA_FIELDS}
    persona = Persona(**{f: persona_raw[f] for f in PERSONA_FIELDS}, extras=extras)

    know_raw = bg["knowledge"]
    sections = tuple(
        GeneralInfoSection(title=_require(s, "title", where), text=_require(s, "text", where))
        for s in know_raw.get("general_info", ())
    )
    items = []
    seen_names = set()
    for entry in know_raw.get("knowledge_info", ()):
        item = ItemKnowledge(
            name=_require(entry, "name", where),
            item_type=_require(entry, "item_type", where),
            description=_require(entry, "description", where),
        )
        if not item.name:
            raise DatasetError(f"{where}: knowledge item with empty name")
        if item.name in seen_names:
            raise DatasetError(f"{where}: duplicate knowledge item {item.name!r}")
        seen_names.add(item.name)
        items.append(item)

    state_raw = bg["state"]
    for fieldname in ("location", "time", "weather"):
        if fieldname not in state_raw:
            raise DatasetError(f"{where}: state missing field {fieldname!r}")
    state = StateInfo(location=state_raw["location"], time=state_raw["time"], weather=state_raw["weather"])

    turns = tuple(
        turn_from_json_dict(t, f"{where} turn {i}") for i, t in enumerate(raw.get("turns", ()))
    )
    background = Background(
        worldview=bg["worldview"],
        persona=persona,
        role=bg["role"],
        knowledge=Knowledge(general_info=sections, knowledge_info=tuple(items)),
        state=state,
    )
    try:
        return Conversation(
            id=conv_id,
            background=background,
            function_list_id=_require(raw, "function_list_id", where),
            turns=turns,
        )
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def load_dataset(path) -> list[Conversation]:
    """Load a dataset file: a UTF-8 JSON array of conversation objects.

    Order is preserved; every returned conversation satisfies the type
    invariants. Parse errors carry a line/column locator, invariant
    violations name the conversation and field.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, list):
        raise DatasetError(f"{path}: top level must be a JSON array of conversations")
    return [conversation_from_json_dict(entry, f"conversation #{i}") for i, entry in enumerate(raw)]


def save_dataset(conversations, path) -> None:
    """Write conversations back out; load(save(x)) round-trips structurally."""
    data = [conversation_to_json_dict(c) for c in conversations]
    Path(path).write_text(json.dumps(data, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def validate_conversation(conv: Conversation, registry: Registry) -> ValidationReport:
    """Report (not raise) invariant problems visible against a registry."""
    findings = []
    try:
        registry.lookup(conv.function_list_id)
    except RegistryError:
        findings.append(
            Finding("unresolvable_function_list", f"unresolvable function list {conv.function_list_id!r}")
        )
    seen = set()
    for item in conv.background.knowledge.knowledge_info:
        if not item.name:
            findings.append(Finding("empty_knowledge_name", "knowledge item with empty name"))
        if item.name in seen:
            findings.append(Finding("duplicate_knowledge_item", f"duplicate knowledge item {item.name!r}"))
        seen.add(item.name)
    return ValidationReport(tuple(findings))
