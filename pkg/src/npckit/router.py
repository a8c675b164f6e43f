"""Turn orchestration: tool-call stage, routing decision, response stage.

A turn runs through two generations against named adapters: the tool-call
adapter first, then exactly one of the two dialogue adapters chosen by
whether executing the parsed calls yielded any results. Invalid parsed
calls are dropped (recorded, never executed). Backend failures abort the
turn without touching the conversation; the 7-second budget is a soft
deadline surfaced as a flag.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .backend import AdapterId, Backend, BackendError, GenerationParams, GenerationRequest
from .dialogue import Conversation, Speaker, Turn
from .functions import Registry, ToolResult, ToolStatus, execute_tool, validate_call
from .hermes import ToolCall, parse_tool_calls
from .prompts import (
    PromptScenario,
    build_function_call_prompt,
    build_with_results_prompt,
    build_without_results_prompt,
)

DEFAULT_TURN_DEADLINE = 7.0

SCENARIO_ADAPTERS = {
    PromptScenario.WITH_RESULTS: AdapterId.DIALOGUE_WITH_RESULTS,
    PromptScenario.WITHOUT_RESULTS: AdapterId.DIALOGUE_WITHOUT_RESULTS,
}


class TurnExecutionError(RuntimeError):
    """A turn aborted before completion; no turns were appended."""

    def __init__(self, stage: str, adapter: AdapterId, cause: BackendError):
        super().__init__(f"stage {stage} failed on adapter {adapter.value}: {cause}")
        self.stage = stage
        self.adapter = adapter
        self.cause = cause


class ConcurrentTurnError(RuntimeError):
    """A second run_turn was attempted while one is already in flight."""


@dataclass(frozen=True)
class RunSettings:
    turn_deadline: float = DEFAULT_TURN_DEADLINE
    generation_params: dict[AdapterId, GenerationParams] = field(default_factory=dict)
    max_history_turns: int | None = None  # None = untruncated history
    additional_info: str = ""
    strict_results: bool = False  # count only ok results when routing
    strict_validation: bool = False  # unknown extra params invalidate calls

    def params_for(self, adapter: AdapterId) -> GenerationParams:
        return self.generation_params.get(adapter, GenerationParams())


@dataclass(frozen=True)
class TurnOutcome:
    scenario: PromptScenario
    raw_toolcall_output: str
    parsed_calls: tuple[ToolCall, ...]
    valid_calls: tuple[ToolCall, ...]
    results: tuple[ToolResult, ...]
    response: str
    timings: dict[str, float]
    deadline_exceeded: bool

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "raw_toolcall_output": self.raw_toolcall_output,
            "parsed_calls": [c.to_json_dict() for c in self.parsed_calls],
            "valid_calls": [c.to_json_dict() for c in self.valid_calls],
            "results": [r.to_json_dict() for r in self.results],
            "response": self.response,
            "timings": self.timings,
            "deadline_exceeded": self.deadline_exceeded,
        }


def classify_scenario(results, strict: bool = False) -> PromptScenario:
    """Route on the tool stage's outcome: any executed result selects the
    with-results dialogue adapter. In strict mode only ok-status results
    count; a failed lookup then routes to the plain dialogue adapter."""
    if strict:
        hit = any(r.status is ToolStatus.OK for r in results)
    else:
        hit = bool(results)
    return PromptScenario.WITH_RESULTS if hit else PromptScenario.WITHOUT_RESULTS


class Session:
    """One live dialogue: background fixed, turn list growing.

    A session permits a single in-flight turn; concurrent run_turn calls
    raise ConcurrentTurnError. Distinct sessions are independent.
    """

    def __init__(
        self,
        conversation: Conversation,
        backend: Backend,
        registry: Registry,
        settings: RunSettings | None = None,
    ):
        self.conversation = conversation
        self.backend = backend
        self.registry = registry
        self.settings = settings or RunSettings()
        self.outcomes: list[TurnOutcome] = []
        self._turn_lock = threading.Lock()
        # Resolve eagerly so a dangling function_list_id fails at session start.
        self._functions = registry.lookup(conversation.function_list_id)

    def _history_view(self) -> Conversation:
        turns = self.conversation.turns
        limit = self.settings.max_history_turns
        if limit is not None and len(turns) > limit:
            trimmed = turns[len(turns) - limit :]
            # Keep alternation intact: a window may not start mid-pair on an npc turn.
            if trimmed and trimmed[0].speaker is Speaker.NPC:
                trimmed = trimmed[1:]
            return self.conversation.with_turns(trimmed)
        return self.conversation

    def run_turn(self, user_query: str) -> TurnOutcome:
        if not user_query:
            raise ValueError("user query must be non-empty")
        if not self._turn_lock.acquire(blocking=False):
            raise ConcurrentTurnError("a turn is already in flight on this session")
        try:
            return self._run_turn_locked(user_query)
        finally:
            self._turn_lock.release()

    def _run_turn_locked(self, user_query: str) -> TurnOutcome:
        settings = self.settings
        view = self._history_view()
        timings: dict[str, float] = {}
        started = time.monotonic()

        stage_start = started
        bundle = build_function_call_prompt(
            view, user_query, self._functions, additional_info=settings.additional_info
        )
        request = GenerationRequest(
            system=bundle.system,
            user=bundle.user,
            adapter=AdapterId.TOOL_CALL,
            params=settings.params_for(AdapterId.TOOL_CALL),
        )
        try:
            raw_output = self.backend.generate(request)
        except BackendError as exc:
            raise TurnExecutionError("tool_call", AdapterId.TOOL_CALL, exc) from exc
        timings["tool_call"] = (time.monotonic() - stage_start) * 1000.0

        stage_start = time.monotonic()
        parsed, _diagnostics = parse_tool_calls(raw_output)
        valid = tuple(
            c
            for c in parsed
            if validate_call(c, self._functions, strict=settings.strict_validation).ok
        )
        results = tuple(execute_tool(c, self.conversation, self._functions) for c in valid)
        timings["execute"] = (time.monotonic() - stage_start) * 1000.0

        scenario = classify_scenario(results, strict=settings.strict_results)
        stage_start = time.monotonic()
        if scenario is PromptScenario.WITH_RESULTS:
            response_bundle = build_with_results_prompt(view, user_query, results)
        else:
            response_bundle = build_without_results_prompt(view, user_query)
        adapter = SCENARIO_ADAPTERS[scenario]
        response_request = GenerationRequest(
            system=response_bundle.system,
            user=response_bundle.user,
            adapter=adapter,
            params=settings.params_for(adapter),
        )
        try:
            response = self.backend.generate(response_request)
        except BackendError as exc:
            raise TurnExecutionError("response", adapter, exc) from exc
        timings["response"] = (time.monotonic() - stage_start) * 1000.0

        total = time.monotonic() - started
        timings["total"] = total * 1000.0
        outcome = TurnOutcome(
            scenario=scenario,
            raw_toolcall_output=raw_output,
            parsed_calls=tuple(parsed),
            valid_calls=valid,
            results=results,
            response=response,
            timings=timings,
            deadline_exceeded=total > settings.turn_deadline,
        )
        self.conversation = self.conversation.with_turns(
            self.conversation.turns
            + (
                Turn(speaker=Speaker.PLAYER, text=user_query),
                Turn(speaker=Speaker.NPC, text=response, tool_calls=valid, tool_results=results),
            )
        )
        self.outcomes.append(outcome)
        return outcome


def run_conversation(
    conv: Conversation,
    backend: Backend,
    registry: Registry,
    settings: RunSettings | None = None,
) -> list[TurnOutcome]:
    """Replay a conversation's player turns through the pipeline.

    Predicted npc turns (not the gold ones) feed the history of later
    turns. Returns one outcome per player turn; aborts carry the turn
    index.
    """
    player_turns = [t for t in conv.turns if t.speaker is Speaker.PLAYER]
    session = Session(conv.with_turns(()), backend, registry, settings)
    outcomes = []
    for index, player_turn in enumerate(player_turns):
        try:
            outcomes.append(session.run_turn(player_turn.text))
        except TurnExecutionError as exc:
            raise TurnExecutionError(f"turn {index}: {exc.stage}", exc.adapter, exc.cause) from exc
    return outcomes


def write_trace(outcomes, path) -> None:
    """Trace log: JSON-lines, one TurnOutcome per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for outcome in outcomes:
            fh.write(json.dumps(outcome.to_json_dict(), ensure_ascii=False) + "\n")
