"""Dialogue data synthesis: regenerate assistant turns through a backend.

Two strategies are supported. ``sequential_replace`` feeds turns in
order, updating the history with each generated reply before producing
the next one; ``whole_history`` keeps the gold history intact and
regenerates every reply against it. Player turns are never touched.

Only npc turns matching the job's scenario are regenerated (by default
the no-tool-result dialogue turns); everything else passes through
unchanged, so structure and alternation are preserved.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .backend import (
    AdapterId,
    Backend,
    BackendError,
    GenerationParams,
    GenerationRequest,
    HttpBackend,
    SYNTHESIS_PARAMS,
)
from .dialogue import Conversation, Speaker, Turn
from .functions import Registry
from .hermes import render_tool_call
from .prompts import (
    PromptScenario,
    build_function_call_prompt,
    build_with_results_prompt,
    build_without_results_prompt,
)

log = logging.getLogger(__name__)

SCENARIO_ADAPTERS = {
    PromptScenario.WITH_RESULTS: AdapterId.DIALOGUE_WITH_RESULTS,
    PromptScenario.WITHOUT_RESULTS: AdapterId.DIALOGUE_WITHOUT_RESULTS,
}


class SynthesisStrategy(str, Enum):
    SEQUENTIAL_REPLACE = "sequential_replace"
    WHOLE_HISTORY = "whole_history"


@dataclass(frozen=True)
class SynthesisJob:
    source: tuple[Conversation, ...]
    strategy: SynthesisStrategy
    backend: Backend
    params: GenerationParams = SYNTHESIS_PARAMS
    scenario: PromptScenario = PromptScenario.WITHOUT_RESULTS

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        if self.scenario is PromptScenario.FUNCTION_CALL:
            raise ValueError("synthesis regenerates dialogue turns, not tool-call turns")


@dataclass(frozen=True)
class TrainingExample:
    scenario: PromptScenario
    system: str
    user: str
    target: str
    provenance: dict

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "system": self.system,
            "user": self.user,
            "target": self.target,
            "provenance": self.provenance,
        }


def _turn_matches(turn: Turn, scenario: PromptScenario) -> bool:
    if scenario is PromptScenario.WITH_RESULTS:
        return bool(turn.tool_results)
    return not turn.tool_results


def _dialogue_bundle(conv_view: Conversation, query: str, turn: Turn, scenario: PromptScenario):
    if scenario is PromptScenario.WITH_RESULTS:
        return build_with_results_prompt(conv_view, query, turn.tool_results)
    return build_without_results_prompt(conv_view, query)


def _synthesize_conversation(job: SynthesisJob, conv: Conversation, sequential: bool) -> Conversation:
    new_turns: list[Turn] = []
    for index, turn in enumerate(conv.turns):
        if turn.speaker is Speaker.PLAYER:
            new_turns.append(turn)
            continue
        if not _turn_matches(turn, job.scenario):
            new_turns.append(turn)
            continue
        # Alternation guarantees the preceding turn is the player query.
        query = conv.turns[index - 1].text
        history = tuple(new_turns[:-1]) if sequential else conv.turns[: index - 1]
        bundle = _dialogue_bundle(conv.with_turns(history), query, turn, job.scenario)
        adapter = SCENARIO_ADAPTERS[job.scenario]
        generated = job.backend.generate(
            GenerationRequest(system=bundle.system, user=bundle.user, adapter=adapter, params=job.params)
        )
        new_turns.append(
            Turn(
                speaker=Speaker.NPC,
                text=generated,
                tool_calls=turn.tool_calls,
                tool_results=turn.tool_results,
            )
        )
    return conv.with_turns(new_turns)


def _run_job(job: SynthesisJob, sequential: bool) -> list[Conversation]:
    out = []
    for conv in job.source:
        try:
            out.append(_synthesize_conversation(job, conv, sequential))
        except BackendError as exc:
            # One failed conversation never aborts the job; its partial
            # output is discarded.
            log.warning("synthesis of conversation %s aborted: %s", conv.id, exc)
    return out


def synthesize_sequential(job: SynthesisJob) -> list[Conversation]:
    """Regenerate replies turn by turn, each prompt seeing the replies
    generated so far instead of the gold ones."""
    return _run_job(job, sequential=True)


def synthesize_whole_history(job: SynthesisJob) -> list[Conversation]:
    """Regenerate every reply against the unmodified gold history."""
    return _run_job(job, sequential=False)


def synthesize(job: SynthesisJob) -> list[Conversation]:
    if job.strategy is SynthesisStrategy.SEQUENTIAL_REPLACE:
        return synthesize_sequential(job)
    return synthesize_whole_history(job)


def backend_model_name(backend: Backend, adapter: AdapterId) -> str:
    if isinstance(backend, HttpBackend):
        return backend.profile.adapter_model_names[adapter]
    return "mock"


def emit_training_examples(
    conversations,
    scenario: PromptScenario,
    registry: Registry | None = None,
    strategy: SynthesisStrategy | None = None,
    model_name: str = "mock",
) -> list[TrainingExample]:
    """One (system, user, target) record per matching assistant turn.

    Dialogue scenarios target the npc reply text; the function_call
    scenario targets the tagged tool-call text (empty for abstention
    turns) and needs a registry to render the signatures.
    """
    if scenario is PromptScenario.FUNCTION_CALL and registry is None:
        raise ValueError("function_call examples need a registry for the tools block")
    examples = []
    for conv in conversations:
        for index, turn in enumerate(conv.turns):
            if turn.speaker is not Speaker.NPC:
                continue
            query = conv.turns[index - 1].text
            view = conv.with_turns(conv.turns[: index - 1])
            if scenario is PromptScenario.FUNCTION_CALL:
                functions = registry.lookup(conv.function_list_id)
                bundle = build_function_call_prompt(view, query, functions)
                target = "\n".join(render_tool_call(c) for c in turn.tool_calls)
            else:
                if not _turn_matches(turn, scenario):
                    continue
                bundle = _dialogue_bundle(view, query, turn, scenario)
                target = turn.text
            examples.append(
                TrainingExample(
                    scenario=scenario,
                    system=bundle.system,
                    user=bundle.user,
                    target=target,
                    provenance={
                        "conversation_id": conv.id,
                        "turn_index": index,
                        "strategy": strategy.value if strategy else None,
                        "model": model_name,
                    },
                )
            )
    return examples


def write_training_examples(examples, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(example.to_json_dict(), ensure_ascii=False) + "\n")
