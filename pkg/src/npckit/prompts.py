"""Scenario-specific prompt assembly.

Three builders produce the (system, user) pair for the tool-call stage and
the two dialogue stages. Composition rules differ deliberately per
scenario:

* function_call: state + knowledge + history + query; no worldview, no
  persona.
* with_results: role + persona + tool results + knowledge; no worldview.
* without_results: role + state + persona + worldview; no item knowledge
  in the system prompt.

Templates are plain-text assets; placeholder substitution is a literal,
single-pass text splice with no escaping. Builders are byte-deterministic
for fixed inputs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .dialogue import Conversation, Persona, StateInfo, Speaker, Turn
from .functions import FunctionList, ToolResult
from .hermes import render_tool_results, render_tools_block

TEMPLATE_VERSION = "1"

WORD_LIMIT_WITH_RESULTS = 90
WORD_LIMIT_WITHOUT_RESULTS = 64


class PromptScenario(str, Enum):
    FUNCTION_CALL = "function_call"
    WITH_RESULTS = "with_results"
    WITHOUT_RESULTS = "without_results"


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    scenario: PromptScenario


_PLACEHOLDER_RE = re.compile(
    r"\{(function|state|knowledge_info|additional_information|history|query|"
    r"role|personal|function_call_result|worldview)\}"
)


def _template(name: str) -> str:
    return resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8")


_TEMPLATES = {
    name: _template(f"{name}.txt")
    for name in (
        "function_call_system",
        "function_call_user",
        "with_results_system",
        "with_results_user",
        "without_results_system",
        "without_results_user",
    )
}


def _fill(template_name: str, values: dict[str, str]) -> str:
    # Single pass: spliced values are never re-scanned for placeholders.
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], _TEMPLATES[template_name])


def render_state(state: StateInfo) -> str:
    return f"location: {state.location}\ntime: {state.time}\nweather: {state.weather}"


def render_persona(persona: Persona) -> str:
    lines = [
        f"name: {persona.name}",
        f"age: {persona.age}",
        f"gender: {persona.gender}",
        f"occupation: {persona.occupation}",
        f"appearance: {persona.appearance}",
    ]
    lines.extend(f"{key}: {value}" for key, value in persona.extras.items())
    return "\n".join(lines)


def render_knowledge_items(items) -> str:
    return "\n".join(f"- {i.name} ({i.item_type}): {i.description}" for i in items)


def render_history(turns) -> str:
    """"User:"/"NPC:" lines in turn order; empty history renders empty."""
    labels = {Speaker.PLAYER: "User", Speaker.NPC: "NPC"}
    return "\n".join(f"{labels[t.speaker]}: {t.text}" for t in turns)


def build_function_call_prompt(
    conv: Conversation,
    current_query: str,
    function_list: FunctionList,
    additional_info: str = "",
) -> PromptBundle:
    """Tool-call stage prompt: function signatures plus state, item
    knowledge, full history and the query. Worldview and persona are
    deliberately absent."""
    system = _fill("function_call_system", {"function": render_tools_block(function_list)})
    user = _fill(
        "function_call_user",
        {
            "state": render_state(conv.background.state),
            "knowledge_info": render_knowledge_items(conv.background.knowledge.knowledge_info),
            "additional_information": additional_info,
            "history": render_history(conv.turns),
            "query": current_query,
        },
    )
    return PromptBundle(system=system, user=user, scenario=PromptScenario.FUNCTION_CALL)


def build_with_results_prompt(
    conv: Conversation, current_query: str, results: list[ToolResult] | tuple[ToolResult, ...]
) -> PromptBundle:
    """Dialogue prompt for turns where tool calls produced results.

    Callers with an empty result list must use the without_results
    builder instead.
    """
    if not results:
        raise ValueError("with_results prompt requires at least one tool result")
    system = _fill(
        "with_results_system",
        {
            "role": conv.background.role,
            "personal": render_persona(conv.background.persona),
            "function_call_result": render_tool_results(results),
            "knowledge_info": render_knowledge_items(conv.background.knowledge.knowledge_info),
        },
    )
    user = _fill(
        "with_results_user",
        {"history": render_history(conv.turns), "query": current_query},
    )
    return PromptBundle(system=system, user=user, scenario=PromptScenario.WITH_RESULTS)


def build_without_results_prompt(conv: Conversation, current_query: str) -> PromptBundle:
    """Dialogue prompt for turns without tool results: worldview and
    persona, no item knowledge in the system prompt."""
    system = _fill(
        "without_results_system",
        {
            "role": conv.background.role,
            "state": render_state(conv.background.state),
            "personal": render_persona(conv.background.persona),
            "worldview": conv.background.worldview,
        },
    )
    user = _fill(
        "without_results_user",
        {"history": render_history(conv.turns), "query": current_query},
    )
    return PromptBundle(system=system, user=user, scenario=PromptScenario.WITHOUT_RESULTS)


@dataclass(frozen=True)
class WordLimitCheck:
    word_count: int
    within_limit: bool
    limit: int | None


def check_word_limit(response: str, scenario: PromptScenario) -> WordLimitCheck:
    """Advisory whitespace-token word count against the scenario's limit.

    Limits live in the prompt instructions; nothing is truncated here.
    """
    limits = {
        PromptScenario.WITH_RESULTS: WORD_LIMIT_WITH_RESULTS,
        PromptScenario.WITHOUT_RESULTS: WORD_LIMIT_WITHOUT_RESULTS,
    }
    limit = limits.get(scenario)
    count = len(response.split())
    return WordLimitCheck(word_count=count, within_limit=(limit is None or count <= limit), limit=limit)
