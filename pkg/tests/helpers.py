"""Small factories shared across test modules."""

from __future__ import annotations

from npckit.dialogue import (
    Background,
    Conversation,
    GeneralInfoSection,
    ItemKnowledge,
    Knowledge,
    Persona,
    Speaker,
    StateInfo,
    Turn,
)
from npckit.functions import FunctionKind, FunctionList, FunctionSpec, ParameterSchema, ParamSpec


def make_items(*names: str) -> tuple[ItemKnowledge, ...]:
    return tuple(
        ItemKnowledge(name=n, item_type="sword", description=f"A test blade called {n}.") for n in names
    )


def make_background(
    worldview: str = "A quiet test realm where coin is counted in buttons.",
    items=("Iron Sword", "Oak Staff"),
    role: str = "You keep a small test stall.",
    location: str = "test square",
) -> Background:
    return Background(
        worldview=worldview,
        persona=Persona(
            name="Testa Smith",
            age="40",
            gender="female",
            occupation="stall keeper",
            appearance="chalk-dusted apron",
        ),
        role=role,
        knowledge=Knowledge(
            general_info=(GeneralInfoSection(title="Notes", text="Blades rust; oil them."),),
            knowledge_info=make_items(*items),
        ),
        state=StateInfo(location=location, time="noon", weather="clear"),
    )


def make_conv(
    conv_id: str = "conv_t1",
    function_list_id: str = "fl_test",
    turns=(),
    **background_kwargs,
) -> Conversation:
    return Conversation(
        id=conv_id,
        background=make_background(**background_kwargs),
        function_list_id=function_list_id,
        turns=tuple(turns),
    )


def player(text: str) -> Turn:
    return Turn(speaker=Speaker.PLAYER, text=text)


def npc(text: str, tool_calls=(), tool_results=()) -> Turn:
    return Turn(speaker=Speaker.NPC, text=text, tool_calls=tuple(tool_calls), tool_results=tuple(tool_results))


def make_function_list(list_id: str = "fl_test") -> FunctionList:
    return FunctionList(
        id=list_id,
        functions=(
            FunctionSpec(
                name="get_item_info",
                kind=FunctionKind.TOOL,
                description="Look up an item.",
                parameters=ParameterSchema(
                    properties={"item": ParamSpec(type="string", description="Item name.")},
                    required=("item",),
                ),
            ),
            FunctionSpec(
                name="sell",
                kind=FunctionKind.ACTION,
                description="Sell an item.",
                parameters=ParameterSchema(
                    properties={
                        "item": ParamSpec(type="string", description="Item name."),
                        "quantity": ParamSpec(type="integer", description="Count."),
                    },
                    required=("item",),
                ),
            ),
        ),
    )
