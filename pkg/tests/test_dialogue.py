import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_background, make_conv, npc, player
from npckit.dialogue import (
    Conversation,
    DatasetError,
    ItemKnowledge,
    Knowledge,
    Speaker,
    Turn,
    conversation_from_json_dict,
    conversation_to_json_dict,
    load_dataset,
    save_dataset,
    validate_conversation,
)
from npckit.functions import Registry, ToolResult, ToolStatus
from npckit.hermes import ToolCall

from helpers import make_function_list


class TestTypeInvariants:
    def test_player_turn_with_calls_rejected(self):
        with pytest.raises(DatasetError):
            Turn(speaker=Speaker.PLAYER, text="hi", tool_calls=(ToolCall(name="sell"),))

    def test_npc_first_turns_rejected(self):
        with pytest.raises(DatasetError, match="turn alternation violated"):
            make_conv(turns=[npc("hello")])

    def test_same_speaker_twice_rejected(self):
        with pytest.raises(DatasetError, match="turn alternation violated"):
            make_conv(turns=[player("hi"), player("hi again")])

    def test_trailing_player_turn_allowed(self):
        conv = make_conv(turns=[player("hi"), npc("hello"), player("bye")])
        assert len(conv.turns) == 3


class TestLoadDataset:
    def test_fixture_order_preserved(self, fixtures_dir):
        convs = load_dataset(fixtures_dir / "conversations.json")
        assert [c.id for c in convs] == ["conv_001", "conv_002", "conv_003", "conv_004", "conv_005"]

    def test_twenty_items_load_intact(self, fixture_conversations):
        for conv in fixture_conversations:
            assert len(conv.background.knowledge.knowledge_info) == 20

    def test_npc_first_file_errors(self, tmp_path):
        data = [conversation_to_json_dict(make_conv(turns=[player("hi"), npc("yo")]))]
        data[0]["turns"] = data[0]["turns"][::-1]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        with pytest.raises(DatasetError, match="turn alternation violated"):
            load_dataset(path)

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('[\n  {"id": }\n]')
        with pytest.raises(DatasetError, match="line 2"):
            load_dataset(path)

    def test_missing_background_field_names_conversation(self, tmp_path):
        data = [conversation_to_json_dict(make_conv(conv_id="conv_x"))]
        del data[0]["background"]["worldview"]
        path = tmp_path / "missing.json"
        path.write_text(json.dumps(data))
        with pytest.raises(DatasetError, match="conv_x.*worldview"):
            load_dataset(path)

    def test_duplicate_item_rejected_at_load(self, tmp_path):
        data = [conversation_to_json_dict(make_conv(conv_id="conv_dup"))]
        items = data[0]["background"]["knowledge"]["knowledge_info"]
        items.append(dict(items[0]))
        path = tmp_path / "dup.json"
        path.write_text(json.dumps(data))
        with pytest.raises(DatasetError, match="duplicate knowledge item"):
            load_dataset(path)


class TestRoundTrip:
    def test_fixture_round_trip(self, fixture_conversations, tmp_path):
        out = tmp_path / "roundtrip.json"
        save_dataset(fixture_conversations, out)
        again = load_dataset(out)
        assert again == fixture_conversations

    def test_persona_extras_survive(self, tmp_path):
        conv = make_conv()
        raw = conversation_to_json_dict(conv)
        raw["background"]["persona"]["festival_memory"] = "won the pie contest"
        loaded = conversation_from_json_dict(raw)
        assert loaded.background.persona.extras["festival_memory"] == "won the pie contest"
        again = conversation_from_json_dict(conversation_to_json_dict(loaded))
        assert again == loaded

    def test_tool_turns_round_trip(self, tmp_path):
        call = ToolCall(name="get_item_info", parameters={"item": "Iron Sword"})
        conv = make_conv(
            turns=[
                player("check the sword"),
                npc(
                    "here it is",
                    tool_calls=(call,),
                    tool_results=(ToolResult(call=call, status=ToolStatus.OK, payload={"name": "Iron Sword"}),),
                ),
            ]
        )
        out = tmp_path / "tools.json"
        save_dataset([conv], out)
        assert load_dataset(out) == [conv]


@given(
    queries=st.lists(st.text(min_size=1, max_size=30), min_size=1, max_size=4),
    extras=st.dictionaries(
        st.text(min_size=1, max_size=8).filter(
            lambda k: k not in ("name", "age", "gender", "occupation", "appearance")
        ),
        st.text(max_size=12),
        max_size=3,
    ),
)
@settings(max_examples=60)
def test_round_trip_property(queries, extras):
    turns = []
    for q in queries:
        turns.append(player(q))
        turns.append(npc("reply to " + q))
    conv = make_conv(turns=turns)
    raw = conversation_to_json_dict(conv)
    raw["background"]["persona"].update(extras)
    loaded = conversation_from_json_dict(raw)
    assert conversation_from_json_dict(conversation_to_json_dict(loaded)) == loaded


class TestValidateConversation:
    def test_valid_fixture_clean(self, fixture_conversations, fixture_registry):
        for conv in fixture_conversations:
            assert validate_conversation(conv, fixture_registry).clean

    def test_unknown_function_list(self, test_registry):
        conv = make_conv(function_list_id="fl_999")
        report = validate_conversation(conv, test_registry)
        assert [f.kind for f in report.findings] == ["unresolvable_function_list"]
        assert "unresolvable function list" in report.findings[0].message

    def test_duplicate_item_finding(self, test_registry):
        # Built in memory: the loader would reject this file outright.
        conv = make_conv()
        dup_item = ItemKnowledge(name="Iron Sword", item_type="sword", description="again")
        knowledge = Knowledge(
            general_info=conv.background.knowledge.general_info,
            knowledge_info=conv.background.knowledge.knowledge_info + (dup_item,),
        )
        import dataclasses

        conv = dataclasses.replace(
            conv, background=dataclasses.replace(conv.background, knowledge=knowledge)
        )
        report = validate_conversation(conv, test_registry)
        assert "duplicate knowledge item" in " ".join(f.message for f in report.findings)


def test_background_equality_preserved_by_pipeline(fixture_conversations, fixture_registry, gold_echo_backend):
    from npckit.router import run_conversation

    conv = fixture_conversations[0]
    before = conv.background
    run_conversation(conv, gold_echo_backend, fixture_registry)
    assert conv.background == before
    assert conv.background is before  # never copied, never mutated
