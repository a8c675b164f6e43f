import threading

import pytest

from helpers import make_conv, make_function_list, npc, player
from npckit.backend import AdapterId, BackendError, FnBackend, GenerationRequest, MockBackend, MockRule
from npckit.dialogue import Speaker
from npckit.functions import Registry, ToolResult, ToolStatus
from npckit.hermes import ToolCall
from npckit.prompts import PromptScenario
from npckit.router import (
    ConcurrentTurnError,
    RunSettings,
    Session,
    TurnExecutionError,
    classify_scenario,
    run_conversation,
)


def _registry():
    return Registry([make_function_list()])


def _mock(tool_output: str, response: str = "scripted reply") -> MockBackend:
    return MockBackend(
        rules=[
            MockRule(output=tool_output, adapter=AdapterId.TOOL_CALL),
            MockRule(output=response, adapter=AdapterId.DIALOGUE_WITH_RESULTS),
            MockRule(output=response, adapter=AdapterId.DIALOGUE_WITHOUT_RESULTS),
        ]
    )


def _call_text(name: str, **params) -> str:
    from npckit.hermes import render_tool_call

    return render_tool_call(ToolCall(name=name, parameters=params))


class TestClassifyScenario:
    def test_empty_is_without(self):
        assert classify_scenario([]) is PromptScenario.WITHOUT_RESULTS

    def test_ok_result_is_with(self):
        result = ToolResult(call=ToolCall(name="x"), status=ToolStatus.OK, payload=1)
        assert classify_scenario([result]) is PromptScenario.WITH_RESULTS

    def test_not_found_counts_by_default(self):
        result = ToolResult(call=ToolCall(name="x"), status=ToolStatus.NOT_FOUND, payload=None)
        assert classify_scenario([result]) is PromptScenario.WITH_RESULTS

    def test_strict_mode_counts_only_ok(self):
        miss = ToolResult(call=ToolCall(name="x"), status=ToolStatus.NOT_FOUND, payload=None)
        hit = ToolResult(call=ToolCall(name="x"), status=ToolStatus.OK, payload=1)
        assert classify_scenario([miss], strict=True) is PromptScenario.WITHOUT_RESULTS
        assert classify_scenario([miss, hit], strict=True) is PromptScenario.WITH_RESULTS


class TestRoutingMatrix:
    """No call / valid call / invalid call / not_found call, per the routing rule."""

    def test_no_call(self):
        backend = _mock("I will not call anything today.")
        session = Session(make_conv(), backend, _registry())
        outcome = session.run_turn("hello")
        assert outcome.scenario is PromptScenario.WITHOUT_RESULTS
        assert outcome.parsed_calls == ()
        assert outcome.results == ()
        adapters = [r.adapter for r in backend.requests]
        assert adapters == [AdapterId.TOOL_CALL, AdapterId.DIALOGUE_WITHOUT_RESULTS]

    def test_valid_call_on_known_item(self):
        backend = _mock(_call_text("get_item_info", item="Iron Sword"))
        session = Session(make_conv(items=("Iron Sword",)), backend, _registry())
        outcome = session.run_turn("check the sword")
        assert outcome.scenario is PromptScenario.WITH_RESULTS
        assert len(outcome.results) == 1
        assert outcome.results[0].status is ToolStatus.OK
        adapters = [r.adapter for r in backend.requests]
        assert adapters == [AdapterId.TOOL_CALL, AdapterId.DIALOGUE_WITH_RESULTS]

    def test_invalid_call_dropped(self):
        backend = _mock(_call_text("enchant", item="Iron Sword"))
        session = Session(make_conv(), backend, _registry())
        outcome = session.run_turn("enchant it")
        assert outcome.scenario is PromptScenario.WITHOUT_RESULTS
        assert len(outcome.parsed_calls) == 1
        assert outcome.valid_calls == ()
        assert outcome.results == ()
        adapters = [r.adapter for r in backend.requests]
        assert adapters == [AdapterId.TOOL_CALL, AdapterId.DIALOGUE_WITHOUT_RESULTS]

    def test_not_found_call_routes_with_results(self):
        backend = _mock(_call_text("get_item_info", item="Vorpal Blade"))
        session = Session(make_conv(items=("Iron Sword",)), backend, _registry())
        outcome = session.run_turn("got a vorpal blade?")
        assert outcome.scenario is PromptScenario.WITH_RESULTS
        assert outcome.results[0].status is ToolStatus.NOT_FOUND

    def test_not_found_with_strict_results_routes_without(self):
        backend = _mock(_call_text("get_item_info", item="Vorpal Blade"))
        session = Session(
            make_conv(items=("Iron Sword",)),
            backend,
            _registry(),
            RunSettings(strict_results=True),
        )
        outcome = session.run_turn("got a vorpal blade?")
        assert outcome.scenario is PromptScenario.WITHOUT_RESULTS
        assert [r.adapter for r in backend.requests][-1] is AdapterId.DIALOGUE_WITHOUT_RESULTS


class TestTurnMechanics:
    def test_turns_appended_in_order(self):
        backend = _mock("no call", response="a fine day to you")
        session = Session(make_conv(), backend, _registry())
        session.run_turn("hello there")
        turns = session.conversation.turns
        assert [t.speaker for t in turns] == [Speaker.PLAYER, Speaker.NPC]
        assert turns[0].text == "hello there"
        assert turns[1].text == "a fine day to you"

    def test_npc_turn_carries_calls_and_results(self):
        backend = _mock(_call_text("sell", item="Iron Sword", quantity=1))
        session = Session(make_conv(items=("Iron Sword",)), backend, _registry())
        session.run_turn("sell me the sword")
        npc_turn = session.conversation.turns[1]
        assert npc_turn.tool_calls == (ToolCall(name="sell", parameters={"item": "Iron Sword", "quantity": 1}),)
        assert npc_turn.tool_results[0].payload["action"] == "sell"

    def test_empty_query_rejected(self):
        session = Session(make_conv(), _mock("x"), _registry())
        with pytest.raises(ValueError):
            session.run_turn("")

    def test_backend_failure_aborts_without_appending(self):
        def boom(request):
            raise BackendError("backend down", request.adapter)

        session = Session(make_conv(), FnBackend(boom), _registry())
        with pytest.raises(TurnExecutionError) as err:
            session.run_turn("hello")
        assert err.value.stage == "tool_call"
        assert session.conversation.turns == ()

    def test_stage_two_failure_aborts_without_appending(self):
        def fail_on_dialogue(request):
            if request.adapter is AdapterId.TOOL_CALL:
                return "nothing"
            raise BackendError("dialogue adapter down", request.adapter)

        session = Session(make_conv(), FnBackend(fail_on_dialogue), _registry())
        with pytest.raises(TurnExecutionError) as err:
            session.run_turn("hello")
        assert err.value.stage == "response"
        assert err.value.adapter is AdapterId.DIALOGUE_WITHOUT_RESULTS
        assert session.conversation.turns == ()

    def test_timings_and_soft_deadline(self):
        backend = _mock("no call")
        session = Session(make_conv(), backend, _registry(), RunSettings(turn_deadline=0.0))
        outcome = session.run_turn("hi")
        assert outcome.deadline_exceeded  # zero-second budget always overruns
        assert set(outcome.timings) == {"tool_call", "execute", "response", "total"}

        relaxed = Session(make_conv(), _mock("no call"), _registry())
        assert not relaxed.run_turn("hi").deadline_exceeded

    def test_unknown_function_list_fails_at_session_start(self):
        from npckit.functions import RegistryError

        with pytest.raises(RegistryError):
            Session(make_conv(function_list_id="fl_missing"), _mock("x"), _registry())

    def test_one_in_flight_turn_enforced(self):
        gate = threading.Event()
        entered = threading.Event()

        def slow(request):
            if request.adapter is AdapterId.TOOL_CALL:
                entered.set()
                gate.wait(timeout=5)
            return "no call"

        session = Session(make_conv(), FnBackend(slow), _registry())
        worker = threading.Thread(target=lambda: session.run_turn("first"))
        worker.start()
        try:
            assert entered.wait(timeout=5)
            with pytest.raises(ConcurrentTurnError):
                session.run_turn("second")
        finally:
            gate.set()
            worker.join(timeout=5)
        assert [t.text for t in session.conversation.turns] == ["first", "no call"]

    def test_history_truncation_keeps_alternation(self):
        backend = _mock("no call")
        conv = make_conv(
            turns=[player("q1"), npc("a1"), player("q2"), npc("a2"), player("q3"), npc("a3")]
        )
        session = Session(conv, backend, _registry(), RunSettings(max_history_turns=3))
        session.run_turn("q4")
        stage1_user = backend.requests[0].user
        assert "User: q3" in stage1_user
        assert "NPC: a2" not in stage1_user  # trimmed window starts on a player turn
        assert "User: q1" not in stage1_user


class TestSessionIsolation:
    def test_interleaved_sessions_match_serial(self):
        def run_interleaved():
            b1, b2 = _mock("no call", "r1"), _mock("no call", "r2")
            s1 = Session(make_conv(conv_id="c1"), b1, _registry())
            s2 = Session(make_conv(conv_id="c2"), b2, _registry())
            s1.run_turn("one")
            s2.run_turn("uno")
            s1.run_turn("two")
            s2.run_turn("dos")
            return [t.text for t in s1.conversation.turns], [t.text for t in s2.conversation.turns]

        def run_serial():
            b1, b2 = _mock("no call", "r1"), _mock("no call", "r2")
            s1 = Session(make_conv(conv_id="c1"), b1, _registry())
            s1.run_turn("one")
            s1.run_turn("two")
            s2 = Session(make_conv(conv_id="c2"), b2, _registry())
            s2.run_turn("uno")
            s2.run_turn("dos")
            return [t.text for t in s1.conversation.turns], [t.text for t in s2.conversation.turns]

        assert run_interleaved() == run_serial()


class TestRunConversation:
    def test_three_player_turns_three_outcomes(self, fixture_conversations, fixture_registry, gold_echo_backend):
        conv2 = fixture_conversations[1]
        outcomes = run_conversation(conv2, gold_echo_backend, fixture_registry)
        assert len(outcomes) == 3

    def test_deterministic_outcomes(self, fixture_conversations, fixture_registry, fixtures_dir):
        from npckit.backend import load_profile

        conv = fixture_conversations[0]

        def run_once():
            backend = load_profile(fixtures_dir / "profile_mock.json")
            outs = run_conversation(conv, backend, fixture_registry)
            return [(o.scenario, o.response, o.valid_calls) for o in outs]

        assert run_once() == run_once()

    def test_predicted_history_feeds_forward(self):
        """Turn k's stage-1 prompt contains the predicted k-1 response, not gold."""
        conv = make_conv(
            turns=[player("first question"), npc("GOLD ANSWER ONE"), player("second question"), npc("GOLD TWO")]
        )
        backend = _mock("no call", response="PREDICTED ANSWER")
        outcomes = run_conversation(conv, backend, _registry())
        assert len(outcomes) == 2
        stage1_requests = backend.requests_for(AdapterId.TOOL_CALL)
        second_prompt = stage1_requests[1].user
        assert "PREDICTED ANSWER" in second_prompt
        assert "GOLD ANSWER ONE" not in second_prompt

    def test_abort_carries_turn_index(self):
        conv = make_conv(turns=[player("q1"), npc("a1"), player("q2"), npc("a2")])
        calls = {"n": 0}

        def fail_second(request):
            if request.adapter is AdapterId.TOOL_CALL:
                calls["n"] += 1
                if calls["n"] == 2:
                    raise BackendError("nope", request.adapter)
            return "no call"

        with pytest.raises(TurnExecutionError, match="turn 1"):
            run_conversation(conv, FnBackend(fail_second), _registry())


class TestOutcomeSerialization:
    def test_outcome_json_round_trips(self):
        import json

        backend = _mock(_call_text("get_item_info", item="Iron Sword"))
        session = Session(make_conv(items=("Iron Sword",)), backend, _registry())
        outcome = session.run_turn("check it")
        payload = json.loads(json.dumps(outcome.to_json_dict()))
        assert payload["scenario"] == "with_results"
        assert payload["valid_calls"] == [{"name": "get_item_info", "parameters": {"item": "Iron Sword"}}]
        assert payload["results"][0]["status"] == "ok"

    def test_write_trace_jsonl(self, tmp_path):
        import json

        from npckit.router import write_trace

        backend = _mock("no call")
        session = Session(make_conv(), backend, _registry())
        outcomes = [session.run_turn("one"), session.run_turn("two")]
        path = tmp_path / "trace.jsonl"
        write_trace(outcomes, path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 2
        assert json.loads(lines[0])["scenario"] == "without_results"
