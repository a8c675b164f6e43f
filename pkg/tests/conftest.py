from pathlib import Path

import pytest

from npckit.backend import load_profile
from npckit.dialogue import load_dataset
from npckit.functions import Registry, load_registry
from npckit.hermes import ToolCall

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_conversations():
    return load_dataset(FIXTURES / "conversations.json")


@pytest.fixture(scope="session")
def fixture_registry() -> Registry:
    return load_registry(FIXTURES / "registry.json")


@pytest.fixture
def gold_echo_backend():
    """Fresh scripted mock that replays the fixtures' gold calls/replies."""
    return load_profile(FIXTURES / "profile_mock.json")


@pytest.fixture
def test_registry():
    from helpers import make_function_list

    return Registry([make_function_list()])


def make_call(name: str, **params) -> ToolCall:
    return ToolCall(name=name, parameters=params)
