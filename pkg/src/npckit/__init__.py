"""npckit: scenario-routed NPC dialogue pipeline.

A game NPC answers each player turn in two stages: a tool-call stage
(Hermes-format function calling against a per-conversation function
subset) and a response stage routed to one of two dialogue adapters by
whether the tool stage yielded results. The package also ships the
supporting LoRA checkpoint fusion tool, the dialogue data synthesis
driver, an evaluation harness, a CLI, and an HTTP session service.
"""

from .backend import (
    AdapterId,
    BackendError,
    BackendProfile,
    GenerationParams,
    GenerationRequest,
    HttpBackend,
    MockBackend,
    load_profile,
)
from .dialogue import (
    Background,
    Conversation,
    DatasetError,
    ItemKnowledge,
    Knowledge,
    Persona,
    Speaker,
    StateInfo,
    Turn,
    load_dataset,
    save_dataset,
    validate_conversation,
)
from .evaluation import function_score, run_eval, score_task1, score_task2, score_task3, text_similarity
from .functions import (
    FunctionKind,
    FunctionList,
    FunctionSpec,
    Registry,
    RegistryError,
    ToolResult,
    ToolStatus,
    execute_tool,
    load_registry,
    validate_call,
)
from .fusion import (
    AdapterCheckpoint,
    AdapterMetadata,
    FusionPlan,
    Tensor,
    average_checkpoints,
    check_compatible,
    read_checkpoint,
    write_checkpoint,
)
from .hermes import ToolCall, parse_tool_calls, render_tool_call, render_tool_results, render_tools_block
from .prompts import (
    PromptBundle,
    PromptScenario,
    build_function_call_prompt,
    build_with_results_prompt,
    build_without_results_prompt,
    check_word_limit,
    render_history,
)
from .router import RunSettings, Session, TurnOutcome, classify_scenario, run_conversation
from .synthesis import (
    SynthesisJob,
    SynthesisStrategy,
    emit_training_examples,
    synthesize_sequential,
    synthesize_whole_history,
)

__version__ = "0.1.0"
