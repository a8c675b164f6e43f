"""Command-line entry points.

Subcommands: chat, eval, fuse, synth, validate, serve. Failures exit
nonzero with a machine-readable JSON error on stderr.
"""

from __future__ import annotations

import functools
import json
import sys

import click

from .backend import load_profile
from .dialogue import load_dataset, save_dataset, validate_conversation
from .evaluation import run_eval
from .functions import load_registry
from .fusion import FusionPlan, average_checkpoints, write_checkpoint
from .prompts import PromptScenario
from .router import RunSettings, Session
from .service import load_service_config, serve
from .synthesis import (
    SynthesisJob,
    SynthesisStrategy,
    backend_model_name,
    emit_training_examples,
    synthesize,
    write_training_examples,
)
from .backend import AdapterId, GenerationParams


def _fail(exc: BaseException, code: int = 1):
    click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
    sys.exit(code)


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.Abort, SystemExit):
            raise
        except Exception as exc:
            _fail(exc)

    return wrapper


@click.group()
def main():
    """NPC dialogue pipeline: chat, evaluate, fuse adapters, synthesize data."""


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--registry", required=True, type=click.Path(exists=True))
@cli_errors
def validate(dataset, registry):
    """Validate a dataset against a function registry."""
    reg = load_registry(registry)
    conversations = load_dataset(dataset)
    findings = []
    for conv in conversations:
        report = validate_conversation(conv, reg)
        findings.extend({"conversation": conv.id, **f.to_json_dict()} for f in report.findings)
    if findings:
        click.echo(json.dumps({"error": "ValidationFailed", "findings": findings}), err=True)
        sys.exit(1)
    click.echo(f"ok: {len(conversations)} conversations, {len(reg)} function lists")


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", required=True, type=click.Path(exists=True))
@click.option("--profile", required=True, type=click.Path(exists=True))
@click.option("--conversation", "conversation_id", required=True)
@click.option("--trace", is_flag=True, help="Print tool calls between query and response.")
@cli_errors
def chat(dataset, registry_path, profile, conversation_id, trace):
    """Interactive terminal chat against one conversation's NPC."""
    conversations = load_dataset(dataset)
    by_id = {c.id: c for c in conversations}
    if conversation_id not in by_id:
        raise click.ClickException(
            f"unknown conversation {conversation_id!r}; available: {', '.join(sorted(by_id))}"
        )
    registry = load_registry(registry_path)
    backend = load_profile(profile)
    conv = by_id[conversation_id]
    session = Session(conv.with_turns(()), backend, registry)
    persona = conv.background.persona
    click.echo(f"[{persona.name}, {persona.occupation} — {conv.background.state.location}]")
    while True:
        try:
            line = input("player> ")
        except EOFError:
            break
        line = line.strip()
        if not line:
            continue
        outcome = session.run_turn(line)
        if trace:
            for result in outcome.results:
                click.echo(
                    f"  [tool] {result.call.name}({json.dumps(result.call.parameters, ensure_ascii=False)})"
                    f" -> {result.status.value}"
                )
        click.echo(f"npc> {outcome.response}")


@main.command(name="eval")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", required=True, type=click.Path(exists=True))
@click.option("--profile", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--trace-log", type=click.Path(), default=None)
@cli_errors
def eval_cmd(dataset, registry_path, profile, out, trace_log):
    """Replay the dataset through the pipeline and write a score report."""
    conversations = load_dataset(dataset)
    registry = load_registry(registry_path)
    backend = load_profile(profile)
    report = run_eval(conversations, backend, registry, report_path=out, trace_path=trace_log)
    tasks = report["tasks"]
    click.echo(f"{'':12}{'Task3':>8}{'Task1':>8}{'Task2':>8}")
    click.echo(
        f"{'automatic':12}{_fmt(tasks['task3']):>8}{_fmt(tasks['task1']):>8}{_fmt(tasks['task2']):>8}"
    )
    click.echo(f"report -> {out}")


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.3f}"


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--weights", default=None, help="Comma-separated weights summing to 1 (uniform default).")
@cli_errors
def fuse(inputs, out, weights):
    """Average LoRA adapter checkpoints element-wise."""
    parsed_weights = tuple(float(w) for w in weights.split(",")) if weights else None
    plan = FusionPlan(inputs=tuple(inputs), weights=parsed_weights, output=out)
    fused = average_checkpoints(plan)
    write_checkpoint(fused, out)
    click.echo(f"fused {len(inputs)} checkpoints ({len(fused.tensors)} tensors) -> {out}")


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--profile", required=True, type=click.Path(exists=True))
@click.option(
    "--strategy",
    type=click.Choice([s.value for s in SynthesisStrategy]),
    default=SynthesisStrategy.SEQUENTIAL_REPLACE.value,
)
@click.option("--out", required=True, type=click.Path())
@click.option("--examples-out", type=click.Path(), default=None)
@click.option(
    "--scenario",
    type=click.Choice([PromptScenario.WITHOUT_RESULTS.value, PromptScenario.WITH_RESULTS.value]),
    default=PromptScenario.WITHOUT_RESULTS.value,
)
@click.option("--temperature", type=float, default=0.1, show_default=True)
@click.option("--top-p", type=float, default=0.95, show_default=True)
@cli_errors
def synth(dataset, profile, strategy, out, examples_out, scenario, temperature, top_p):
    """Regenerate assistant turns through a backend and emit training data."""
    conversations = load_dataset(dataset)
    backend = load_profile(profile)
    job = SynthesisJob(
        source=tuple(conversations),
        strategy=SynthesisStrategy(strategy),
        backend=backend,
        params=GenerationParams(temperature=temperature, top_p=top_p),
        scenario=PromptScenario(scenario),
    )
    synthesized = synthesize(job)
    save_dataset(synthesized, out)
    click.echo(f"synthesized {len(synthesized)}/{len(conversations)} conversations -> {out}")
    if examples_out:
        examples = emit_training_examples(
            synthesized,
            job.scenario,
            strategy=job.strategy,
            model_name=backend_model_name(backend, AdapterId.DIALOGUE_WITHOUT_RESULTS),
        )
        write_training_examples(examples, examples_out)
        click.echo(f"wrote {len(examples)} training examples -> {examples_out}")


@main.command(name="serve")
@click.option("--config", required=True, type=click.Path(exists=True))
@cli_errors
def serve_cmd(config):
    """Start the HTTP session service."""
    serve(load_service_config(config))


if __name__ == "__main__":
    main()
