"""
advkern CLI Commands

Helpers shared by the command modules: access to the run context, command
execution with exit-code mapping, and provenance for written files.
"""

from typing import Any, Callable, Dict, Optional, Union

import typer
from pydantic import BaseModel

from advkern.core.context import ContextManager, RunContext


def run_context(ctx: typer.Context) -> RunContext:
    """
    The RunContext created by the root callback.

    Raises:
        AttributeError: If the root callback did not run
    """
    if not isinstance(ctx.obj, RunContext):
        raise AttributeError(f"Invalid context type. Expected RunContext, got {type(ctx.obj)}")
    return ctx.obj


def execute(ctx: typer.Context, name: str, action: Callable[[RunContext], None]) -> None:
    """Run a command body and exit with its mapped code on failure."""
    run_ctx = run_context(ctx)
    code = ContextManager(run_ctx).run(name, lambda: action(run_ctx))
    if code:
        raise typer.Exit(code)


def column(value: Optional[str]) -> Optional[Union[int, str]]:
    """Column option: digits select by position, anything else by name."""
    if value is None:
        return None
    return int(value) if value.lstrip("-").isdigit() else value


def provenance(run_ctx: RunContext, name: str, config: BaseModel) -> Dict[str, Any]:
    return {
        "command": name,
        "seed": run_ctx.seed,
        "config_sha256": run_ctx.digest(name, config),
        "config": config.model_dump(mode="json"),
    }
