"""Common utilities for CLI commands.

Shared console, the exception-to-exit-code mapping, and the config/vocabulary
resolution every run command goes through.
"""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import typer
from rich.console import Console
from rich.markup import escape

from memt5.autograd import set_debug_checks
from memt5.config import RunConfig, apply_overrides, load_run_config
from memt5.exceptions import (
    CheckpointError,
    ConfigurationError,
    DataError,
    MemT5Error,
    NumericalError,
    TokenizerError,
    VerificationError,
)
from memt5.presets import get_preset
from memt5.settings import configure_logging, get_settings
from memt5.tokenizer import Vocab

# Shared console instance
console = Console()

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_VERIFICATION = 4


def exit_code_for(exc: BaseException) -> int:
    """Process exit code for a library exception."""
    if isinstance(exc, VerificationError):
        return EXIT_VERIFICATION
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, CheckpointError, TokenizerError)):
        return EXIT_DATA
    return EXIT_USAGE


@contextmanager
def handle_errors() -> Iterator[None]:
    """Print library errors in red and exit with the mapped code."""
    try:
        yield
    except MemT5Error as exc:
        console.print(f"[red]{type(exc).__name__}: {escape(str(exc))}[/red]")
        raise typer.Exit(exit_code_for(exc)) from exc


def apply_settings() -> None:
    """Install logging and the autograd debug checks from the environment settings."""
    settings = get_settings()
    configure_logging(settings)
    set_debug_checks(settings.debug_checks)


def config_keys_help() -> str:
    """Help epilog listing every dotted config key accepted by ``--set``."""
    keys = RunConfig.flat_keys()
    return "Config keys (--set KEY=VALUE): " + ", ".join(keys)


def resolve_run_config(
    config: Path | None,
    preset: str | None,
    overrides: list[str] | None,
) -> RunConfig:
    """Run config from exactly one of ``--config``/``--preset``, with overrides applied."""
    if config is not None and preset is not None:
        raise ConfigurationError("pass either --config or --preset, not both")
    if config is not None:
        run = load_run_config(config)
    elif preset is not None:
        run = get_preset(preset)
    else:
        raise ConfigurationError("one of --config or --preset is required")
    return apply_overrides(run, overrides or [])


def load_vocab(run: RunConfig, vocab_path: Path | None = None) -> Vocab:
    path = vocab_path or run.vocab_path
    if path is None:
        raise ConfigurationError("vocab_path is required (set it in the config or pass --vocab)")
    return Vocab.load(path)
