"""Info commands for the memt5 CLI.

Listing presets, showing settings, and aggregating finished runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated

import typer
from rich.table import Table

from memt5.cli.common import console, handle_errors
from memt5.presets import PRESETS, list_presets
from memt5.settings import get_settings
from memt5.training import summarize


def show_presets() -> None:
    """List the named run configurations."""
    table = Table(title=f"Presets ({len(PRESETS)} total)")
    table.add_column("Name", style="cyan")
    table.add_column("Task", style="green")
    table.add_column("Variant", style="yellow")
    table.add_column("Chunks", justify="right")
    table.add_column("Chunk Len", justify="right")
    table.add_column("Mem", justify="right")
    table.add_column("Optimizer", style="magenta")
    table.add_column("Schedule", style="magenta")
    table.add_column("Scale", style="blue")

    for name in list_presets():
        run = PRESETS[name]
        table.add_row(
            name,
            str(run.task),
            str(run.model.variant),
            str(run.model.n_chunks),
            str(run.model.chunk_len),
            str(run.model.mem_tokens),
            str(run.optimizer),
            str(run.schedule.kind),
            "desk" if run.scaled_down else "full",
        )
    console.print(table)


def show_settings() -> None:
    """Show the environment settings in effect."""
    settings = get_settings()

    table = Table(title="memt5 Settings")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Deterministic", str(settings.deterministic))
    table.add_row("Debug Checks", str(settings.debug_checks))
    table.add_row("Eval Workers", str(settings.effective_eval_workers))
    table.add_row("Output Root", str(settings.output_root))
    table.add_row("Log Level", settings.log_level)
    table.add_row("Log Format", settings.log_format)
    table.add_row("Log File", str(settings.log_file) if settings.log_file else "[dim]None[/dim]")
    console.print(table)


def summarize_runs(
    metrics: Annotated[list[Path], typer.Argument(help="metrics.csv files, one per run")],
    split: Annotated[str, typer.Option("--split", help="Split to aggregate")] = "valid",
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Write the summary row as CSV")
    ] = None,
) -> None:
    """Average final-epoch metrics across runs (e.g. two seeds of one preset)."""
    with handle_errors():
        frame = summarize(metrics, split=split)

    table = Table(title=f"Summary ({split}, {frame['runs'][0]} runs)")
    table.add_column("Metric", style="cyan")
    table.add_column("Mean", style="green", justify="right")
    row = frame.row(0, named=True)
    for key, value in row.items():
        if key in ("split", "runs") or value is None:
            continue
        table.add_row(key, f"{value:.4f}" if isinstance(value, float) else str(value))
    console.print(table)

    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = out.with_suffix(out.suffix + ".tmp")
        frame.write_csv(tmp)
        tmp.replace(out)
