"""Verification commands for the memt5 CLI.

``verify`` and ``gradcheck`` write an oracle report CSV and exit with code 4
when any case fails; ``dump-attention`` exports the encoder mask.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from pathlib import Path
from typing import Annotated

import typer
from rich.table import Table

from memt5.cli.common import apply_settings, console, handle_errors, resolve_run_config
from memt5.exceptions import VerificationError
from memt5.settings import get_settings
from memt5.verification import (
    REPORTS_FILENAME,
    OracleReport,
    dump_attention,
    run_gradcheck_suite,
    run_verification_suite,
    write_reports,
)

OutOpt = Annotated[
    Path | None,
    typer.Option("--out", "-o", help="Output directory (default: <output_root>/verify)"),
]


def _output_dir(out: Path | None) -> Path:
    return out if out is not None else get_settings().output_root / "verify"


def _report(reports: Sequence[OracleReport], out_dir: Path, title: str) -> None:
    path = out_dir / REPORTS_FILENAME
    write_reports(reports, path)
    failed = [r for r in reports if not r.passed]

    table = Table(title=title)
    table.add_column("Case", style="cyan")
    table.add_column("Max Rel Diff", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Status")
    for report in failed or reports:
        status = "[green]pass[/green]" if report.passed else "[red]FAIL[/red]"
        table.add_row(
            report.case_id, f"{report.max_rel_diff:.3e}", f"{report.tolerance:g}", status
        )
    console.print(table)
    console.print(f"Report written to {path}")

    if failed:
        raise VerificationError(
            f"{len(failed)} of {len(reports)} cases failed: "
            + ", ".join(r.case_id for r in failed[:5])
        )
    console.print(f"[green]All {len(reports)} cases passed[/green]")


def verify(
    out: OutOpt = None,
    seed: Annotated[int, typer.Option("--seed", min=0, help="Seed for random instances")] = 0,
    draws: Annotated[
        int, typer.Option("--draws", help="Random weight draws for the reduction check")
    ] = 20,
) -> None:
    """Oracle equivalence, baseline reduction, attention cost and reachability checks."""
    apply_settings()
    with handle_errors():
        with console.status("Verifying...") as status:
            reports = run_verification_suite(
                seed,
                reduction_draws=draws,
                progress=lambda stage: status.update(f"Verifying {stage}..."),
            )
        _report(reports, _output_dir(out), "Verification")


def gradcheck(
    full: Annotated[
        bool, typer.Option("--full", help="Also check every model variant end to end")
    ] = False,
    out: OutOpt = None,
    seed: Annotated[int, typer.Option("--seed", min=0, help="Seed for random instances")] = 0,
) -> None:
    """Central finite-difference gradient checks (float64, dropout off)."""
    apply_settings()
    with handle_errors():
        with console.status("Checking gradients..."):
            reports = run_gradcheck_suite(full=full, seed=seed)
        _report(reports, _output_dir(out), "Gradient Checks")


def dump_attention_cmd(
    out: Annotated[Path, typer.Option("--out", "-o", help="Directory for the CSV and JSON")],
    config: Annotated[
        Path | None, typer.Option("--config", "-c", help="Run config file (.json, .yaml)")
    ] = None,
    preset: Annotated[str | None, typer.Option("--preset", "-p", help="Named preset")] = None,
    overrides: Annotated[
        list[str] | None, typer.Option("--set", "-s", help="Config override KEY=VALUE")
    ] = None,
) -> None:
    """Write the encoder attention mask (0/1 CSV) and its cost summary (JSON)."""
    apply_settings()
    with handle_errors():
        model = resolve_run_config(config, preset, overrides).model
        summary = dump_attention(model.n_chunks, model.chunk_len, model.mem_tokens, out)
    console.print_json(json.dumps(summary))
