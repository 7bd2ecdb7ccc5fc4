"""Tokenizer commands for the memt5 CLI."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated

import typer
from rich.table import Table

from memt5.cli.common import apply_settings, console, handle_errors
from memt5.data.corpus import iter_documents
from memt5.tokenizer import train_tokenizer


def train_tokenizer_cmd(
    corpus: Annotated[
        list[Path],
        typer.Option("--corpus", "-c", help="Corpus text file (repeatable)"),
    ],
    out: Annotated[Path, typer.Option("--out", "-o", help="Vocabulary file to write")],
    vocab_size: Annotated[
        int, typer.Option("--vocab-size", help="Total vocabulary size, specials included")
    ] = 32000,
) -> None:
    """Train a byte-level BPE vocabulary on one or more corpus files."""
    apply_settings()
    with handle_errors():
        with console.status(f"Training {vocab_size}-token vocabulary..."):
            vocab = train_tokenizer(iter_documents(corpus), vocab_size=vocab_size)
        vocab.save(out)

    table = Table(title="Vocabulary")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Vocab Size", f"{vocab.vocab_size:,}")
    table.add_row("Merges", f"{len(vocab.merges):,}")
    table.add_row("Fingerprint", vocab.fingerprint()[:16])
    table.add_row("Written To", str(out))
    console.print(table)
