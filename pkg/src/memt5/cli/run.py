"""Training, evaluation and generation commands for the memt5 CLI."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated

import typer
from rich.markup import escape
from rich.table import Table

from memt5.cli.common import (
    apply_settings,
    console,
    handle_errors,
    load_vocab,
    resolve_run_config,
)
from memt5.config import RunConfig, dump_run_config
from memt5.exceptions import ConfigurationError
from memt5.model.memory import chunk_input
from memt5.model.seq2seq import Seq2SeqModel, greedy_decode
from memt5.tokenizer import EOS_ID
from memt5.training import (
    EvalResult,
    TrainSummary,
    build_dataset,
    load_checkpoint,
    load_model,
    load_task_data,
    train,
)
from memt5.training.loop import RESOLVED_CONFIG, check_checkpoint, check_vocab, evaluate_run

ConfigOpt = Annotated[
    Path | None, typer.Option("--config", "-c", help="Run config file (.json, .yaml)")
]
PresetOpt = Annotated[str | None, typer.Option("--preset", "-p", help="Named preset config")]
OverridesOpt = Annotated[
    list[str] | None,
    typer.Option("--set", "-s", help="Config override KEY=VALUE (repeatable, dotted keys)"),
]
VocabOpt = Annotated[
    Path | None, typer.Option("--vocab", help="Vocabulary file; defaults to vocab_path")
]
DryRunOpt = Annotated[
    bool, typer.Option("--dry-run", help="Print the resolved config and exit without training")
]


def _print_summary(summary: TrainSummary) -> None:
    table = Table(title=f"Run {summary.output_dir.name}")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Output Dir", str(summary.output_dir))
    table.add_row("Epochs", str(summary.epochs_completed))
    table.add_row("Global Step", f"{summary.global_step:,}")
    if summary.last_train_loss is not None:
        table.add_row("Last Train Loss", f"{summary.last_train_loss:.4f}")
    if summary.best_valid_loss is not None:
        table.add_row("Best Valid Loss", f"{summary.best_valid_loss:.4f}")
    console.print(table)
    for result in summary.evaluations:
        _print_eval(result)


def _print_eval(result: EvalResult) -> None:
    table = Table(title=f"Evaluation ({result.split})")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green", justify="right")
    for key, value in result.as_row().items():
        if key == "split" or value is None:
            continue
        table.add_row(key, f"{value:.4f}")
    table.add_row("tokens", f"{result.tokens:,}")
    console.print(table)


def _run_training(
    run: RunConfig,
    *,
    resume: Path | None,
    init: Path | None,
    vocab_path: Path | None,
    dry_run: bool,
) -> None:
    if dry_run:
        console.print_json(data=run.to_flat())
        return
    vocab = load_vocab(run, vocab_path)
    with console.status("Loading data..."):
        data = load_task_data(run, vocab)
    summary = train(run, vocab, data, resume=resume, init=init)
    _print_summary(summary)


def pretrain(
    config: ConfigOpt = None,
    preset: PresetOpt = None,
    resume: Annotated[
        Path | None, typer.Option("--resume", help="Continue from this checkpoint")
    ] = None,
    init: Annotated[
        Path | None,
        typer.Option("--init", help="Load parameters only (continued pretraining)"),
    ] = None,
    overrides: OverridesOpt = None,
    vocab: VocabOpt = None,
    dry_run: DryRunOpt = False,
) -> None:
    """Pretrain with span corruption (or any task the config names)."""
    apply_settings()
    with handle_errors():
        if resume is not None and init is not None:
            raise ConfigurationError("--resume and --init are mutually exclusive")
        run = resolve_run_config(config, preset, overrides)
        _run_training(run, resume=resume, init=init, vocab_path=vocab, dry_run=dry_run)


def finetune(
    config: ConfigOpt = None,
    preset: PresetOpt = None,
    init: Annotated[
        Path | None,
        typer.Option("--init", help="Pretrained checkpoint; defaults to init_checkpoint"),
    ] = None,
    overrides: OverridesOpt = None,
    vocab: VocabOpt = None,
    dry_run: DryRunOpt = False,
) -> None:
    """Fine-tune from a pretrained checkpoint (fresh optimizer, step 0)."""
    apply_settings()
    with handle_errors():
        run = resolve_run_config(config, preset, overrides)
        init = init or run.init_checkpoint
        if init is None:
            raise ConfigurationError("finetune needs --init or init_checkpoint")
        _run_training(run, resume=None, init=init, vocab_path=vocab, dry_run=dry_run)


def evaluate_cmd(
    ckpt: Annotated[Path, typer.Option("--ckpt", help="Checkpoint to evaluate")],
    config: ConfigOpt = None,
    preset: PresetOpt = None,
    split: Annotated[str, typer.Option("--split", help="train, valid or test")] = "valid",
    overrides: OverridesOpt = None,
    vocab: VocabOpt = None,
    out: Annotated[
        Path | None,
        typer.Option(
            "--out",
            "-o",
            help="Write the metrics as JSON here, and the config as <stem>.resolved_config.json",
        ),
    ] = None,
) -> None:
    """Evaluate a checkpoint on one split: loss, accuracy, perplexity (and QA scores)."""
    apply_settings()
    with handle_errors():
        run = resolve_run_config(config, preset, overrides)
        paths = {"train": run.train_path, "valid": run.valid_path, "test": run.test_path}
        if split not in paths:
            raise ConfigurationError(f"--split must be one of {sorted(paths)}, got {split!r}")
        path = paths[split]
        if path is None:
            raise ConfigurationError(f"{split}_path is not set")
        tokens = load_vocab(run, vocab)
        check_vocab(run, tokens)
        model = load_model(run, ckpt, tokens)
        with console.status(f"Evaluating {split}..."):
            result = evaluate_run(run, tokens, model, build_dataset(run, tokens, path), split)
    _print_eval(result)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        row = {**result.as_row(), "tokens": result.tokens, "checkpoint": str(ckpt)}
        out.write_text(json.dumps(row, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        dump_run_config(run, out.with_name(f"{out.stem}.{RESOLVED_CONFIG}"))


def generate(
    ckpt: Annotated[Path, typer.Option("--ckpt", help="Checkpoint to decode with")],
    text: Annotated[str, typer.Option("--input", "-i", help="Source text")],
    max_len: Annotated[int, typer.Option("--max-len", help="Maximum output tokens")] = 40,
    vocab: VocabOpt = None,
) -> None:
    """Greedy-decode one input with a trained (or freshly initialized) checkpoint."""
    apply_settings()
    with handle_errors():
        checkpoint = load_checkpoint(ckpt)
        run = RunConfig.from_mapping(checkpoint.config)
        tokens = load_vocab(run, vocab)
        check_vocab(run, tokens)
        check_checkpoint(checkpoint, run, tokens, resuming=False)
        model = Seq2SeqModel(run.model, seed=run.seed)
        model.load_state_dict(checkpoint.params)
        ids = [*tokens.encode(text), EOS_ID]
        batch = chunk_input(ids, run.model.chunk_len, run.model.n_chunks, truncate=True)
        output = greedy_decode(model, batch, max_len)[0]
    console.print(escape(tokens.decode(output, skip_special_tokens=True)))
