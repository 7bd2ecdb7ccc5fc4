"""Main CLI module for memt5.

This module assembles all CLI submodules into a single application and maps
Click usage errors to exit code 1 (Click's own default is 2, which memt5
reserves for data errors).
"""

import click
import typer

from memt5.cli import info, run, tokenizer, verify
from memt5.cli.common import EXIT_USAGE, config_keys_help

app = typer.Typer(
    name="memt5",
    help="Memory-slot chunked T5: tokenize, train, evaluate and verify",
    no_args_is_help=True,
)

# Data preparation
app.command("train-tokenizer")(tokenizer.train_tokenizer_cmd)

# Runs
app.command("pretrain", epilog=config_keys_help())(run.pretrain)
app.command("finetune", epilog=config_keys_help())(run.finetune)
app.command("eval", epilog=config_keys_help())(run.evaluate_cmd)
app.command("generate")(run.generate)

# Verification
app.command("verify")(verify.verify)
app.command("gradcheck")(verify.gradcheck)
app.command("dump-attention", epilog=config_keys_help())(verify.dump_attention_cmd)

# Info
app.command("presets")(info.show_presets)
app.command("settings")(info.show_settings)
app.command("summarize")(info.summarize_runs)


def main() -> None:
    """Entry point for the CLI."""
    try:
        code = app(standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        raise SystemExit(EXIT_USAGE) from None
    except click.ClickException as exc:
        exc.show()
        raise SystemExit(exc.exit_code) from None
    except click.Abort:
        raise SystemExit(EXIT_USAGE) from None
    raise SystemExit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    main()
