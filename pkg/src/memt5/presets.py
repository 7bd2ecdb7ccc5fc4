"""Named run configurations for the memory-slot experiments.

All presets except ``full_mlm_512_4chunks`` are desk scale and carry
``scaled_down=True``: d_model 64, 4 heads, d_ff 256, vocabulary 1000, and
every input length divided by four (512 becomes 128, 128 becomes 32). Data
paths are left unset; pass them with ``--set train_path=...``.

Names follow ``{model}_{optimizer}_{scheduler}``; continued-pretraining and
fine-tuning presets point ``init_checkpoint`` at the run they start from
(``runs/<preset>/best.ckpt`` by default).
"""

from __future__ import annotations

from pathlib import Path

from memt5.config import (
    ModelConfig,
    OptimizerKind,
    RunConfig,
    ScheduleConfig,
    ScheduleKind,
    Task,
    Variant,
)
from memt5.exceptions import ConfigurationError

_DESK_MODEL = {
    "vocab_size": 1000,
    "d_model": 64,
    "num_heads": 4,
    "d_kv": 16,
    "d_ff": 256,
    "num_layers": 2,
}

_DESK_LONG = 128
_DESK_SHORT = 32
_DESK_WARMUP = 100

_MAIN_LINEAR_LR = 0.005
_ABLATION_LINEAR_LR = 3e-3
_CONSTANT_LR = 5e-5

_OPTIMIZERS = {"af": OptimizerKind.ADAFACTOR, "adm": OptimizerKind.ADAMW}

# name stem -> (variant, mem_tokens, n_chunks)
_ABLATION_MODELS: dict[str, tuple[Variant, int, int]] = {
    "t5": (Variant.BASELINE, 0, 1),
    "t5mem": (Variant.MEM, 2, 4),
    "t5memws_2mem": (Variant.MEM_WS, 2, 4),
    "t5memwswma_1mem": (Variant.MEM_WS_WMA, 1, 4),
    "t5memwswma_2mem": (Variant.MEM_WS_WMA, 2, 4),
}

_QA_STEMS = {
    "t5": "t5_hp_{opt}_const_512",
    "t5mem": "t5mem_hp_4_chunks_{opt}_const",
    "t5memws_2mem": "t5memws2mem_hp_4_chunks_{opt}_const",
    "t5memwswma_1mem": "t5memwswma1mem_hp_4_chunks_{opt}_const",
    "t5memwswma_2mem": "t5memwswma2mem_hp_4_chunks_{opt}_const",
}


def _desk(
    name: str,
    variant: Variant,
    *,
    n_chunks: int,
    chunk_len: int,
    mem_tokens: int,
    optimizer: OptimizerKind = OptimizerKind.ADAFACTOR,
    schedule: ScheduleKind = ScheduleKind.LINEAR_WARMUP_DECAY,
    peak_lr: float = _MAIN_LINEAR_LR,
    task: Task = Task.MLM,
    init_from: str | None = None,
) -> RunConfig:
    return RunConfig(
        name=name,
        task=task,
        scaled_down=True,
        model=ModelConfig(
            variant=variant,
            n_chunks=n_chunks,
            chunk_len=chunk_len,
            mem_tokens=mem_tokens,
            **_DESK_MODEL,
        ),
        schedule=ScheduleConfig(kind=schedule, peak_lr=peak_lr, warmup_steps=_DESK_WARMUP),
        optimizer=optimizer,
        batch_size=16,
        epochs=30 if task is Task.QA else 10,
        output_dir=Path("runs") / name,
        init_checkpoint=Path("runs") / init_from / "best.ckpt" if init_from else None,
    )


def _build() -> dict[str, RunConfig]:
    presets: dict[str, RunConfig] = {}

    def add(config: RunConfig) -> None:
        presets[config.name] = config

    # input-length study: one chunk vs four, baseline vs memory model
    add(_desk("t5_baseline_128", Variant.BASELINE, n_chunks=1, chunk_len=_DESK_SHORT, mem_tokens=0))
    add(
        _desk(
            "t5mem_mlm_1_chunk_128", Variant.MEM, n_chunks=1, chunk_len=_DESK_SHORT, mem_tokens=2
        )
    )
    add(_desk("t5_baseline_512", Variant.BASELINE, n_chunks=1, chunk_len=_DESK_LONG, mem_tokens=0))
    add(
        _desk(
            "t5_128_to_512",
            Variant.BASELINE,
            n_chunks=1,
            chunk_len=_DESK_LONG,
            mem_tokens=0,
            init_from="t5_baseline_128",
        )
    )
    add(
        _desk(
            "t5mem_mlm_1_chunk_512", Variant.MEM, n_chunks=1, chunk_len=_DESK_LONG, mem_tokens=2
        )
    )
    add(
        _desk(
            "t5mem_mlm_1_to_4_chunks",
            Variant.MEM,
            n_chunks=4,
            chunk_len=_DESK_SHORT,
            mem_tokens=2,
            init_from="t5mem_mlm_1_chunk_512",
        )
    )
    add(_desk("t5mem_mlm_4_chunks", Variant.MEM, n_chunks=4, chunk_len=_DESK_SHORT, mem_tokens=2))

    # ablation grid: model x optimizer x scheduler, then QA fine-tuning from the const runs
    for stem, (variant, mem_tokens, n_chunks) in _ABLATION_MODELS.items():
        chunk_len = _DESK_LONG // n_chunks
        for opt_name, optimizer in _OPTIMIZERS.items():
            main_setup = stem in ("t5", "t5mem") and optimizer is OptimizerKind.ADAFACTOR
            for sched_name, schedule in (
                ("linear", ScheduleKind.LINEAR_WARMUP_DECAY),
                ("const", ScheduleKind.CONSTANT),
            ):
                if schedule is ScheduleKind.CONSTANT:
                    peak = _CONSTANT_LR
                else:
                    peak = _MAIN_LINEAR_LR if main_setup else _ABLATION_LINEAR_LR
                add(
                    _desk(
                        f"{stem}_{opt_name}_{sched_name}",
                        variant,
                        n_chunks=n_chunks,
                        chunk_len=chunk_len,
                        mem_tokens=mem_tokens,
                        optimizer=optimizer,
                        schedule=schedule,
                        peak_lr=peak,
                    )
                )
            add(
                _desk(
                    _QA_STEMS[stem].format(opt=opt_name),
                    variant,
                    n_chunks=n_chunks,
                    chunk_len=chunk_len,
                    mem_tokens=mem_tokens,
                    optimizer=optimizer,
                    schedule=ScheduleKind.CONSTANT,
                    peak_lr=_CONSTANT_LR,
                    task=Task.QA,
                    init_from=f"{stem}_{opt_name}_const",
                )
            )

    # full-scale main setup; parses and echoes, not meant for a laptop
    add(
        RunConfig(
            name="full_mlm_512_4chunks",
            task=Task.MLM,
            model=ModelConfig(variant=Variant.MEM, n_chunks=4, chunk_len=128, mem_tokens=2),
            schedule=ScheduleConfig(
                kind=ScheduleKind.LINEAR_WARMUP_DECAY, peak_lr=_MAIN_LINEAR_LR, warmup_steps=2000
            ),
            optimizer=OptimizerKind.ADAFACTOR,
            batch_size=160,
            epochs=100,
            output_dir=Path("runs") / "full_mlm_512_4chunks",
        )
    )
    return presets


PRESETS: dict[str, RunConfig] = _build()


def list_presets() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> RunConfig:
    """Return the preset called ``name``."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; run 'memt5 presets' to list the available names"
        ) from None
