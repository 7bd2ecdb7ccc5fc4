"""Optimizers, schedules, metrics, checkpoints and the training loop."""

from memt5.training.checkpoint import (
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from memt5.training.loop import (
    EvalResult,
    TaskData,
    TrainState,
    TrainSummary,
    build_dataset,
    evaluate,
    load_model,
    load_task_data,
    train,
    train_step,
)
from memt5.training.metrics import normalize_answer, perplexity, qa_metrics, token_accuracy
from memt5.training.metrics_log import MetricsLog, read_metrics, summarize
from memt5.training.optim import Adafactor, AdamW, Optimizer, build_optimizer
from memt5.training.schedule import lr_at

__all__ = [
    "Adafactor",
    "AdamW",
    "Checkpoint",
    "EvalResult",
    "MetricsLog",
    "Optimizer",
    "TaskData",
    "TrainState",
    "TrainSummary",
    "build_dataset",
    "build_optimizer",
    "decode_checkpoint",
    "encode_checkpoint",
    "evaluate",
    "load_checkpoint",
    "load_model",
    "load_task_data",
    "lr_at",
    "normalize_answer",
    "perplexity",
    "qa_metrics",
    "read_metrics",
    "save_checkpoint",
    "summarize",
    "token_accuracy",
    "train",
    "train_step",
]
