"""Training and evaluation loops for span-corruption pretraining and QA fine-tuning.

A run owns one output directory::

    <output_dir>/
        .lock                  held for the whole run (one writer per directory)
        resolved_config.json   flat config actually used
        metrics.csv            append-only metrics rows
        last.ckpt              written at the end of every epoch
        best.ckpt              lowest validation loss so far

Everything random derives from ``run.seed``: parameter init from ``seed``,
the epoch shuffle from ``seed + epoch``, span corruption from
``(seed, epoch, index)`` and dropout from ``(seed, global_step)``. Resuming
from ``last.ckpt`` therefore replays exactly the batches an uninterrupted run
would have seen.

Evaluation runs on a frozen model in eval mode. Batches may be spread over a
thread pool (``MEMT5_EVAL_WORKERS``); results are reduced in batch order so
the numbers do not depend on the worker count.

Example:
    vocab = Vocab.load(run.vocab_path)
    data = load_task_data(run, vocab)
    summary = train(run, vocab, data)
    print(summary.best_valid_loss)
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from filelock import FileLock, Timeout

from memt5.autograd import backward, no_grad
from memt5.autograd import functional as F
from memt5.config import RunConfig, Task, dump_run_config
from memt5.data.batching import Batch, Dataset, MLMDataset, QADataset, epoch_batches
from memt5.data.corpus import load_text_corpus
from memt5.data.qa import build_qa_example, load_qa_dataset
from memt5.events import (
    EVENT_BEST_CHECKPOINT_UPDATED,
    EVENT_CHECKPOINT_SAVED,
    EVENT_EPOCH_COMPLETED,
    EVENT_EVAL_COMPLETED,
    EVENT_NON_FINITE_DETECTED,
    EVENT_RUN_COMPLETED,
    EVENT_RUN_RESUMED,
    EVENT_RUN_STARTED,
)
from memt5.exceptions import (
    CompatibilityError,
    ConfigurationError,
    DataError,
    NumericalError,
    RunLockedError,
)
from memt5.model.seq2seq import Seq2SeqModel, greedy_decode, shift_right
from memt5.settings import MemT5Settings, get_settings
from memt5.tokenizer import EOS_ID, Vocab
from memt5.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from memt5.training.metrics import perplexity, qa_metrics, token_hits
from memt5.training.metrics_log import METRICS_FILENAME, MetricsLog
from memt5.training.optim import Optimizer, build_optimizer
from memt5.training.schedule import lr_at, with_total_steps

logger = logging.getLogger(__name__)

LAST_CHECKPOINT = "last.ckpt"
BEST_CHECKPOINT = "best.ckpt"
RESOLVED_CONFIG = "resolved_config.json"
LOCK_FILENAME = ".lock"


# ----- data ------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TaskData:
    train: Dataset
    valid: Dataset | None = None
    test: Dataset | None = None


def _limit(dataset: Dataset, max_examples: int | None) -> Dataset:
    if max_examples is None or len(dataset) <= max_examples:
        return dataset
    if isinstance(dataset, MLMDataset):
        return MLMDataset(
            dataset.sequences[:max_examples],
            dataset.model,
            dataset.span_corruption,
            dataset.seed,
        )
    if isinstance(dataset, QADataset):
        return QADataset(dataset.examples[:max_examples], dataset.target_len)
    return dataset


def build_dataset(run: RunConfig, vocab: Vocab, path: Path) -> Dataset:
    """Load one split from ``path`` for the run's task."""
    if run.task is Task.MLM:
        sequences = load_text_corpus(path, vocab, run.model.source_len)
        return MLMDataset(sequences, run.model, run.span_corruption, seed=run.seed)
    records = load_qa_dataset(path)
    examples = [
        build_qa_example(
            record,
            vocab,
            source_len=run.model.source_len,
            target_len=run.target_len,
            n_chunks=run.model.n_chunks,
        )
        for record in records
    ]
    return QADataset(examples, target_len=run.target_len)


def load_task_data(run: RunConfig, vocab: Vocab, *, include_test: bool = True) -> TaskData:
    if run.train_path is None:
        raise ConfigurationError("train_path is required")
    check_vocab(run, vocab)
    valid = build_dataset(run, vocab, run.valid_path) if run.valid_path else None
    test = build_dataset(run, vocab, run.test_path) if run.test_path and include_test else None
    return TaskData(
        train=build_dataset(run, vocab, run.train_path),
        valid=_limit(valid, run.eval_max_examples) if valid is not None else None,
        test=_limit(test, run.eval_max_examples) if test is not None else None,
    )


def check_vocab(run: RunConfig, vocab: Vocab) -> None:
    if vocab.vocab_size != run.model.vocab_size:
        raise CompatibilityError(
            f"vocabulary has {vocab.vocab_size} ids but model.vocab_size={run.model.vocab_size}"
        )


# ----- state -----------------------------------------------------------------


@dataclass(slots=True)
class TrainState:
    """Everything a resumed run needs: parameters, optimizer slots, counters."""

    model: Seq2SeqModel
    optimizer: Optimizer
    seed: int = 42
    global_step: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0
    best_valid_loss: float | None = None

    @classmethod
    def fresh(cls, run: RunConfig) -> TrainState:
        model = Seq2SeqModel(run.model, seed=run.seed)
        optimizer = build_optimizer(run.optimizer, model.named_parameters(), run.weight_decay)
        return cls(model=model, optimizer=optimizer, seed=run.seed)

    def to_checkpoint(self, run: RunConfig, vocab_fingerprint: str | None) -> Checkpoint:
        return Checkpoint(
            config=run.to_flat(),
            params=self.model.state_dict(),
            slots=self.optimizer.slot_arrays(),
            vocab_fingerprint=vocab_fingerprint,
            global_step=self.global_step,
            epoch=self.epoch,
            batch_in_epoch=self.batch_in_epoch,
            seed=self.seed,
            optimizer=str(self.optimizer.kind),
            optimizer_steps=self.optimizer.step_count,
            best_valid_loss=self.best_valid_loss,
        )

    def restore(self, checkpoint: Checkpoint) -> None:
        """Load parameters, optimizer slots and counters from ``checkpoint``."""
        if checkpoint.optimizer != str(self.optimizer.kind):
            raise CompatibilityError(
                f"checkpoint optimizer {checkpoint.optimizer!r} != run optimizer "
                f"{str(self.optimizer.kind)!r}"
            )
        self.model.load_state_dict(checkpoint.params)
        self.optimizer.load_slot_arrays(checkpoint.slots, checkpoint.optimizer_steps)
        self.global_step = checkpoint.global_step
        self.epoch = checkpoint.epoch
        self.batch_in_epoch = checkpoint.batch_in_epoch
        self.best_valid_loss = checkpoint.best_valid_loss


def check_checkpoint(
    checkpoint: Checkpoint, run: RunConfig, vocab: Vocab | None, *, resuming: bool
) -> None:
    """Raise CompatibilityError when ``checkpoint`` does not belong to ``run``/``vocab``.

    Resuming requires every ``model.*`` key to match. Loading parameters only
    (``--init``, evaluation) leaves shape checks to ``load_state_dict``, so the
    chunk layout, dropout and similar settings may differ.
    """
    if vocab is not None and checkpoint.vocab_fingerprint not in (None, vocab.fingerprint()):
        raise CompatibilityError(
            "vocabulary does not match the one the checkpoint was trained with "
            f"(fingerprint {checkpoint.vocab_fingerprint[:12]}... != {vocab.fingerprint()[:12]}...)"
        )
    if not resuming:
        return
    ours = run.to_flat()
    for key, value in sorted(checkpoint.config.items()):
        if not key.startswith("model."):
            continue
        if key in ours and ours[key] != value:
            raise CompatibilityError(f"{key}: checkpoint has {value!r}, config has {ours[key]!r}")


# ----- steps -----------------------------------------------------------------


def train_step(
    state: TrainState,
    batch: Batch,
    lr: float,
    micro_batches: int = 1,
    rng: np.random.Generator | None = None,
) -> float:
    """One optimizer step over ``batch``; returns the batch's mean token loss.

    Micro-batch losses are weighted by their share of target tokens, so the
    accumulated gradient equals the full-batch gradient.

    Raises:
        NumericalError: the loss or a gradient is non-finite; parameters
            are left untouched
    """
    state.model.train()
    state.optimizer.zero_grad()
    total_tokens = batch.target_tokens
    if total_tokens == 0:
        raise DataError("batch has no target tokens")
    loss_value = 0.0
    for part in batch.split(micro_batches):
        weight = part.target_tokens / total_tokens
        if weight == 0:
            continue
        loss = state.model.loss(part.source, part.labels, rng)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalError(f"non-finite loss {value} at step {state.global_step}")
        backward(F.mul(loss, weight))
        loss_value += value * weight
    state.optimizer.step(lr)
    state.optimizer.zero_grad()
    return loss_value


# ----- evaluation ------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class EvalResult:
    split: str
    loss: float
    tokens: int
    acc: float | None = None
    em: float | None = None
    f1: float | None = None
    precision: float | None = None
    recall: float | None = None
    predictions: tuple[str, ...] = field(default=(), repr=False)

    @property
    def ppl(self) -> float:
        return perplexity(self.loss)

    def as_row(self) -> dict[str, Any]:
        return {
            "split": self.split,
            "loss": self.loss,
            "acc": self.acc,
            "ppl": self.ppl,
            "em": self.em,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
        }


@dataclass(frozen=True, slots=True)
class _BatchEval:
    loss_sum: float
    tokens: int
    correct: int
    predictions: tuple[str, ...] = ()
    references: tuple[str, ...] = ()


def _evaluate_batch(
    model: Seq2SeqModel, batch: Batch, vocab: Vocab | None, max_len: int
) -> _BatchEval:
    with no_grad():
        logits = model.forward(batch.source, shift_right(batch.labels))
        flat = F.reshape(logits, (-1, model.config.vocab_size))
        loss = F.cross_entropy_mean(flat, batch.labels.reshape(-1))
    correct, tokens = token_hits(logits.data, batch.labels)
    predictions: tuple[str, ...] = ()
    if vocab is not None:
        decoded = greedy_decode(model, batch.source, max_len)
        predictions = tuple(
            vocab.decode([t for t in ids if t != EOS_ID], skip_special_tokens=True).strip()
            for ids in decoded
        )
    return _BatchEval(loss.item() * tokens, tokens, correct, predictions, batch.references)


def evaluate(
    model: Seq2SeqModel,
    dataset: Dataset,
    split: str,
    *,
    batch_size: int,
    vocab: Vocab | None = None,
    max_len: int = 40,
    workers: int = 1,
) -> EvalResult:
    """Token-weighted loss and accuracy over ``dataset``.

    Passing ``vocab`` (QA runs) also greedy-decodes every example and scores
    the answers with exact match, F1, precision and recall.
    """
    if len(dataset) == 0:
        raise DataError(f"split {split!r} is empty")
    was_training = model.training
    model.eval()
    batches = [
        dataset.batch(indices, epoch=0)
        for indices in epoch_batches(len(dataset), batch_size, shuffle=False)
    ]
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda b: _evaluate_batch(model, b, vocab, max_len), batches))
        else:
            parts = [_evaluate_batch(model, b, vocab, max_len) for b in batches]
    finally:
        model.train(was_training)

    tokens = sum(p.tokens for p in parts)
    loss = sum(p.loss_sum for p in parts) / tokens
    result = EvalResult(
        split=split,
        loss=loss,
        tokens=tokens,
        acc=100.0 * sum(p.correct for p in parts) / tokens,
    )
    if vocab is not None:
        predictions = tuple(pred for p in parts for pred in p.predictions)
        references = tuple(ref for p in parts for ref in p.references)
        scores = qa_metrics(predictions, references)
        result = EvalResult(
            split=split,
            loss=loss,
            tokens=tokens,
            acc=None,
            em=scores["exact_match"],
            f1=scores["f1"],
            precision=scores["precision"],
            recall=scores["recall"],
            predictions=predictions,
        )
    logger.info(
        "evaluation completed",
        extra={"event": EVENT_EVAL_COMPLETED, **result.as_row(), "tokens": tokens},
    )
    return result


def evaluate_run(
    run: RunConfig, vocab: Vocab, model: Seq2SeqModel, dataset: Dataset, split: str
) -> EvalResult:
    return evaluate(
        model,
        dataset,
        split,
        batch_size=run.batch_size,
        vocab=vocab if run.task is Task.QA else None,
        max_len=run.target_len,
        workers=get_settings().effective_eval_workers,
    )


# ----- run -------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TrainSummary:
    output_dir: Path
    global_step: int
    epochs_completed: int
    last_train_loss: float | None
    best_valid_loss: float | None
    evaluations: tuple[EvalResult, ...]


def resolve_output_dir(run: RunConfig, settings: MemT5Settings | None = None) -> Path:
    settings = settings or get_settings()
    return (run.output_dir or settings.output_root / run.name).resolve()


def train(
    run: RunConfig,
    vocab: Vocab,
    data: TaskData,
    *,
    resume: Path | None = None,
    init: Path | None = None,
    settings: MemT5Settings | None = None,
) -> TrainSummary:
    """Train ``run`` to completion, writing checkpoints and metrics.

    ``resume`` restores parameters, optimizer slots and counters; ``init``
    (or ``run.init_checkpoint``) loads parameters only and starts a fresh
    optimizer at step 0.

    Raises:
        RunLockedError: another process is training into the same directory
        NumericalError: loss or gradient went non-finite (``last.ckpt`` keeps
            the last good epoch)
        CompatibilityError: checkpoint or vocabulary do not match the run
    """
    settings = settings or get_settings()
    check_vocab(run, vocab)
    if len(data.train) == 0:
        raise DataError("training split is empty")
    output_dir = resolve_output_dir(run, settings)
    output_dir.mkdir(parents=True, exist_ok=True)

    lock = FileLock(str(output_dir / LOCK_FILENAME), timeout=0)
    try:
        lock.acquire()
    except Timeout as exc:
        raise RunLockedError(f"{output_dir} is locked by another training process") from exc
    try:
        return _train_locked(run, vocab, data, output_dir, resume, init, settings)
    finally:
        lock.release()


def _train_locked(
    run: RunConfig,
    vocab: Vocab,
    data: TaskData,
    output_dir: Path,
    resume: Path | None,
    init: Path | None,
    settings: MemT5Settings,
) -> TrainSummary:
    fingerprint = vocab.fingerprint()
    dump_run_config(run, output_dir / RESOLVED_CONFIG)
    metrics = MetricsLog(output_dir / METRICS_FILENAME)

    batches_per_epoch = len(epoch_batches(len(data.train), run.batch_size))
    schedule = with_total_steps(run.schedule, batches_per_epoch, run.epochs)
    state = TrainState.fresh(run)

    init = init or run.init_checkpoint
    if resume is not None:
        checkpoint = load_checkpoint(resume)
        check_checkpoint(checkpoint, run, vocab, resuming=True)
        state.restore(checkpoint)
        metrics.truncate_after(state.global_step)
        logger.info(
            "run resumed",
            extra={
                "event": EVENT_RUN_RESUMED,
                "checkpoint": str(resume),
                "global_step": state.global_step,
                "epoch": state.epoch,
            },
        )
    elif init is not None:
        checkpoint = load_checkpoint(init)
        check_checkpoint(checkpoint, run, vocab, resuming=False)
        state.model.load_state_dict(checkpoint.params)
    if resume is None:
        metrics.truncate_after(-1)

    logger.info(
        "run started",
        extra={
            "event": EVENT_RUN_STARTED,
            "name": run.name,
            "task": str(run.task),
            "variant": str(run.model.variant),
            "output_dir": str(output_dir),
            "parameters": state.model.num_parameters(),
            "train_examples": len(data.train),
            "steps_per_epoch": batches_per_epoch,
        },
    )

    started = time.perf_counter()

    def wallclock() -> float:
        return 0.0 if settings.deterministic else round(time.perf_counter() - started, 3)

    evaluations: list[EvalResult] = []
    last_train_loss: float | None = None
    while state.epoch < run.epochs:
        losses: list[float] = []
        batches = epoch_batches(len(data.train), run.batch_size, seed=run.seed, epoch=state.epoch)
        for indices in batches[state.batch_in_epoch :]:
            batch = data.train.batch(indices, epoch=state.epoch)
            lr = lr_at(state.global_step, schedule)
            rng = np.random.default_rng((run.seed, state.global_step))
            try:
                losses.append(train_step(state, batch, lr, run.micro_batches, rng))
            except NumericalError as exc:
                logger.error(
                    "non-finite value, aborting",
                    extra={
                        "event": EVENT_NON_FINITE_DETECTED,
                        "global_step": state.global_step,
                        "epoch": state.epoch,
                        "error": str(exc),
                    },
                )
                raise
            state.global_step += 1
            state.batch_in_epoch += 1
            if state.global_step % run.log_every_steps == 0:
                logger.info(
                    "training step",
                    extra={"global_step": state.global_step, "loss": losses[-1], "lr": lr},
                )

        state.epoch += 1
        state.batch_in_epoch = 0
        last_train_loss = float(np.mean(losses)) if losses else last_train_loss
        lr_now = lr_at(state.global_step, schedule)
        metrics.append(
            step=state.global_step,
            epoch=state.epoch,
            split="train",
            loss=last_train_loss,
            ppl=perplexity(last_train_loss) if last_train_loss is not None else None,
            lr=lr_now,
            wallclock_s=wallclock(),
        )
        logger.info(
            "epoch completed",
            extra={
                "event": EVENT_EPOCH_COMPLETED,
                "epoch": state.epoch,
                "global_step": state.global_step,
                "train_loss": last_train_loss,
                "lr": lr_now,
            },
        )

        due = state.epoch % run.eval_every_epochs == 0 or state.epoch == run.epochs
        if data.valid is not None and due:
            result = evaluate_run(run, vocab, state.model, data.valid, "valid")
            evaluations.append(result)
            metrics.append(
                step=state.global_step,
                epoch=state.epoch,
                lr=lr_now,
                wallclock_s=wallclock(),
                **result.as_row(),
            )
            if state.best_valid_loss is None or result.loss < state.best_valid_loss:
                state.best_valid_loss = result.loss
                save_checkpoint(
                    state.to_checkpoint(run, fingerprint), output_dir / BEST_CHECKPOINT
                )
                logger.info(
                    "best checkpoint updated",
                    extra={
                        "event": EVENT_BEST_CHECKPOINT_UPDATED,
                        "epoch": state.epoch,
                        "valid_loss": result.loss,
                    },
                )

        save_checkpoint(state.to_checkpoint(run, fingerprint), output_dir / LAST_CHECKPOINT)
        logger.info(
            "checkpoint saved",
            extra={
                "event": EVENT_CHECKPOINT_SAVED,
                "path": str(output_dir / LAST_CHECKPOINT),
                "global_step": state.global_step,
            },
        )

    if data.test is not None:
        result = evaluate_run(run, vocab, state.model, data.test, "test")
        evaluations.append(result)
        metrics.append(
            step=state.global_step,
            epoch=state.epoch,
            lr=lr_at(state.global_step, schedule),
            wallclock_s=wallclock(),
            **result.as_row(),
        )

    logger.info(
        "run completed",
        extra={
            "event": EVENT_RUN_COMPLETED,
            "global_step": state.global_step,
            "best_valid_loss": state.best_valid_loss,
        },
    )
    return TrainSummary(
        output_dir=output_dir,
        global_step=state.global_step,
        epochs_completed=state.epoch,
        last_train_loss=last_train_loss,
        best_valid_loss=state.best_valid_loss,
        evaluations=tuple(evaluations),
    )


def load_model(run: RunConfig, checkpoint_path: Path, vocab: Vocab | None = None) -> Seq2SeqModel:
    """Model for ``run`` with parameters from ``checkpoint_path`` (eval mode)."""
    checkpoint = load_checkpoint(checkpoint_path)
    check_checkpoint(checkpoint, run, vocab, resuming=False)
    model = Seq2SeqModel(run.model, seed=run.seed)
    model.load_state_dict(checkpoint.params)
    model.eval()
    return model

