"""Event names for structured log records.

Each constant is the ``event=`` field attached via ``extra={...}`` so log
consumers and emitters never disagree on spelling. See ``docs/logging.md``
for the fields carried by each event.
"""

from __future__ import annotations

# ----- training --------------------------------------------------------------

EVENT_RUN_STARTED = "run_started"
"""A pretrain/finetune run began. Fires once per process, after the lock is held."""

EVENT_RUN_RESUMED = "run_resumed"
"""Training state was restored from a checkpoint; carries ``global_step``."""

EVENT_EPOCH_COMPLETED = "epoch_completed"
"""An epoch finished; carries mean train loss and the current learning rate."""

EVENT_EVAL_COMPLETED = "eval_completed"
"""An evaluation pass over one split finished; carries the split's metrics."""

EVENT_CHECKPOINT_SAVED = "checkpoint_saved"
"""``last.ckpt`` was written atomically."""

EVENT_BEST_CHECKPOINT_UPDATED = "best_checkpoint_updated"
"""Validation loss improved and ``best.ckpt`` was replaced."""

EVENT_NON_FINITE_DETECTED = "non_finite_detected"
"""Loss or gradient went NaN/Inf. The step is aborted; ``last.ckpt`` is left
as the last good state."""

EVENT_RUN_COMPLETED = "run_completed"
"""All epochs finished."""

# ----- data ------------------------------------------------------------------

EVENT_TOKENIZER_TRAINED = "tokenizer_trained"
"""A BPE vocabulary was trained; carries ``vocab_size`` and ``merges``."""

EVENT_CORPUS_LOADED = "corpus_loaded"
"""A text corpus was tokenized and packed; carries sequence and token counts."""

EVENT_QA_DATASET_LOADED = "qa_dataset_loaded"
"""A JSON-lines QA file was parsed; carries the record count."""

# ----- verification ----------------------------------------------------------

EVENT_ORACLE_CASE_COMPLETED = "oracle_case_completed"
"""One oracle/gradcheck case finished; carries ``case_id`` and ``passed``."""
