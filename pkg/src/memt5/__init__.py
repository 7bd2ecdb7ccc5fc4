"""
memt5: memory-slot chunked T5 on a numpy autograd engine.

The encoder reads long inputs as chunks, each prefixed with learned memory
slots that carry information between chunks; the decoder reads either the
chunk states through a memory-scored selector or the memory states alone.
The package trains BPE vocabularies, pretrains with span corruption,
fine-tunes on extractive QA, and ships independent oracles for the
attention pattern, the gradients, cross-chunk reachability and the
attention cost.
"""

from memt5.config import (
    ModelConfig,
    OptimizerKind,
    RunConfig,
    ScheduleConfig,
    ScheduleKind,
    SpanCorruptionConfig,
    Task,
    Variant,
    load_run_config,
)
from memt5.exceptions import (
    AttentionMaskError,
    CapacityError,
    CheckpointError,
    CheckpointIntegrityError,
    CheckpointMismatchError,
    CompatibilityError,
    ConfigurationError,
    CorpusTooSmallError,
    DataError,
    MemT5Error,
    NumericalError,
    RunLockedError,
    SchemaValidationError,
    ShapeError,
    TokenizerError,
    VerificationError,
)
from memt5.model import Seq2SeqModel, greedy_decode
from memt5.presets import get_preset, list_presets
from memt5.settings import MemT5Settings, configure_logging, get_settings
from memt5.tokenizer import Vocab, train_tokenizer

__all__ = [
    # Settings
    "MemT5Settings",
    "configure_logging",
    "get_settings",
    # Configuration
    "ModelConfig",
    "OptimizerKind",
    "RunConfig",
    "ScheduleConfig",
    "ScheduleKind",
    "SpanCorruptionConfig",
    "Task",
    "Variant",
    "get_preset",
    "list_presets",
    "load_run_config",
    # Tokenizer
    "Vocab",
    "train_tokenizer",
    # Model
    "Seq2SeqModel",
    "greedy_decode",
    # Exceptions
    "AttentionMaskError",
    "CapacityError",
    "CheckpointError",
    "CheckpointIntegrityError",
    "CheckpointMismatchError",
    "CompatibilityError",
    "ConfigurationError",
    "CorpusTooSmallError",
    "DataError",
    "MemT5Error",
    "NumericalError",
    "RunLockedError",
    "SchemaValidationError",
    "ShapeError",
    "TokenizerError",
    "VerificationError",
]
