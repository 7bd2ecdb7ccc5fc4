"""Run configuration models.

Every experiment is described by one :class:`RunConfig`. On disk it is a
flat JSON object keyed by dotted paths, which keeps experiment records
diffable line by line::

    {
      "model.variant": "mem",
      "model.n_chunks": 4,
      "model.chunk_len": 128,
      "model.mem_tokens": 2,
      "schedule.kind": "linear_warmup_decay",
      "seed": 42
    }

Nested JSON and YAML files are accepted too. All models are frozen and
reject unknown keys, so a typo surfaces as a :class:`ConfigurationError`
naming the offending key instead of silently using a default.

Example:
    from memt5.config import apply_overrides, load_run_config

    config = load_run_config(Path("runs/mem.json"))
    config = apply_overrides(config, ["model.mem_tokens=1", "epochs=3"])
"""

from __future__ import annotations

import json
import os
from enum import StrEnum
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from memt5.exceptions import ConfigurationError, DataError

# ----- enums -----------------------------------------------------------------


class Variant(StrEnum):
    """Architecture variants: the T5 baseline, the memory model and its two ablations."""

    BASELINE = "baseline"
    MEM = "mem"
    MEM_WS = "mem_ws"
    MEM_WS_WMA = "mem_ws_wma"

    @property
    def uses_mem_query(self) -> bool:
        """Encoder attention has a separate query projection for memory rows."""
        return self in (Variant.MEM, Variant.MEM_WS)

    @property
    def uses_selector(self) -> bool:
        return self is Variant.MEM

    @property
    def decodes_from_memory(self) -> bool:
        """Decoder cross-attends to the concatenated memory states only."""
        return self in (Variant.MEM_WS, Variant.MEM_WS_WMA)


class Task(StrEnum):
    MLM = "mlm"
    QA = "qa"


class OptimizerKind(StrEnum):
    ADAFACTOR = "adafactor"
    ADAMW = "adamw"


class ScheduleKind(StrEnum):
    LINEAR_WARMUP_DECAY = "linear_warmup_decay"
    CONSTANT = "constant"


NUM_SENTINELS = 100
"""Sentinel tokens reserved at the top of every vocabulary."""

MIN_VOCAB_SIZE = 3 + 256 + NUM_SENTINELS
"""Control tokens + byte alphabet + sentinels, before any merge."""


# ----- component configs -----------------------------------------------------


class ModelConfig(BaseModel):
    """Architecture hyperparameters shared by every variant.

    ``source_len`` (the encoder capacity L) is always ``n_chunks * chunk_len``.
    No parameter shape depends on ``n_chunks`` or ``chunk_len``, so a
    checkpoint trained with one layout can initialize another.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: Variant = Variant.MEM
    vocab_size: int = Field(default=32000, ge=MIN_VOCAB_SIZE)
    d_model: int = Field(default=512, ge=1)
    num_heads: int = Field(default=8, ge=1)
    d_kv: int = Field(default=64, ge=1)
    d_ff: int = Field(default=2048, ge=1)
    num_layers: int = Field(default=2, ge=1)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    n_chunks: int = Field(default=4, ge=1)
    chunk_len: int = Field(default=128, ge=1)
    mem_tokens: int = Field(default=2, ge=0)
    rel_pos_buckets: int = Field(default=32, ge=2)
    rel_pos_max_distance: int = Field(default=128, ge=2)
    tie_embeddings: bool = False
    layer_norm_eps: float = Field(default=1e-6, ge=0.0)

    @model_validator(mode="after")
    def _check_shapes(self) -> ModelConfig:
        if self.d_model != self.num_heads * self.d_kv:
            raise ValueError(
                f"d_model ({self.d_model}) must equal num_heads * d_kv "
                f"({self.num_heads} * {self.d_kv})"
            )
        if self.variant is Variant.BASELINE and (self.n_chunks != 1 or self.mem_tokens != 0):
            raise ValueError("variant 'baseline' requires n_chunks == 1 and mem_tokens == 0")
        if self.variant.decodes_from_memory and self.mem_tokens < 1:
            raise ValueError(
                f"variant {self.variant.value!r} decodes from memory and needs mem_tokens >= 1"
            )
        return self

    @property
    def source_len(self) -> int:
        return self.n_chunks * self.chunk_len

    @property
    def augmented_chunk_len(self) -> int:
        return self.mem_tokens + self.chunk_len


class ScheduleConfig(BaseModel):
    """Learning-rate schedule. ``total_steps=None`` is resolved by the trainer."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ScheduleKind = ScheduleKind.LINEAR_WARMUP_DECAY
    peak_lr: float = Field(default=0.005, gt=0.0)
    warmup_steps: int = Field(default=2000, ge=0)
    total_steps: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_warmup(self) -> ScheduleConfig:
        if (
            self.kind is ScheduleKind.LINEAR_WARMUP_DECAY
            and self.total_steps is not None
            and self.warmup_steps > self.total_steps
        ):
            raise ValueError(
                f"warmup_steps ({self.warmup_steps}) exceeds total_steps ({self.total_steps})"
            )
        return self


class SpanCorruptionConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    corruption_rate: float = Field(default=0.15, gt=0.0, lt=1.0)
    mean_span_length: float = Field(default=3.0, ge=1.0)
    max_sentinels: int = Field(default=NUM_SENTINELS, ge=1, le=NUM_SENTINELS)


class RunConfig(BaseModel):
    """Everything needed to reproduce one pretraining or fine-tuning run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(default="run", min_length=1)
    task: Task = Task.MLM
    scaled_down: bool = False
    model: ModelConfig = Field(default_factory=ModelConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    span_corruption: SpanCorruptionConfig = Field(default_factory=SpanCorruptionConfig)
    optimizer: OptimizerKind = OptimizerKind.ADAFACTOR
    weight_decay: float = Field(default=0.0, ge=0.0)
    train_path: Path | None = None
    valid_path: Path | None = None
    test_path: Path | None = None
    vocab_path: Path | None = None
    batch_size: int = Field(default=160, ge=1)
    micro_batches: int = Field(default=1, ge=1)
    epochs: int = Field(default=100, ge=1)
    target_len: int = Field(default=40, ge=1)
    eval_every_epochs: int = Field(default=1, ge=1)
    log_every_steps: int = Field(default=50, ge=1)
    eval_max_examples: int | None = Field(default=None, ge=1)
    output_dir: Path | None = None
    seed: int = Field(default=42, ge=0)
    init_checkpoint: Path | None = None

    @model_validator(mode="after")
    def _check_micro_batches(self) -> RunConfig:
        if self.batch_size % self.micro_batches != 0:
            raise ValueError(
                f"batch_size ({self.batch_size}) must be divisible by "
                f"micro_batches ({self.micro_batches})"
            )
        return self

    @classmethod
    def flat_keys(cls) -> list[str]:
        """Every dotted configuration key, in declaration order."""
        return list(_field_keys(cls))

    def to_flat(self) -> dict[str, Any]:
        return flatten(self.model_dump(mode="json"))

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> RunConfig:
        """Validate a flat (dotted) or nested mapping."""
        try:
            return cls.model_validate(unflatten(data))
        except ValidationError as exc:
            raise ConfigurationError(_describe(exc)) from None


# ----- flat <-> nested -------------------------------------------------------


def _field_keys(model: type[BaseModel], prefix: str = "") -> list[str]:
    keys: list[str] = []
    for name, field in model.model_fields.items():
        annotation = field.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            keys.extend(_field_keys(annotation, f"{prefix}{name}."))
        else:
            keys.append(f"{prefix}{name}")
    return keys


def flatten(data: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            flat.update(flatten(value, f"{prefix}{key}."))
        else:
            flat[f"{prefix}{key}"] = value
    return flat


def unflatten(data: dict[str, Any]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for key, value in data.items():
        parts = str(key).split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"{key}: conflicts with scalar key {part!r}")
            node = child
        leaf = parts[-1]
        if isinstance(value, dict):
            existing = node.setdefault(leaf, {})
            if not isinstance(existing, dict):
                raise ConfigurationError(f"{key}: conflicts with scalar key {leaf!r}")
            existing.update(unflatten(value))
        else:
            node[leaf] = value
    return nested


def _describe(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        loc = ".".join(str(p) for p in error["loc"]) or "<root>"
        parts.append(f"{loc}: {error['msg']}")
    return "invalid configuration: " + "; ".join(parts)


# ----- file I/O --------------------------------------------------------------


def load_run_config(path: Path) -> RunConfig:
    """Load a run config from ``.json``, ``.yaml`` or ``.yml``."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must contain an object at the top level")
    return RunConfig.from_mapping(data)


def dump_run_config(config: RunConfig, path: Path) -> None:
    """Write ``config`` as flat JSON (atomic replace)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(config.to_flat(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _parse_override_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``key=value`` overrides; values are parsed as JSON scalars when possible."""
    if not overrides:
        return config
    known = set(RunConfig.flat_keys())
    flat = config.to_flat()
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"override {item!r} must look like key=value")
        if key not in known:
            raise ConfigurationError(f"unknown config key {key!r}")
        flat[key] = _parse_override_value(raw.strip())
    return RunConfig.from_mapping(flat)
