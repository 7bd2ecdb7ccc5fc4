"""Settings management for memt5.

This module provides process-wide configuration using pydantic-settings,
loading values from ``MEMT5_*`` environment variables and ``.env`` files.
Per-experiment hyperparameters live in :mod:`memt5.config`; this module only
holds the knobs that belong to the process running them (determinism, debug
scans, logging, where runs are written).

Example:
    from memt5.settings import configure_logging, get_settings

    settings = get_settings()
    configure_logging(settings)
    if settings.deterministic:
        ...
"""

import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from rich.logging import RichHandler


class MemT5Settings(BaseSettings):
    """Settings for memt5 processes.

    Environment variable names are the field names in uppercase with the
    ``MEMT5_`` prefix (e.g. deterministic -> MEMT5_DETERMINISTIC).
    """

    model_config = SettingsConfigDict(
        env_prefix="MEMT5_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    deterministic: bool = Field(
        default=False,
        description="Force single-threaded reductions and byte-stable metric files",
    )
    debug_checks: bool = Field(
        default=False, description="Scan every autograd op output for NaN/Inf"
    )
    eval_workers: int = Field(
        default=1, ge=1, description="Threads used to evaluate batches on a frozen snapshot"
    )

    output_root: Path = Field(
        default=Path("./runs"), description="Default parent directory for run outputs"
    )

    @field_validator("output_root", mode="after")
    @classmethod
    def resolve_output_root(cls, v: Path) -> Path:
        """Resolve output_root to absolute path."""
        return v.resolve()

    # Logging settings
    log_level: str = Field(default="INFO", description="Logging level")
    log_format: Literal["json", "console"] = Field(
        default="console", description="Log format: 'json' or 'console' for human-readable"
    )
    log_file: Path | None = Field(
        default=None, description="Log file path (optional, logs to console if not set)"
    )

    @property
    def effective_eval_workers(self) -> int:
        """Evaluation threads after applying deterministic mode."""
        return 1 if self.deterministic else self.eval_workers


@lru_cache
def get_settings() -> MemT5Settings:
    """Get cached settings instance.

    Settings are loaded once and cached for subsequent calls.
    Use get_settings.cache_clear() to reload.
    """
    return MemT5Settings()


_RESERVED_RECORD_KEYS = frozenset(logging.makeLogRecord({}).__dict__) | {"message", "asctime"}


class JsonLinesFormatter(logging.Formatter):
    """One JSON object per record; ``extra={...}`` fields become top-level keys."""

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, object] = {
            "ts": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key, value in record.__dict__.items():
            if key not in _RESERVED_RECORD_KEYS and not key.startswith("_"):
                payload[key] = value
        if record.exc_info:
            payload["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str, sort_keys=True)


def configure_logging(settings: MemT5Settings | None = None) -> None:
    """Install handlers on the ``memt5`` logger according to settings.

    Idempotent: previously installed memt5 handlers are replaced.
    """
    if settings is None:
        settings = get_settings()

    root = logging.getLogger("memt5")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    root.setLevel(settings.log_level.upper())
    root.propagate = False

    handler: logging.Handler
    if settings.log_format == "json":
        handler = logging.StreamHandler()
        handler.setFormatter(JsonLinesFormatter())
    else:
        handler = RichHandler(show_path=False, rich_tracebacks=False)
    root.addHandler(handler)

    if settings.log_file is not None:
        settings.log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(settings.log_file, encoding="utf-8")
        file_handler.setFormatter(JsonLinesFormatter())
        root.addHandler(file_handler)
