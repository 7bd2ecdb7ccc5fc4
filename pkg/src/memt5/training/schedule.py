"""Learning-rate schedules."""

from __future__ import annotations

from memt5.config import ScheduleConfig, ScheduleKind
from memt5.exceptions import ConfigurationError


def lr_at(step: int, cfg: ScheduleConfig) -> float:
    """Learning rate for optimizer step ``step`` (0-based count of completed steps).

    ``linear_warmup_decay``: ``peak * min(step / warmup, (total - step) / (total - warmup))``,
    clamped at zero past ``total_steps``. ``constant``: ``peak`` always.
    """
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if cfg.kind is ScheduleKind.CONSTANT:
        return cfg.peak_lr
    if cfg.total_steps is None:
        raise ConfigurationError("schedule.total_steps must be set for linear_warmup_decay")
    warmup = cfg.warmup_steps
    total = cfg.total_steps
    ramp = step / warmup if warmup > 0 else 1.0
    if total > warmup:
        decay = (total - step) / (total - warmup)
    else:
        decay = 1.0 if step <= total else 0.0
    return cfg.peak_lr * max(0.0, min(ramp, decay, 1.0))


def with_total_steps(cfg: ScheduleConfig, steps_per_epoch: int, epochs: int) -> ScheduleConfig:
    """Fill ``total_steps`` from the epoch plan when the config leaves it open."""
    if cfg.total_steps is not None or cfg.kind is ScheduleKind.CONSTANT:
        return cfg
    total = max(1, steps_per_epoch * epochs)
    return cfg.model_copy(update={"total_steps": max(total, cfg.warmup_steps)})
