"""Toggles for the four production speed-up mechanisms.

1. ticking clock: ``clock_scale`` multiplies every firing and idle tick
2. fire when ready / compilation: ``compilation_enabled``
3. narrow focus: ``focus_mode`` filters the conflict set to ``focus_class``
4. faster productions: ``complexity_timing`` samples per-complexity durations
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace
from typing import Sequence


class Complexity(enum.Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


class FocusMode(enum.Enum):
    OPEN = "open"
    NARROW = "narrow"


class ConfigError(ValueError):
    """Raised with every violated constraint, each as ``(field, message)``."""

    def __init__(self, errors: Sequence[tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{name}: {msg}" for name, msg in self.errors))


# Published firing-time ranges (ms) for mechanism 4.
SIMPLE_RANGE_MS = (34.0, 44.0)
COMPLEX_RANGE_MS = (59.0, 73.0)


@dataclass(frozen=True)
class MechanismConfig:
    cycle_time_ms: float = 50.0
    clock_scale: float = 1.0
    compilation_enabled: bool = False
    focus_mode: FocusMode = FocusMode.OPEN
    focus_class: str = "monitor"
    complexity_timing: bool = False
    # None keeps authored complexities; otherwise forces focus-class rules.
    monitor_complexity: Complexity | None = None
    compiled_simple: bool = True
    noise_scale: float = 0.5
    activation_latency: bool = False
    latency_factor_ms: float = 200.0
    default_latency_ms: float = 200.0
    detect_at: str = "start"

    @property
    def tick_ms(self) -> float:
        return self.cycle_time_ms * self.clock_scale

    def with_(self, **changes) -> "MechanismConfig":
        return replace(self, **changes)


def _positive(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value) and value > 0


def validate(cfg: MechanismConfig) -> MechanismConfig:
    """Return a normalized copy of ``cfg`` or raise ConfigError listing every problem."""
    errors: list[tuple[str, str]] = []
    for name in ("cycle_time_ms", "clock_scale", "latency_factor_ms", "default_latency_ms"):
        if not _positive(getattr(cfg, name)):
            errors.append((name, f"must be a finite number > 0, got {getattr(cfg, name)!r}"))
    noise = cfg.noise_scale
    if not (isinstance(noise, (int, float)) and math.isfinite(noise) and noise >= 0):
        errors.append(("noise_scale", f"must be a finite number >= 0, got {noise!r}"))

    focus = cfg.focus_mode
    if isinstance(focus, str):
        try:
            focus = FocusMode(focus.lower())
        except ValueError:
            errors.append(("focus_mode", f"must be open or narrow, got {focus!r}"))
    if focus == FocusMode.NARROW and not cfg.focus_class:
        errors.append(("focus_class", "narrow focus needs a designated focus production class"))

    mc = cfg.monitor_complexity
    if isinstance(mc, str):
        try:
            mc = Complexity(mc.lower())
        except ValueError:
            errors.append(("monitor_complexity", f"must be simple or complex, got {mc!r}"))

    if cfg.detect_at not in ("start", "end"):
        errors.append(("detect_at", f"must be start or end, got {cfg.detect_at!r}"))
    for f in fields(cfg):
        if f.type in ("bool",) and not isinstance(getattr(cfg, f.name), bool):
            errors.append((f.name, "must be a boolean"))

    if errors:
        raise ConfigError(errors)
    return replace(cfg, focus_mode=focus, monitor_complexity=mc, noise_scale=float(noise))


def apply_focus(cfg: MechanismConfig, conflict: list) -> list:
    """Narrow focus keeps only instantiations of focus-class productions."""
    if cfg.focus_mode != FocusMode.NARROW:
        return conflict
    return [inst for inst in conflict if inst.production.category == cfg.focus_class]
