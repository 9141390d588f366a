"""Experiment configuration and its plain-text file format.

The file is a list of ``[section]`` headers followed by ``key = value`` lines;
``#`` starts a comment. The ``[memory]`` section instead holds one chunk per
line (``id type slot=value ... @activation``). Unknown sections or keys are
errors, so a mistyped ablation switch can never be silently ignored.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable

from ..learning import UtilityParams
from ..mechanisms import Complexity, ConfigError, FocusMode, MechanismConfig, validate
from ..psychophysics import Axis, StimulusProtocol
from ..signals import GateModel


@dataclass(frozen=True)
class TaskSpec:
    distractors: int = 3
    monitor_utility: float = 6.0
    distractor_utility: float = 4.5
    instruction_activation: float = 0.0
    # extra chunk lines for declarative memory (the meta-instruction is built in)
    memory_lines: tuple[str, ...] = ()


@dataclass(frozen=True)
class ProbeSpec:
    axes: tuple[Axis, ...] = (Axis.DURATION,)
    duration_levels: tuple[float, ...] = (10.0, 30.0, 60.0, 120.0, 240.0, 360.0, 600.0, 1000.0)
    amplitude_levels: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0)
    trials: int = 200
    criterion: float = 0.5
    n_boot: int = 200
    stimulus: StimulusProtocol = field(default_factory=StimulusProtocol)
    # stage probes additionally run under these focus modes
    focus_modes: tuple[FocusMode, ...] = (FocusMode.NARROW, FocusMode.OPEN)

    def levels(self, axis: Axis) -> tuple[float, ...]:
        return self.duration_levels if axis == Axis.DURATION else self.amplitude_levels


@dataclass(frozen=True)
class TrainingProtocol:
    n_trials: int = 60
    reward: UtilityParams = field(default_factory=UtilityParams)
    probe_every: int = 15
    duration_min_ms: float = 300.0
    duration_max_ms: float = 500.0
    window: int = 20

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not (1 <= self.probe_every <= self.n_trials):
            raise ValueError("probe_every must lie in [1, n_trials]")


@dataclass(frozen=True)
class SignalSpec:
    """Free-running stimulus used by ``simulate``."""

    rate_per_s: float = 1.0
    duration_min_ms: float = 50.0
    duration_max_ms: float = 400.0
    amplitude: float = 3.0
    horizon_ms: float = 10_000.0


@dataclass(frozen=True)
class AblationSpec:
    distractors: int = 3
    warmup_trials: int = 200
    fast_clock_scale: float = 0.5
    variants: tuple[str, ...] = ("clock", "compilation", "focus", "complexity")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "default"
    engine: MechanismConfig = field(default_factory=lambda: MechanismConfig(
        focus_mode=FocusMode.NARROW, compilation_enabled=True, complexity_timing=True))
    task: TaskSpec = field(default_factory=TaskSpec)
    signals: SignalSpec = field(default_factory=SignalSpec)
    training: TrainingProtocol | None = field(default_factory=TrainingProtocol)
    probe: ProbeSpec | None = field(default_factory=ProbeSpec)
    ablation: AblationSpec = field(default_factory=AblationSpec)
    seeds: tuple[int, ...] = tuple(range(1, 11))
    source_text: str = field(default="", compare=False, repr=False)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.training is None and self.probe is None:
            raise ValueError("an experiment needs a training or a threshold protocol")

    def with_seeds(self, seeds) -> "ExperimentSpec":
        return replace(self, seeds=tuple(int(s) for s in seeds))

    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()


# ---------------------------------------------------------------- parsing

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.replace(",", " ").split():
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _words(text: str) -> tuple[str, ...]:
    return tuple(x.strip().lower() for x in text.replace(",", " ").split())


def _optional_complexity(text: str):
    t = text.strip().lower()
    return None if t in ("", "none", "authored") else Complexity(t)


ENGINE_KEYS: dict[str, Callable[[str], Any]] = {
    "cycle_time_ms": float, "clock_scale": float, "compilation_enabled": _bool,
    "focus_mode": lambda s: FocusMode(s.strip().lower()), "focus_class": str.strip,
    "complexity_timing": _bool, "monitor_complexity": _optional_complexity,
    "compiled_simple": _bool, "noise_scale": float, "activation_latency": _bool,
    "latency_factor_ms": float, "default_latency_ms": float, "detect_at": str.strip,
}
SIGNAL_KEYS = {
    "gate_mean": float, "gate_sd": float, "rate_per_s": float, "duration_min_ms": float,
    "duration_max_ms": float, "amplitude": float, "horizon_ms": float, "onset_min_ms": float,
    "onset_max_ms": float, "default_duration_ms": float, "default_amplitude": float, "tail_ms": float,
}
TRAINING_KEYS = {
    "n_trials": int, "probe_every": int, "alpha": float, "reward_magnitude": float,
    "time_cost_per_ms": float, "duration_min_ms": float, "duration_max_ms": float, "window": int,
    "enabled": _bool,
}
PROBE_KEYS = {
    "axes": lambda s: tuple(Axis(w) for w in _words(s)), "duration_levels": _floats,
    "amplitude_levels": _floats, "trials": int, "criterion": float, "n_boot": int,
    "focus_modes": lambda s: tuple(FocusMode(w) for w in _words(s) if w != "none"),
    "enabled": _bool,
}
TASK_KEYS = {"distractors": int, "monitor_utility": float, "distractor_utility": float,
             "instruction_activation": float}
ABLATION_KEYS = {"distractors": int, "warmup_trials": int, "fast_clock_scale": float,
                 "variants": _words}
EXPERIMENT_KEYS = {"name": str.strip, "seeds": _ints}

SECTIONS = {"experiment": EXPERIMENT_KEYS, "engine": ENGINE_KEYS, "signals": SIGNAL_KEYS,
            "training": TRAINING_KEYS, "probe": PROBE_KEYS, "task": TASK_KEYS,
            "ablation": ABLATION_KEYS}


def parse_sections(text: str) -> tuple[dict[str, dict[str, Any]], list[str], list[tuple[str, str]]]:
    values: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    memory: list[str] = []
    errors: list[tuple[str, str]] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in SECTIONS and section != "memory":
                errors.append((f"line {lineno}", f"unknown section [{section}]"))
                section = "<bad>"
            continue
        if section == "memory":
            memory.append(line)
            continue
        if section is None:
            errors.append((f"line {lineno}", "key outside any section"))
            continue
        if section == "<bad>":
            continue
        if "=" not in line:
            errors.append((f"line {lineno}", f"expected 'key = value', got {line!r}"))
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        parser = SECTIONS[section].get(key)
        if parser is None:
            errors.append((f"{section}.{key}", "unknown key"))
            continue
        try:
            values[section][key] = parser(value)
        except ValueError as exc:
            errors.append((f"{section}.{key}", str(exc)))
    return values, memory, errors


def _update(obj, mapping: dict[str, Any]):
    names = {f.name for f in fields(obj)}
    return replace(obj, **{k: v for k, v in mapping.items() if k in names})


def spec_from_text(text: str, base: ExperimentSpec | None = None) -> ExperimentSpec:
    """Parse a config file. Raises ConfigError with every problem found."""
    base = base or ExperimentSpec()
    values, memory, errors = parse_sections(text)
    if errors:
        raise ConfigError(errors)
    try:
        engine = _update(base.engine, values["engine"])
        engine = validate(engine)
    except ConfigError as exc:
        raise ConfigError([(f"engine.{k}", m) for k, m in exc.errors]) from None

    sig = values["signals"]
    stim_base = base.probe.stimulus if base.probe is not None else StimulusProtocol()
    gate = GateModel(sig.get("gate_mean", stim_base.gate.gate_mean), sig.get("gate_sd", stim_base.gate.gate_sd))
    stim = replace(_update(stim_base, sig), gate=gate)
    signals = _update(base.signals, sig)

    tr = dict(values["training"])
    training_on = tr.pop("enabled", base.training is not None)
    training = None
    try:
        if training_on:
            tbase = base.training or TrainingProtocol()
            reward = _update(tbase.reward, tr)
            training = replace(_update(tbase, tr), reward=reward)
        pr = dict(values["probe"])
        probe_on = pr.pop("enabled", base.probe is not None)
        probe = None
        if probe_on:
            probe = replace(_update(base.probe or ProbeSpec(), pr), stimulus=stim)
        task = _update(base.task, values["task"])
        task = replace(task, memory_lines=tuple(memory) or base.task.memory_lines)
        ablation = _update(base.ablation, values["ablation"])
        exp = values["experiment"]
        spec = ExperimentSpec(
            name=exp.get("name", base.name), engine=engine, task=task, signals=signals,
            training=training, probe=probe, ablation=ablation,
            seeds=exp.get("seeds", base.seeds), source_text=text)
    except ValueError as exc:
        raise ConfigError([("config", str(exc))]) from None
    check_spec(spec)
    return spec


def check_spec(spec: ExperimentSpec) -> None:
    errors = []
    if spec.task.distractors < 0:
        errors.append(("task.distractors", "must be >= 0"))
    if spec.probe is not None:
        p = spec.probe
        for axis in p.axes:
            lv = p.levels(axis)
            if len(lv) < 2 or any(b <= a for a, b in zip(lv, lv[1:])):
                errors.append((f"probe.{axis.value}_levels", "need >= 2 strictly increasing levels"))
            if any(x <= 0 for x in lv):
                errors.append((f"probe.{axis.value}_levels", "levels must be > 0"))
        if p.trials < 1:
            errors.append(("probe.trials", "must be >= 1"))
        if p.n_boot < 100:
            errors.append(("probe.n_boot", "must be >= 100"))
        if not 0 < p.criterion < 1:
            errors.append(("probe.criterion", "must lie in (0, 1)"))
        s = p.stimulus
        if not (0 <= s.onset_min_ms <= s.onset_max_ms):
            errors.append(("signals.onset_min_ms", "need 0 <= onset_min_ms <= onset_max_ms"))
    known = {"clock", "compilation", "focus", "complexity", "baseline"}
    for v in spec.ablation.variants:
        if v not in known:
            errors.append(("ablation.variants", f"unknown variant {v!r}; choose from {sorted(known)}"))
    if spec.ablation.fast_clock_scale <= 0:
        errors.append(("ablation.fast_clock_scale", "must be > 0"))
    if errors:
        raise ConfigError(errors)


def load_spec(path: str | Path) -> ExperimentSpec:
    """Read a config file; keys it leaves out keep the values of ``default.cfg``."""
    return spec_from_text(Path(path).read_text(), default_spec())


def default_spec() -> ExperimentSpec:
    return spec_from_text(default_config_text())


def default_config_text() -> str:
    return (Path(__file__).with_name("default.cfg")).read_text()
