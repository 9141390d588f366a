"""Batch experiments: raw simulation, threshold runs, stage training, ablations."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..engine import EngineState, Production, run_until
from ..learning import Learner, compiled_fraction, stage_for_fraction, StageLabel
from ..mechanisms import FocusMode, MechanismConfig, validate
from ..memory import DeclarativeMemory
from ..psychophysics import (Axis, PsychometricData, ThresholdEstimate, bootstrap_samples,
                             check_stability, derive_seed, fit_logistic, percentile_ci,
                             run_constant_stimuli, stimulus_set, threshold)
from ..signals import SignalEvent, SignalTrace, generate_trace
from ..trace import Event
from .config import ExperimentSpec, ProbeSpec, TrainingProtocol
from .task import build_monitoring_task, engine_factory, fresh_state, monitoring_rules, task_memory

LEARNING_KINDS = ("compile", "utility")


@dataclass
class ThresholdResult:
    condition: str
    seed: int
    data: PsychometricData
    estimate: ThresholdEstimate | None
    midpoint: float = float("nan")
    samples: np.ndarray | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def axis(self) -> Axis:
        return self.data.axis


def estimate_threshold(data: PsychometricData, criterion: float, n_boot: int,
                       rng: np.random.Generator, condition: str, seed: int) -> ThresholdResult:
    """Fit plus bootstrap CI; degenerate or unstable data is reported, not raised."""
    try:
        fit = fit_logistic(data)
        point = threshold(fit, criterion)
        samples = bootstrap_samples(data, criterion, n_boot, rng)
        check_stability(samples)
    except (ValueError, RuntimeError) as exc:
        return ThresholdResult(condition, seed, data, None, error=str(exc))
    lo, hi = percentile_ci(samples)
    level = point.level_at_criterion
    est = ThresholdEstimate(level, criterion, min(lo, level), max(hi, level), fit.slope)
    return ThresholdResult(condition, seed, data, est, fit.midpoint, samples)


# ---------------------------------------------------------------- simulate

def simulate(spec: ExperimentSpec, seed: int) -> tuple[SignalTrace, EngineState]:
    """One free-running engine over a Poisson stimulus trace (learning on if configured)."""
    s = spec.signals
    trace = generate_trace(s.rate_per_s, (s.duration_min_ms, s.duration_max_ms), s.amplitude,
                           s.horizon_ms, random.Random(derive_seed(seed, "stimulus")))
    state = build_monitoring_task(spec, trace)
    if spec.training is not None:
        state.learner = Learner(spec.training.reward)
    run_until(state, spec.engine, trace.horizon_ms, random.Random(derive_seed(seed, "engine")))
    return trace, state


# ---------------------------------------------------------------- training

def training_trace(spec: ExperimentSpec, training: TrainingProtocol, seed: int, k: int) -> SignalTrace:
    stim = spec.probe.stimulus if spec.probe is not None else None
    r = random.Random(derive_seed(seed, "train", k))
    onset_lo, onset_hi = (stim.onset_min_ms, stim.onset_max_ms) if stim else (100.0, 600.0)
    onset = r.uniform(onset_lo, onset_hi)
    dur = r.uniform(training.duration_min_ms, training.duration_max_ms)
    amp = stim.default_amplitude if stim else 3.0
    tail = stim.tail_ms if stim else 400.0
    ev = SignalEvent(f"train-{k}", onset, dur, amp)
    return SignalTrace((ev,), ev.offset_ms + tail)


def train_trial(rules: dict[str, Production], memory: DeclarativeMemory, spec: ExperimentSpec,
                cfg: MechanismConfig, learner: Learner, seed: int, k: int,
                training: TrainingProtocol) -> tuple[dict[str, Production], list[Event]]:
    gate = spec.probe.stimulus.gate if spec.probe is not None else None
    trace = training_trace(spec, training, seed, k)
    learner.begin_trial()
    state = fresh_state(rules, memory, trace, gate, learner)
    run_until(state, cfg, trace.horizon_ms, random.Random(derive_seed(seed, "train-engine", k)))
    learned = [e for e in state.trace if e.kind in LEARNING_KINDS]
    return state.rules, learned


def probe_thresholds(rules: dict[str, Production], memory: DeclarativeMemory, spec: ExperimentSpec,
                     cfg: MechanismConfig, probe: ProbeSpec, seed: int, condition: str,
                     boot_tag=(), traces=None) -> list[ThresholdResult]:
    """Frozen-policy threshold measurement on every configured axis."""
    factory = engine_factory(rules, memory, probe.stimulus.gate)
    base = derive_seed(seed, "probe")
    out = []
    for axis in probe.axes:
        levels = probe.levels(axis)
        shared = traces.get(axis) if traces is not None else None
        if shared is None:
            shared = stimulus_set(probe.stimulus, axis, levels, probe.trials, derive_seed(seed, "stimulus"))
        data = run_constant_stimuli(factory, cfg, axis, levels, probe.trials, base, probe.stimulus, shared)
        rng = np.random.default_rng(derive_seed(seed, "boot", axis.value, *boot_tag))
        out.append(estimate_threshold(data, probe.criterion, probe.n_boot, rng, condition, seed))
    return out


# ---------------------------------------------------------------- stages

@dataclass
class ProbeRow:
    seed: int
    probe: int
    trial: int
    stage: StageLabel
    compiled_fraction: float
    episodes: int
    focus: FocusMode
    result: ThresholdResult


@dataclass
class TrajectoryRow:
    seed: int
    trial: int
    episodes: int
    compiled_fraction: float
    stage: StageLabel


@dataclass
class StageReport:
    probes: list[ProbeRow] = field(default_factory=list)
    trajectory: list[TrajectoryRow] = field(default_factory=list)
    events: list[tuple[int, int, Event]] = field(default_factory=list)  # (seed, trial, event)


def _stage_now(episodes: list, window: int) -> tuple[float, StageLabel]:
    if not episodes:
        return 0.0, StageLabel.NOVICE
    f = compiled_fraction(episodes, window)
    return f, stage_for_fraction(f)


def run_stages_seed(spec: ExperimentSpec, seed: int) -> StageReport:
    training = spec.training
    if training is None:
        raise ValueError("the stages experiment needs a [training] protocol")
    cfg = validate(spec.engine)
    memory = task_memory(spec.task, cfg.default_latency_ms)
    rules = {p.id: p for p in monitoring_rules(spec.task)}
    learner = Learner(training.reward)
    report = StageReport()
    probe = spec.probe
    focus_modes = [cfg.focus_mode] + [m for m in (probe.focus_modes if probe else ()) if m != cfg.focus_mode]
    probe_at = sorted(set(range(0, training.n_trials, training.probe_every)) | {training.n_trials})

    def do_probe(index: int, trial: int) -> None:
        f, stage = _stage_now(learner.episodes, training.window)
        for focus in focus_modes:
            pcfg = replace(cfg, focus_mode=focus)
            before = dict(rules)
            results = probe_thresholds(rules, memory, spec, pcfg, probe, seed,
                                       condition=f"probe{index}-{focus.value}",
                                       boot_tag=(index, focus.value))
            assert rules == before, "threshold probes must not change the policy"
            for res in results:
                report.probes.append(ProbeRow(seed, index, trial, stage, f, len(learner.episodes), focus, res))

    n_probe = 0
    for k in range(training.n_trials + 1):
        if probe is not None and k in probe_at:
            do_probe(n_probe, k)
            n_probe += 1
        if k == training.n_trials:
            break
        rules, learned = train_trial(rules, memory, spec, cfg, learner, seed, k, training)
        report.events.extend((seed, k, e) for e in learned)
        f, stage = _stage_now(learner.episodes, training.window)
        report.trajectory.append(TrajectoryRow(seed, k + 1, len(learner.episodes), f, stage))
    return report


def run_stages_experiment(spec: ExperimentSpec) -> StageReport:
    total = StageReport()
    for seed in spec.seeds:
        r = run_stages_seed(spec, seed)
        total.probes.extend(r.probes)
        total.trajectory.extend(r.trajectory)
        total.events.extend(r.events)
    return total


# ---------------------------------------------------------------- ablation

@dataclass
class AblationRow:
    variant: str
    seed: int
    result: ThresholdResult
    diff: float = float("nan")
    diff_low: float = float("nan")
    diff_high: float = float("nan")


@dataclass
class AblationReport:
    rows: list[AblationRow] = field(default_factory=list)
    traces: dict[int, dict[Axis, dict]] = field(default_factory=dict)  # seed -> axis -> stimulus set


def baseline_config(cfg: MechanismConfig) -> MechanismConfig:
    """All four speed-up mechanisms switched off."""
    return replace(cfg, clock_scale=1.0, compilation_enabled=False, focus_mode=FocusMode.OPEN,
                   complexity_timing=False, monitor_complexity=None)


def standard_variants(spec: ExperimentSpec) -> list[tuple[str, MechanismConfig]]:
    from ..mechanisms import Complexity
    base = baseline_config(spec.engine)
    table = {
        "baseline": base,
        "clock": replace(base, clock_scale=spec.ablation.fast_clock_scale),
        "compilation": replace(base, compilation_enabled=True),
        "focus": replace(base, focus_mode=FocusMode.NARROW),
        "complexity": replace(base, complexity_timing=True, monitor_complexity=Complexity.SIMPLE),
    }
    return [("baseline", base)] + [(name, table[name]) for name in spec.ablation.variants]


def run_ablation(spec: ExperimentSpec, variants: Sequence[tuple[str, MechanismConfig]]) -> AblationReport:
    """Compare mechanism variants against the first (baseline) entry.

    Every arm replays the same warm-up and probe stimuli and the same engine
    seeds; only the configuration differs.
    """
    if len(variants) < 2:
        raise ValueError("an ablation needs a baseline and at least one variant")
    checked = []
    problems = []
    for name, cfg in variants:
        try:
            checked.append((name, validate(cfg)))
        except Exception as exc:
            problems.append(f"{name}: {exc}")
    if problems:
        from ..mechanisms import ConfigError
        raise ConfigError([("variant", p) for p in problems])
    probe = spec.probe
    if probe is None:
        raise ValueError("the ablation needs a [probe] protocol")
    task = replace(spec.task, distractors=spec.ablation.distractors)
    aspec = replace(spec, task=task)
    training = spec.training or TrainingProtocol()
    report = AblationReport()
    for seed in spec.seeds:
        shared = {axis: stimulus_set(probe.stimulus, axis, probe.levels(axis), probe.trials,
                                     derive_seed(seed, "stimulus")) for axis in probe.axes}
        report.traces[seed] = shared
        per_arm: dict[str, list[ThresholdResult]] = {}
        for name, cfg in checked:
            memory = task_memory(task, cfg.default_latency_ms)
            rules = {p.id: p for p in monitoring_rules(task)}
            learner = Learner(training.reward)
            for k in range(spec.ablation.warmup_trials):
                rules, _ = train_trial(rules, memory, aspec, cfg, learner, seed, k, training)
            per_arm[name] = probe_thresholds(rules, memory, aspec, cfg, probe, seed, name,
                                             boot_tag=(name,), traces=shared)
        base_name = checked[0][0]
        for name, _ in checked:
            for res, base in zip(per_arm[name], per_arm[base_name]):
                row = AblationRow(name, seed, res)
                if res.estimate is not None and base.estimate is not None:
                    row.diff = res.estimate.level_at_criterion - base.estimate.level_at_criterion
                    diffs = res.samples - base.samples
                    if np.isfinite(diffs).sum() >= 2:
                        row.diff_low, row.diff_high = percentile_ci(diffs)
                report.rows.append(row)
    return report


# ---------------------------------------------------------------- threshold

def run_threshold(spec: ExperimentSpec) -> list[ThresholdResult]:
    if spec.probe is None:
        raise ValueError("the threshold run needs a [probe] protocol")
    cfg = validate(spec.engine)
    out = []
    for seed in spec.seeds:
        memory = task_memory(spec.task, cfg.default_latency_ms)
        rules = {p.id: p for p in monitoring_rules(spec.task)}
        out.extend(probe_thresholds(rules, memory, spec, cfg, spec.probe, seed, spec.name))
    return out
