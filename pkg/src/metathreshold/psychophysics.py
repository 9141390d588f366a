"""Method of constant stimuli, logistic psychometric fits and thresholds."""

from __future__ import annotations

import enum
import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .engine import EngineState, run_until
from .mechanisms import MechanismConfig
from .signals import GateModel, SignalEvent, SignalTrace, score_detections


class Axis(enum.Enum):
    DURATION = "duration"
    AMPLITUDE = "amplitude"


class DegenerateFitError(ValueError):
    def __init__(self, direction: str):
        self.direction = direction
        super().__init__(f"degenerate psychometric data: every level at {direction} "
                         f"({'no detections' if direction == 'floor' else 'all detected'})")


class BootstrapInstabilityError(RuntimeError):
    pass


class TrialError(RuntimeError):
    def __init__(self, level: float, trial: int, cause: Exception):
        self.level, self.trial = level, trial
        super().__init__(f"trial {trial} at level {level}: {cause!r}")


@dataclass(frozen=True)
class PsychometricData:
    axis: Axis
    levels: tuple[float, ...]
    trials_per_level: int
    detect_counts: tuple[int, ...]

    def __post_init__(self):
        levels = tuple(float(x) for x in self.levels)
        counts = tuple(int(c) for c in self.detect_counts)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "detect_counts", counts)
        if self.trials_per_level < 1:
            raise ValueError("trials_per_level must be >= 1")
        if len(levels) != len(counts):
            raise ValueError("levels and detect_counts must align")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if any(c < 0 or c > self.trials_per_level for c in counts):
            raise ValueError("counts must lie in [0, trials]")

    @property
    def rates(self) -> np.ndarray:
        return np.asarray(self.detect_counts, float) / self.trials_per_level


@dataclass(frozen=True)
class LogisticFit:
    midpoint: float
    slope: float
    lapse: float = 0.0
    guess: float = 0.0
    log_likelihood: float = float("nan")

    def p(self, level):
        x = np.asarray(level, float)
        core = expit(self.slope * (x - self.midpoint))
        return self.guess + (1.0 - self.guess - self.lapse) * core


@dataclass(frozen=True)
class ThresholdEstimate:
    level_at_criterion: float
    criterion: float = 0.5
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    slope: float = float("nan")


# ---------------------------------------------------------------- fitting

_EPS = 1e-12
SLOPE_MIN = 1e-4
MAX_GUESS_LAPSE = 0.1


def _loglik(levels, counts, n, mid, slope, guess=0.0, lapse=0.0):
    mid = np.asarray(mid, float)[..., None]
    slope = np.asarray(slope, float)[..., None]
    p = guess + (1.0 - guess - lapse) * expit(slope * (levels - mid))
    p = np.clip(p, _EPS, 1 - _EPS)
    return (counts * np.log(p) + (n - counts) * np.log1p(-p)).sum(axis=-1)


def slope_bounds(levels: Sequence[float]) -> tuple[float, float]:
    span = levels[-1] - levels[0]
    return SLOPE_MIN, 10.0 / span


def fit_logistic(data: PsychometricData, fit_guess_lapse: bool = False, grid_size: int = 41,
                 rel_tol: float = 1e-6, refine_slope_factor: float = 100.0,
                 max_sweeps: int = 200) -> LogisticFit:
    """Maximum-likelihood logistic fit.

    Coarse grid over midpoint in [min level, max level] and log-spaced slope
    in [1e-4, 10/range]; then coordinate descent until the relative
    log-likelihood gain drops below ``rel_tol``. Refinement may push the
    slope up to ``refine_slope_factor`` times the grid ceiling, which keeps
    nearly step-like data from pinning the slope at the grid edge.
    """
    counts = np.asarray(data.detect_counts, float)
    n = float(data.trials_per_level)
    if counts.sum() == 0:
        raise DegenerateFitError("floor")
    if (counts == n).all():
        raise DegenerateFitError("ceiling")
    levels = np.asarray(data.levels, float)
    span = levels[-1] - levels[0]
    s_lo, s_hi = slope_bounds(data.levels)

    mids = np.linspace(levels[0], levels[-1], grid_size)
    slopes = np.geomspace(s_lo, s_hi, grid_size)
    M, S = np.meshgrid(mids, slopes, indexing="ij")
    ll = _loglik(levels, counts, n, M.ravel(), S.ravel())
    best = int(np.argmax(ll))
    params = {"mid": float(M.ravel()[best]), "log_slope": math.log(S.ravel()[best]),
              "guess": 0.0, "lapse": 0.0}
    bounds = {"mid": (levels[0] - span, levels[-1] + span),
              "log_slope": (math.log(s_lo), math.log(s_hi * refine_slope_factor)),
              "guess": (0.0, MAX_GUESS_LAPSE), "lapse": (0.0, MAX_GUESS_LAPSE)}
    keys = ["mid", "log_slope"] + (["guess", "lapse"] if fit_guess_lapse else [])

    def ll_of(pr):
        return float(_loglik(levels, counts, n, pr["mid"], math.exp(pr["log_slope"]),
                             pr["guess"], pr["lapse"]))

    current = ll_of(params)
    for _ in range(max_sweeps):
        before = current
        for k in keys:
            def neg(x, k=k):
                trial = dict(params)
                trial[k] = x
                return -ll_of(trial)
            lo, hi = bounds[k]
            res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-10 * max(1.0, abs(hi - lo))})
            if -res.fun > current:
                params[k] = float(res.x)
                current = -float(res.fun)
        if abs(current - before) <= rel_tol * max(abs(before), 1e-12):
            break
    return LogisticFit(params["mid"], math.exp(params["log_slope"]), params["lapse"],
                       params["guess"], current)


def threshold(fit: LogisticFit, criterion: float = 0.5) -> ThresholdEstimate:
    if not (fit.guess < criterion < 1.0 - fit.lapse):
        raise ValueError(f"criterion {criterion} outside the invertible range "
                         f"({fit.guess}, {1.0 - fit.lapse})")
    ratio = (1.0 - fit.guess - fit.lapse) / (criterion - fit.guess) - 1.0
    level = fit.midpoint - math.log(ratio) / fit.slope
    return ThresholdEstimate(level, criterion, level, level, fit.slope)


def bootstrap_samples(data: PsychometricData, criterion: float, n_boot: int,
                      rng: np.random.Generator, **fit_kwargs) -> np.ndarray:
    """Thresholds refit on binomial resamples; NaN marks a degenerate resample."""
    p_hat = data.rates
    out = np.full(n_boot, np.nan)
    draws = rng.binomial(data.trials_per_level, p_hat, size=(n_boot, len(p_hat)))
    for b in range(n_boot):
        resample = PsychometricData(data.axis, data.levels, data.trials_per_level, tuple(draws[b]))
        try:
            out[b] = threshold(fit_logistic(resample, **fit_kwargs), criterion).level_at_criterion
        except (DegenerateFitError, ValueError):
            continue
    return out


def percentile_ci(samples: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    ok = samples[np.isfinite(samples)]
    a = (1.0 - level) / 2.0
    return float(np.quantile(ok, a)), float(np.quantile(ok, 1.0 - a))


def check_stability(samples: np.ndarray, max_bad: float = 0.2) -> None:
    bad = float(np.mean(~np.isfinite(samples)))
    if bad > max_bad:
        raise BootstrapInstabilityError(f"{bad:.0%} of bootstrap resamples were degenerate")


def bootstrap_threshold(data: PsychometricData, criterion: float, n_boot: int,
                        rng: np.random.Generator, **fit_kwargs) -> ThresholdEstimate:
    if n_boot < 100:
        raise ValueError("n_boot must be >= 100")
    point = threshold(fit_logistic(data, **fit_kwargs), criterion)
    samples = bootstrap_samples(data, criterion, n_boot, rng, **fit_kwargs)
    check_stability(samples)
    lo, hi = percentile_ci(samples)
    level = point.level_at_criterion
    return ThresholdEstimate(level, criterion, min(lo, level), max(hi, level), point.slope)


# ---------------------------------------------------------------- running

def derive_seed(*parts) -> int:
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class StimulusProtocol:
    """How a single-event trial is laid out. The axis not being varied is
    held at its default."""

    onset_min_ms: float = 100.0
    onset_max_ms: float = 600.0
    default_duration_ms: float = 400.0
    default_amplitude: float = 3.0
    tail_ms: float = 400.0
    gate: GateModel = field(default_factory=GateModel)

    def event(self, axis: Axis, level: float, onset: float, event_id: str) -> SignalEvent:
        if axis == Axis.DURATION:
            return SignalEvent(event_id, onset, level, self.default_amplitude)
        return SignalEvent(event_id, onset, self.default_duration_ms, level)


def trial_trace(stim: StimulusProtocol, axis: Axis, level_index: int, level: float, trial: int,
                base_seed: int) -> SignalTrace:
    # onset depends on the trial only, so every level shares the same onsets
    onset = random.Random(derive_seed("onset", base_seed, trial)).uniform(stim.onset_min_ms, stim.onset_max_ms)
    ev = stim.event(axis, level, onset, f"{axis.value[0]}{level_index}-{trial}")
    return SignalTrace((ev,), ev.offset_ms + stim.tail_ms)


def stimulus_set(stim: StimulusProtocol, axis: Axis, levels: Sequence[float], trials_per_level: int,
                 base_seed: int) -> dict[tuple[int, int], SignalTrace]:
    return {(i, k): trial_trace(stim, axis, i, lv, k, base_seed)
            for i, lv in enumerate(levels) for k in range(trials_per_level)}


EngineFactory = Callable[[SignalTrace], EngineState]


def run_trial(engine_factory: EngineFactory, cfg: MechanismConfig, trace: SignalTrace,
              seed: int) -> bool:
    state = engine_factory(trace)
    run_until(state, cfg, trace.horizon_ms, random.Random(seed))
    return score_detections(trace, state.trace, cfg.detect_at)[0].detected


def run_constant_stimuli(engine_factory: EngineFactory, cfg: MechanismConfig, axis: Axis,
                         levels: Sequence[float], trials_per_level: int, base_seed: int,
                         stim: StimulusProtocol | None = None,
                         traces: Mapping[tuple[int, int], SignalTrace] | None = None) -> PsychometricData:
    """Count detections per level. Each (level, trial) cell is an isolated
    engine with its own derived seed; ``traces`` replays a shared stimulus set."""
    if len(levels) < 2:
        raise ValueError("need at least two levels")
    if trials_per_level < 1:
        raise ValueError("need at least one trial per level")
    stim = stim or StimulusProtocol()
    counts = []
    for i, level in enumerate(levels):
        hits = 0
        for k in range(trials_per_level):
            trace = traces[(i, k)] if traces is not None else trial_trace(stim, axis, i, level, k, base_seed)
            try:
                hits += run_trial(engine_factory, cfg, trace, derive_seed(base_seed, i, k))
            except Exception as exc:
                raise TrialError(level, k, exc) from exc
        counts.append(hits)
    return PsychometricData(axis, tuple(levels), trials_per_level, tuple(counts))
