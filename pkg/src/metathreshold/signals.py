"""Fleeting internal signal events, interoceptive sampling and detection scoring."""

from __future__ import annotations

import bisect
import csv
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from .chunks import Chunk
from .trace import Event, parse_detail

AFFECT_TYPE = "affect-sample"
TRACE_COLUMNS = ("event_id", "onset_ms", "duration_ms", "amplitude")


@dataclass(frozen=True)
class SignalEvent:
    id: str
    onset_ms: float
    duration_ms: float
    amplitude: float

    def __post_init__(self):
        if not (self.onset_ms >= 0 and self.duration_ms > 0 and self.amplitude > 0):
            raise ValueError(f"invalid signal event {self}")

    @property
    def offset_ms(self) -> float:
        return self.onset_ms + self.duration_ms

    def active(self, t: float) -> bool:
        return self.onset_ms <= t < self.onset_ms + self.duration_ms


@dataclass(frozen=True)
class SignalTrace:
    events: tuple[SignalEvent, ...]
    horizon_ms: float
    _onsets: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        for a, b in zip(events, events[1:]):
            if b.onset_ms < a.offset_ms:
                raise ValueError(f"events {a.id} and {b.id} overlap or are unsorted")
        if events and events[-1].offset_ms > self.horizon_ms:
            raise ValueError("events must end before the horizon")
        object.__setattr__(self, "_onsets", tuple(e.onset_ms for e in events))

    def __len__(self) -> int:
        return len(self.events)

    def active_at(self, t: float) -> SignalEvent | None:
        i = bisect.bisect_right(self._onsets, t) - 1
        if i >= 0 and self.events[i].active(t):
            return self.events[i]
        return None

    def next_change_after(self, t: float) -> float | None:
        """Earliest onset or offset strictly after ``t``."""
        i = bisect.bisect_right(self._onsets, t)
        best = None
        if i > 0 and self.events[i - 1].offset_ms > t:
            best = self.events[i - 1].offset_ms
        if i < len(self.events):
            onset = self.events[i].onset_ms
            best = onset if best is None else min(best, onset)
        return best


@dataclass(frozen=True)
class GateModel:
    gate_mean: float = 1.0
    gate_sd: float = 0.5

    def __post_init__(self):
        if not self.gate_sd >= 0:
            raise ValueError("gate_sd must be >= 0")


@dataclass(frozen=True)
class DetectionRecord:
    event_id: str
    detected: bool
    detect_time_ms: float | None = None
    detecting_production: str | None = None


@dataclass
class Interoception:
    """Engine-side signal source: the stimulus trace plus the amplitude gate."""

    trace: SignalTrace
    gate: GateModel = field(default_factory=GateModel)


def generate_trace(rate_per_s: float, duration_dist: tuple[float, float], amplitude: float,
                   horizon_ms: float, rng: random.Random, prefix: str = "e") -> SignalTrace:
    """Poisson onsets with uniform durations; a candidate overlapping the previous kept event is dropped."""
    lo, hi = duration_dist
    if not (rate_per_s > 0 and 0 < lo <= hi and horizon_ms > 0 and amplitude > 0):
        raise ValueError("need rate > 0, 0 < min <= max, horizon > 0, amplitude > 0")
    rate_per_ms = rate_per_s / 1000.0
    events: list[SignalEvent] = []
    t = 0.0
    last_end = -math.inf
    n = 0
    while True:
        t += rng.expovariate(rate_per_ms)
        if t >= horizon_ms:
            break
        dur = lo if lo == hi else rng.uniform(lo, hi)
        if t < last_end or t + dur > horizon_ms:
            continue
        events.append(SignalEvent(f"{prefix}{n}", t, dur, amplitude))
        n += 1
        last_end = t + dur
    return SignalTrace(tuple(events), horizon_ms)


def sample_interoceptive(trace: SignalTrace, t_ms: float, gate: GateModel, rng: random.Random) -> Chunk | None:
    ev = trace.active_at(t_ms)
    if ev is None:
        return None
    noise = rng.gauss(0.0, gate.gate_sd) if gate.gate_sd > 0 else 0.0
    if ev.amplitude + noise > gate.gate_mean:
        return Chunk(AFFECT_TYPE, (("event", ev.id),))
    return None


def score_detections(trace: SignalTrace, log: Sequence[Event], detect_at: str = "start") -> list[DetectionRecord]:
    """An event counts as detected when a monitor firing that matched its
    affect sample starts (or ends, with ``detect_at='end'``) inside its window.
    The first qualifying firing wins."""
    kind = "fire-start" if detect_at == "start" else "fire-end"
    firsts: dict[str, tuple[float, str]] = {}
    by_id = {e.id: e for e in trace.events}
    for entry in log:
        if entry.kind != kind:
            continue
        d = parse_detail(entry.detail)
        if d.get("monitor") != "1" or "event" not in d:
            continue
        ev = by_id.get(d["event"])
        if ev is None or ev.id in firsts:
            continue
        if ev.onset_ms <= entry.time <= ev.offset_ms:
            firsts[ev.id] = (entry.time, entry.production_id)
    out = []
    for ev in trace.events:
        hit = firsts.get(ev.id)
        if hit is None:
            out.append(DetectionRecord(ev.id, False))
        else:
            out.append(DetectionRecord(ev.id, True, hit[0], hit[1]))
    return out


def write_trace_csv(events: Iterable[SignalEvent], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for e in events:
        w.writerow((e.id, repr(float(e.onset_ms)), repr(float(e.duration_ms)), repr(float(e.amplitude))))


def read_trace_csv(fh: TextIO) -> list[SignalEvent]:
    r = csv.DictReader(fh)
    if tuple(r.fieldnames or ()) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace CSV header {r.fieldnames}")
    return [SignalEvent(row["event_id"], float(row["onset_ms"]), float(row["duration_ms"]),
                        float(row["amplitude"])) for row in r]
