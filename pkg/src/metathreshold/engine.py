"""The cognition cycle.

Each ``step`` samples the interoceptive buffer, delivers due retrievals,
matches productions against the buffers, picks one by noisy utility and fires
it. Actions take effect when the firing ends. With nothing to fire the engine
either waits for a pending retrieval (fire-when-ready) or idles for one tick.
"""

from __future__ import annotations

import copy
import enum
import math
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .chunks import BufferPattern, Chunk, ChunkRequest, Var, match_all, substitute
from .mechanisms import (COMPLEX_RANGE_MS, SIMPLE_RANGE_MS, Complexity, MechanismConfig,
                         apply_focus)
from .memory import DeclarativeMemory, RetrievalTicket, fulfill, issue_retrieval
from .signals import AFFECT_TYPE, Interoception, sample_interoceptive
from .trace import Event, format_detail, format_time

BUFFERS = ("goal", "retrieval", "interoceptive")


class Provenance(enum.Enum):
    AUTHORED = "authored"
    COMPILED = "compiled"


class ProductionError(ValueError):
    pass


# ---------------------------------------------------------------- actions

@dataclass(frozen=True)
class Modify:
    buffer: str
    slots: tuple[tuple[str, Any], ...]
    type_name: str | None = None  # used only when the buffer is empty


@dataclass(frozen=True)
class Clear:
    buffer: str


@dataclass(frozen=True)
class Request:
    request: ChunkRequest
    buffer: str = "retrieval"


@dataclass(frozen=True)
class Mark:
    """Emit a detection mark for the given event id."""

    event: Any


Action = Modify | Clear | Request | Mark


def action_variables(action: Action) -> set[Var]:
    if isinstance(action, Modify):
        return {v for _, v in action.slots if isinstance(v, Var)}
    if isinstance(action, Request):
        return {v for _, v in action.request.slots if isinstance(v, Var)}
    if isinstance(action, Mark):
        return {action.event} if isinstance(action.event, Var) else set()
    return set()


@dataclass(frozen=True)
class Production:
    id: str
    conditions: tuple[BufferPattern, ...]
    actions: tuple[Action, ...]
    utility: float = 0.0
    complexity: Complexity = Complexity.COMPLEX
    provenance: Provenance = Provenance.AUTHORED
    is_monitor: bool = False
    category: str = "task"

    def __post_init__(self):
        if not self.id:
            raise ProductionError("production id must be non-empty")
        if not math.isfinite(self.utility):
            raise ProductionError(f"{self.id}: utility must be finite")
        bound = set().union(*(p.variables() for p in self.conditions)) if self.conditions else set()
        for a in self.actions:
            unbound = action_variables(a) - bound
            if unbound:
                raise ProductionError(f"{self.id}: action uses unbound variables {sorted(unbound)}")

    @property
    def requests_retrieval(self) -> bool:
        return any(isinstance(a, Request) for a in self.actions)

    def tests_buffer(self, name: str) -> bool:
        return any(p.buffer == name and not p.empty for p in self.conditions)


@dataclass(frozen=True)
class Instantiation:
    production: Production
    bindings: tuple[tuple[Var, Any], ...] = ()

    @property
    def production_id(self) -> str:
        return self.production.id

    def binding_map(self) -> dict[Var, Any]:
        return dict(self.bindings)


# ---------------------------------------------------------------- state

@dataclass
class Buffer:
    name: str
    content: Chunk | None = None
    pending: RetrievalTicket | None = None
    origin: str | None = None  # production whose request filled this buffer


@dataclass
class EngineState:
    rules: dict[str, Production] = field(default_factory=dict)
    memory: DeclarativeMemory = field(default_factory=DeclarativeMemory)
    buffers: dict[str, Buffer] = field(default_factory=lambda: {n: Buffer(n) for n in BUFFERS})
    clock: float = 0.0
    trace: list[Event] = field(default_factory=list)
    signals: Interoception | None = None
    learner: Any = None
    last_fired: str | None = None

    def add_rule(self, p: Production) -> None:
        self.rules[p.id] = p

    def contents(self) -> dict[str, Chunk | None]:
        return {name: b.content for name, b in self.buffers.items()}

    def buffer_snapshot(self) -> tuple:
        """Hashable view of buffer contents and pending requests, for comparisons."""
        return tuple(
            (name, b.content, None if b.pending is None else b.pending.outcome)
            for name, b in sorted(self.buffers.items())
        )

    def clone(self) -> "EngineState":
        return copy.deepcopy(self)


def new_state(rules: Iterable[Production] = (), memory: DeclarativeMemory | None = None,
              goal: Chunk | None = None, signals: Interoception | None = None,
              extra_buffers: Sequence[str] = ()) -> EngineState:
    state = EngineState(memory=memory if memory is not None else DeclarativeMemory())
    for name in extra_buffers:
        state.buffers.setdefault(name, Buffer(name))
    for p in rules:
        if p.id in state.rules:
            raise ProductionError(f"duplicate production id {p.id}")
        state.add_rule(p)
    state.buffers["goal"].content = goal
    state.signals = signals
    return state


# ---------------------------------------------------------------- operations

def match_conflict_set(state: EngineState) -> list[Instantiation]:
    contents = state.contents()
    out = []
    for pid in sorted(state.rules):
        p = state.rules[pid]
        b = match_all(p.conditions, contents)
        if b is not None:
            out.append(Instantiation(p, tuple(b.items())))
    return out


def logistic_noise(rng: random.Random, scale: float) -> float:
    u = rng.random()
    while u <= 0.0:
        u = rng.random()
    return scale * math.log(u / (1.0 - u))


def select_production(conflict: Sequence[Instantiation], rng: random.Random,
                      noise_scale: float) -> Instantiation | None:
    """Highest utility plus logistic noise; exact ties go to the smallest id."""
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    best = None
    best_key = None
    for inst in sorted(conflict, key=lambda i: i.production.id):
        v = inst.production.utility
        if noise_scale > 0:
            v += logistic_noise(rng, noise_scale)
        if best is None or v > best_key:
            best, best_key = inst, v
    return best


def effective_complexity(p: Production, cfg: MechanismConfig) -> Complexity:
    if cfg.monitor_complexity is not None and p.category == cfg.focus_class:
        return cfg.monitor_complexity
    return p.complexity


def firing_duration(p: Production, cfg: MechanismConfig, rng: random.Random) -> float:
    if not cfg.cycle_time_ms > 0:
        raise ValueError("cycle_time_ms must be > 0")
    if not cfg.clock_scale > 0:
        raise ValueError("clock_scale must be > 0")
    if not cfg.complexity_timing:
        base = cfg.cycle_time_ms
    else:
        lo, hi = SIMPLE_RANGE_MS if effective_complexity(p, cfg) == Complexity.SIMPLE else COMPLEX_RANGE_MS
        base = rng.uniform(lo, hi)
    return base * cfg.clock_scale


def _apply_action(state: EngineState, p: Production, action: Action, bindings: dict,
                  cfg: MechanismConfig, rng, now: float, marks: list) -> None:
    log = state.trace.append
    if isinstance(action, Modify):
        buf = state.buffers[action.buffer]
        changes = {k: substitute(v, bindings) for k, v in action.slots}
        if buf.content is None:
            buf.content = Chunk(action.type_name or action.buffer, tuple(changes.items()))
        else:
            buf.content = buf.content.updated(changes)
    elif isinstance(action, Clear):
        state.buffers[action.buffer].content = None
    elif isinstance(action, Request):
        buf = state.buffers[action.buffer]
        ticket = issue_retrieval(state.memory, action.request.resolved(bindings), now, cfg, rng, origin=p.id)
        buf.content = None
        buf.pending = ticket  # a new request preempts any pending one
        outcome = ticket.outcome.id if ticket.outcome is not None else "failure"
        log(Event(now, "retrieval-start", p.id,
                  f"buffer={action.buffer};completes={format_time(ticket.completes_at)};outcome={outcome}"))
    elif isinstance(action, Mark):
        ev = substitute(action.event, bindings)
        marks.append(ev)
        log(Event(now, "detection", p.id, f"event={ev}"))
    else:  # pragma: no cover
        raise TypeError(f"unknown action {action!r}")


def fire(state: EngineState, inst: Instantiation, cfg: MechanismConfig, rng: random.Random) -> float:
    p = inst.production
    t = state.clock
    log = state.trace.append
    dur = firing_duration(p, cfg, rng)
    ev_id = None
    if p.tests_buffer("interoceptive"):
        c = state.buffers["interoceptive"].content
        if c is not None and c.type_name == AFFECT_TYPE:
            ev_id = c.get("event")
    monitor = p.is_monitor and ev_id is not None
    detail = format_detail(dur=dur, monitor=True if monitor else None, event=ev_id if monitor else None)
    log(Event(t, "select", p.id, f"u={p.utility!r}"))
    log(Event(t, "fire-start", p.id, detail))
    snapshot = state.contents()
    end = t + dur
    state.clock = end
    log(Event(end, "fire-end", p.id, detail))
    bindings = inst.binding_map()
    marks: list = []
    for action in p.actions:
        _apply_action(state, p, action, bindings, cfg, rng, end, marks)
    if state.learner is not None:
        state.learner.on_fire(state, cfg, p, t, end, snapshot, marks)
    state.last_fired = p.id
    return dur


def step(state: EngineState, cfg: MechanismConfig, rng: random.Random) -> EngineState:
    t = state.clock
    log = state.trace.append
    if state.signals is not None:
        c = sample_interoceptive(state.signals.trace, t, state.signals.gate, rng)
        state.buffers["interoceptive"].content = c
        if c is not None:
            log(Event(t, "signal-deposit", "-", f"event={c.get('event')}"))
    for buf in state.buffers.values():
        if buf.pending is not None and buf.pending.completes_at <= t:
            outcome = buf.pending.outcome
            fulfill(buf.pending, state, buf.name)
            log(Event(t, "retrieval-complete", buf.origin or "-",
                      f"buffer={buf.name};chunk={outcome.id if outcome is not None else 'failure'}"))

    conflict = match_conflict_set(state)
    log(Event(t, "match", "-", f"n={len(conflict)}"))
    conflict = apply_focus(cfg, conflict)
    inst = select_production(conflict, rng, cfg.noise_scale)
    if inst is not None:
        fire(state, inst, cfg, rng)
        return state

    pending = [b.pending.completes_at for b in state.buffers.values() if b.pending is not None]
    if pending:
        # fire when ready: wait for the delivery, but wake for signal changes
        target = min(pending)
        if state.signals is not None:
            nxt = state.signals.trace.next_change_after(t)
            if nxt is not None and nxt < target:
                target = nxt
        state.clock = target
    else:
        state.clock = t + cfg.tick_ms
    return state


def run_until(state: EngineState, cfg: MechanismConfig, t_end: float, rng: random.Random) -> EngineState:
    if t_end < state.clock:
        raise ValueError(f"t_end {t_end} is before the current clock {state.clock}")
    while state.clock < t_end:
        step(state, cfg, rng)
    return state
