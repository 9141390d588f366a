"""Utility learning, production compilation and skill-stage classification."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Any, Sequence

from .chunks import BufferPattern, Chunk, SlotTest, Var, match_all, substitute
from .engine import (Clear, EngineState, Mark, Modify, Production, Provenance, Request)
from .mechanisms import Complexity, MechanismConfig
from .trace import Event, format_detail


class CompilationError(ValueError):
    pass


@dataclass(frozen=True)
class UtilityParams:
    alpha: float = 0.2
    reward_magnitude: float = 10.0
    time_cost_per_ms: float = 0.02

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not math.isfinite(self.reward_magnitude):
            raise ValueError("reward_magnitude must be finite")
        if not (math.isfinite(self.time_cost_per_ms) and self.time_cost_per_ms >= 0):
            raise ValueError("time_cost_per_ms must be finite and >= 0")

    def effective_reward(self, elapsed_ms: float) -> float:
        return self.reward_magnitude - self.time_cost_per_ms * elapsed_ms


def update_utility(p: Production, params: UtilityParams, elapsed_ms: float) -> Production:
    """One temporal-difference step toward the time-discounted reward."""
    if not (math.isfinite(elapsed_ms) and math.isfinite(p.utility)):
        raise ValueError("utility update needs finite inputs")
    if elapsed_ms < 0:
        raise ValueError("elapsed_ms must be >= 0")
    r_eff = params.effective_reward(elapsed_ms)
    return replace(p, utility=p.utility + params.alpha * (r_eff - p.utility))


# ---------------------------------------------------------------- compilation

def _substitute_test(test: SlotTest, theta: dict[Var, Any]) -> SlotTest:
    if test.kind != "var":
        return test
    v = theta.get(test.value, test.value)
    if isinstance(v, Var):
        return SlotTest(test.slot, "var", v)
    return SlotTest(test.slot, "eq", v)


def _substitute_pattern(pat: BufferPattern, theta: dict[Var, Any]) -> BufferPattern:
    return BufferPattern(pat.buffer, pat.type_name, tuple(_substitute_test(t, theta) for t in pat.tests), pat.empty)


def _substitute_action(action, theta: dict[Var, Any]):
    if isinstance(action, Modify):
        return Modify(action.buffer, tuple((k, substitute(v, theta)) for k, v in action.slots), action.type_name)
    if isinstance(action, Request):
        return Request(action.request.resolved(theta), action.buffer)
    if isinstance(action, Mark):
        return Mark(substitute(action.event, theta))
    return action


def _resolve(theta: dict[Var, Any], v: Any) -> Any:
    seen = set()
    while isinstance(v, Var) and v in theta and v not in seen:
        seen.add(v)
        v = theta[v]
    return v


def _merge_actions(actions: Sequence) -> tuple:
    """Fold successive modifications of a buffer into one, respecting clears/requests."""
    out: list = []
    open_modify: dict[str, int] = {}
    for a in actions:
        if isinstance(a, Modify) and a.buffer in open_modify:
            i = open_modify[a.buffer]
            merged = dict(out[i].slots)
            merged.update(a.slots)
            out[i] = Modify(a.buffer, tuple(merged.items()), out[i].type_name or a.type_name)
            continue
        if isinstance(a, (Clear, Request)):
            open_modify.pop(a.buffer, None)
        out.append(a)
        if isinstance(a, Modify):
            open_modify[a.buffer] = len(out) - 1
    return tuple(out)


def compile_pair(p1: Production, p2: Production, retrieved: Chunk, simple: bool = True) -> Production:
    """Merge a retrieve-then-use pair into one production with the retrieved
    content baked in as constants.

    Conditions: p1's conditions plus whatever p2 tests that p1 neither
    establishes (through its modifications) nor already tests. Actions: p1's
    actions without the retrieval request, then p2's actions.
    """
    requests = [a for a in p1.actions if isinstance(a, Request)]
    if not requests:
        raise CompilationError(f"{p1.id} issues no retrieval request")
    rbuf = requests[-1].buffer
    r_pats = [c for c in p2.conditions if c.buffer == rbuf and not c.empty]
    if not r_pats:
        raise CompilationError(f"{p2.id} does not consume the {rbuf} buffer")
    req = requests[-1].request
    fixed = [(k, v) for k, v in req.slots if not isinstance(v, Var)]
    if retrieved.type_name != "retrieval-failure" and not (
            (req.type_name is None or req.type_name == retrieved.type_name)
            and all(retrieved.get(k) == v for k, v in fixed)):
        raise CompilationError(f"{retrieved} does not satisfy {p1.id}'s request")

    # keep p2's variable names apart from p1's
    p1_vars = set().union(*(c.variables() for c in p1.conditions)) if p1.conditions else set()
    p2_vars = set().union(*(c.variables() for c in p2.conditions))
    rename = {v: Var(f"{v.name}'") for v in p2_vars if v in p1_vars}
    p2_conds = [_substitute_pattern(c, rename) for c in p2.conditions]
    p2_actions = [_substitute_action(a, rename) for a in p2.actions]
    r_pats = [c for c in p2_conds if c.buffer == rbuf and not c.empty]

    theta = match_all(r_pats, {rbuf: retrieved})
    if theta is None:
        raise CompilationError(f"{retrieved} does not match {p2.id}'s {rbuf} conditions")
    theta = dict(theta)

    # what p1 leaves in each buffer it modifies or clears
    established: dict[str, dict[str, Any]] = {}
    cleared: set[str] = set()
    for a in p1.actions:
        if isinstance(a, Modify):
            established.setdefault(a.buffer, {}).update(dict(a.slots))
            cleared.discard(a.buffer)
        elif isinstance(a, Clear):
            cleared.add(a.buffer)
            established.pop(a.buffer, None)
    p1_tests: dict[tuple[str, str], SlotTest] = {}
    for c in p1.conditions:
        for t in c.tests:
            if t.kind != "absent":
                p1_tests.setdefault((c.buffer, t.slot), t)

    p2_ns = {rename.get(v, v) for v in p2_vars}

    def unify(var: Var, value: Any) -> None:
        # only p2's variables may be bound; p1's stay free in the child
        current = _resolve(theta, var)
        value = _resolve(theta, value)
        if current == value:
            return
        if isinstance(current, Var) and current in p2_ns:
            theta[current] = value
        elif isinstance(value, Var) and value in p2_ns:
            theta[value] = current
        else:
            raise CompilationError(f"{p1.id} and {p2.id} disagree on {var}: {current!r} vs {value!r}")

    kept: list[BufferPattern] = []
    for c in p2_conds:
        if c.buffer == rbuf:
            continue
        if c.buffer in cleared:
            if c.empty:
                continue
            raise CompilationError(f"{p2.id} tests {c.buffer}, which {p1.id} clears")
        est = established.get(c.buffer, {})
        rest: list[SlotTest] = []
        for t in c.tests:
            if t.slot in est:
                v1 = est[t.slot]
                if t.kind == "absent":
                    raise CompilationError(f"{p2.id} needs {c.buffer}.{t.slot} absent but {p1.id} sets it")
                if t.kind == "var":
                    unify(t.value, v1)
                elif isinstance(v1, Var):
                    raise CompilationError(f"{p2.id} tests {c.buffer}.{t.slot} against a value {p1.id} only binds")
                elif v1 != t.value:
                    raise CompilationError(f"{p2.id} tests {c.buffer}.{t.slot}={t.value!r} but {p1.id} sets {v1!r}")
                continue
            prior = p1_tests.get((c.buffer, t.slot))
            if c.buffer not in established and prior is not None and t.kind in ("var", "eq"):
                # same chunk, same slot: identify with what p1 already tested
                lhs = prior.value
                if t.kind == "var":
                    unify(t.value, lhs)
                    continue
                if prior.kind == "eq" and prior.value == t.value:
                    continue
            rest.append(t)
        if c.empty or rest or (c.type_name is not None and c.buffer not in established
                               and not any(pc.buffer == c.buffer and pc.type_name == c.type_name
                                           for pc in p1.conditions)):
            kept.append(BufferPattern(c.buffer, c.type_name, tuple(rest), c.empty))

    final = {v: _resolve(theta, v) for v in list(theta)}
    conditions: list[BufferPattern] = list(p1.conditions)
    for pat in kept:
        sp = _substitute_pattern(pat, final)
        if sp not in conditions:
            conditions.append(sp)

    actions = [a for a in p1.actions if not (isinstance(a, Request) and a.buffer == rbuf)]
    for a in p2_actions:
        if isinstance(a, Modify) and a.buffer == rbuf:
            raise CompilationError(f"{p2.id} modifies the {rbuf} buffer; cannot bake it in")
        actions.append(_substitute_action(a, final))

    complexity = Complexity.SIMPLE if simple else (
        Complexity.COMPLEX if Complexity.COMPLEX in (p1.complexity, p2.complexity) else Complexity.SIMPLE)
    tag = retrieved.id or retrieved.type_name
    return Production(
        id=f"{p1.id}+{p2.id}[{tag}]",
        conditions=tuple(conditions),
        actions=_merge_actions(actions),
        utility=0.0,
        complexity=complexity,
        provenance=Provenance.COMPILED,
        is_monitor=p1.is_monitor or p2.is_monitor,
        category=p1.category,
    )


@dataclass
class CompilationRecord:
    parent_first: str
    parent_second: str
    bound_chunk: Chunk
    child: str
    created_at: float
    recreation_count: int = 0


def _structure(p: Production) -> tuple:
    return (p.conditions, p.actions)


def integrate_compiled(state: EngineState, records: dict, p1: Production, p2: Production,
                       retrieved: Chunk, params: UtilityParams, now: float,
                       simple: bool = True) -> tuple[Production, CompilationRecord, bool]:
    """Add the compiled child to ``state.rules`` or, if an identical child exists,
    count the recreation and move its utility toward the parents' mean."""
    child = compile_pair(p1, p2, retrieved, simple=simple)
    key = _structure(child)
    rec = records.get(key)
    if rec is None:
        cid = child.id
        n = 1
        while cid in state.rules:
            n += 1
            cid = f"{child.id}#{n}"
        child = replace(child, id=cid)
        state.add_rule(child)
        rec = CompilationRecord(p1.id, p2.id, retrieved, cid, now)
        records[key] = rec
        state.trace.append(Event(now, "compile", cid, format_detail(
            parents=f"{p1.id}+{p2.id}", chunk=retrieved.id, recreated=0, u=0.0)))
        return child, rec, True
    rec.recreation_count += 1
    existing = state.rules[rec.child]
    target = UtilityParams(params.alpha, (p1.utility + p2.utility) / 2.0, 0.0)
    updated = update_utility(existing, target, 0.0)
    state.rules[rec.child] = updated
    state.trace.append(Event(now, "compile", rec.child, format_detail(
        parents=f"{p1.id}+{p2.id}", chunk=retrieved.id, recreated=rec.recreation_count, u=updated.utility)))
    return updated, rec, False


class Learner:
    """Engine hook: rewards true detections and compiles retrieve-then-use pairs.

    Credit goes to every production of the detecting production's category
    that fired since the previous reward, discounted by the time from its
    firing to the reward.
    """

    def __init__(self, params: UtilityParams | None = None, reward_on_detection: bool = True):
        self.params = params or UtilityParams()
        self.reward_on_detection = reward_on_detection
        self.records: dict = {}
        self.fired: list[tuple[str, float]] = []
        self.episodes: list[Provenance] = []
        self.credited: set = set()  # events already rewarded this trial

    def begin_trial(self) -> None:
        """Trials restart the clock; unrewarded firings from the last one are dropped."""
        self.fired.clear()
        self.credited.clear()

    def on_fire(self, state: EngineState, cfg: MechanismConfig, p: Production, start: float,
                end: float, snapshot: dict, marks: list) -> None:
        self.fired.append((p.id, start))
        prev_id = state.last_fired
        if cfg.compilation_enabled and prev_id is not None and prev_id in state.rules:
            p1 = state.rules[prev_id]
            for req in (a for a in p1.actions if isinstance(a, Request)):
                got = snapshot.get(req.buffer)
                if (got is not None and p.tests_buffer(req.buffer)
                        and state.buffers[req.buffer].origin == p1.id):
                    try:
                        integrate_compiled(state, self.records, p1, p, got, self.params, end,
                                           simple=cfg.compiled_simple)
                    except CompilationError:
                        pass
                    break
        true_marks = [m for m in marks if m not in self.credited and self._scored(state, cfg, m, start, end)]
        if p.is_monitor and true_marks:
            self.credited.update(true_marks)
            self.episodes.append(p.provenance)
            if self.reward_on_detection:
                self.reward(state, p, end)

    @staticmethod
    def _scored(state: EngineState, cfg: MechanismConfig, event_id, start: float, end: float) -> bool:
        if state.signals is None:
            return False
        t = start if cfg.detect_at == "start" else end
        for ev in state.signals.trace.events:
            if ev.id == event_id:
                return ev.onset_ms <= t <= ev.offset_ms
        return False

    def reward(self, state: EngineState, detector: Production, now: float) -> None:
        for pid, t in self.fired:
            p = state.rules.get(pid)
            if p is None or p.category != detector.category:
                continue
            updated = update_utility(p, self.params, now - t)
            state.rules[pid] = updated
            state.trace.append(Event(now, "utility", pid, format_detail(
                u=updated.utility, elapsed=now - t)))
        self.fired.clear()


# ---------------------------------------------------------------- stages

class StageLabel(enum.Enum):
    NOVICE = "novice"
    INTERMEDIATE = "intermediate"
    EXPERT = "expert"


NOVICE_BELOW = 0.1
EXPERT_FROM = 0.9


def compiled_fraction(episodes: Sequence, window: int) -> float:
    if window < 1:
        raise ValueError("window must be >= 1")
    recent = list(episodes)[-window:]
    if not recent:
        raise ValueError("no monitoring episodes observed")
    hits = sum(1 for e in recent if e == Provenance.COMPILED or e is True)
    return hits / len(recent)


def stage_for_fraction(f: float) -> StageLabel:
    if f < NOVICE_BELOW:
        return StageLabel.NOVICE
    if f < EXPERT_FROM:
        return StageLabel.INTERMEDIATE
    return StageLabel.EXPERT


def classify_stage(episodes: Sequence, window: int = 20) -> StageLabel:
    """Stage from the share of the last ``window`` monitoring episodes served
    by compiled productions. ``episodes`` holds Provenance values (or bools)."""
    return stage_for_fraction(compiled_fraction(episodes, window))


def episodes_from_trace(trace: Sequence[Event], rules: dict[str, Production]) -> list[Provenance]:
    """Monitoring episodes recovered from a log: one per detection mark."""
    out = []
    for e in trace:
        if e.kind == "detection" and e.production_id in rules:
            out.append(rules[e.production_id].provenance)
    return out
