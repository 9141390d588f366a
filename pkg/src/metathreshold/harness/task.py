"""The standard monitoring task.

Novice structure: noticing an affect sample triggers retrieval of the
meta-instruction from declarative memory, and a second production applies
it, marking the detection. Compilation can later fuse the two.
"""

from __future__ import annotations

from dataclasses import replace

from ..chunks import BufferPattern, ChunkRequest, bind, chunk, eq
from ..engine import Clear, EngineState, Mark, Modify, Production, Request, new_state
from ..memory import DeclarativeMemory, add_chunk, parse_chunk_line
from ..mechanisms import Complexity
from ..signals import AFFECT_TYPE, GateModel, Interoception, SignalTrace
from .config import ExperimentSpec, TaskSpec

MONITOR_CLASS = "monitor"
DISTRACTOR_CLASS = "distractor"

INSTRUCTION = chunk("meta-instruction", id="attend-affect", target="affect", response="note")


def goal_chunk():
    return chunk("monitor", id="goal", state="attend")


def monitoring_rules(task: TaskSpec) -> list[Production]:
    affect = BufferPattern("interoceptive", AFFECT_TYPE, (bind("event", "e"),))
    retrieve = Production(
        id="retrieve-instruction",
        conditions=(BufferPattern("goal", "monitor", (eq("state", "attend"),)), affect),
        actions=(
            Request(ChunkRequest("meta-instruction", (("target", "affect"),))),
            Modify("goal", (("state", "retrieving"),)),
        ),
        utility=task.monitor_utility,
        complexity=Complexity.COMPLEX,
        category=MONITOR_CLASS,
    )
    apply = Production(
        id="apply-instruction",
        conditions=(
            BufferPattern("goal", "monitor", (eq("state", "retrieving"),)),
            BufferPattern("retrieval", "meta-instruction", (bind("response", "r"),)),
            affect,
        ),
        actions=(
            Mark(affect.tests[0].value),
            Modify("goal", (("state", "attend"), ("noticed", affect.tests[0].value),
                            ("response", bind("response", "r").value))),
            Clear("retrieval"),
        ),
        utility=task.monitor_utility,
        complexity=Complexity.COMPLEX,
        is_monitor=True,
        category=MONITOR_CLASS,
    )
    rules = [retrieve, apply]
    for k in range(task.distractors):
        rules.append(Production(
            id=f"wander-{k + 1}",
            conditions=(BufferPattern("goal", "monitor", (eq("state", "attend"),)),),
            actions=(Modify("goal", (("thought", k + 1),)),),
            utility=task.distractor_utility,
            complexity=Complexity.SIMPLE,
            category=DISTRACTOR_CLASS,
        ))
    return rules


def task_memory(task: TaskSpec, default_latency_ms: float = 200.0) -> DeclarativeMemory:
    mem = DeclarativeMemory(default_latency_ms)
    add_chunk(mem, INSTRUCTION, task.instruction_activation)
    for line in task.memory_lines:
        c, a = parse_chunk_line(line)
        add_chunk(mem, c, a)
    return mem


def build_monitoring_task(spec: ExperimentSpec, trace: SignalTrace | None = None,
                          gate: GateModel | None = None) -> EngineState:
    rules = monitoring_rules(spec.task)
    mem = task_memory(spec.task, spec.engine.default_latency_ms)
    signals = None
    if trace is not None:
        g = gate or (spec.probe.stimulus.gate if spec.probe is not None else GateModel())
        signals = Interoception(trace, g)
    return new_state(rules, mem, goal_chunk(), signals)


def fresh_state(rules: dict[str, Production], memory: DeclarativeMemory, trace: SignalTrace | None,
                gate: GateModel | None, learner=None) -> EngineState:
    """New buffers and clock around an existing rule set (rules are immutable values)."""
    signals = Interoception(trace, gate or GateModel()) if trace is not None else None
    state = new_state((), memory, goal_chunk(), signals)
    state.rules = dict(rules)
    state.learner = learner
    return state


def engine_factory(rules: dict[str, Production], memory: DeclarativeMemory, gate: GateModel):
    frozen = dict(rules)

    def make(trace: SignalTrace) -> EngineState:
        return fresh_state(frozen, memory, trace, gate)

    return make


def with_utilities(rules: dict[str, Production], **utilities: float) -> dict[str, Production]:
    return {pid: replace(p, utility=utilities.get(pid, p.utility)) for pid, p in rules.items()}
