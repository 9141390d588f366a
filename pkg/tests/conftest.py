import random

import pytest

from metathreshold.chunks import BufferPattern, ChunkRequest, Var, bind, chunk, eq
from metathreshold.engine import Clear, Mark, Modify, Production, Request, new_state, run_until
from metathreshold.memory import DeclarativeMemory, add_chunk
from metathreshold.mechanisms import MechanismConfig


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture
def quiet_cfg():
    """Noise off, complexity timing off: fully deterministic timing."""
    return MechanismConfig(noise_scale=0.0)


def retrieval_pair(extra_slots: dict | None = None):
    """A retrieve-then-use pair with no competitors."""
    p1 = Production(
        "ask",
        (BufferPattern("goal", "task", (eq("state", "start"),)),),
        (Request(ChunkRequest("fact", (("key", "k"),))), Modify("goal", (("state", "wait"),))),
    )
    p2 = Production(
        "use",
        (BufferPattern("goal", "task", (eq("state", "wait"),)), BufferPattern("retrieval", "fact")),
        (Modify("goal", (("state", "done"),)),),
    )
    mem = DeclarativeMemory()
    add_chunk(mem, chunk("fact", id="f1", key="k", **(extra_slots or {})))
    return p1, p2, mem


def pair_state():
    p1, p2, mem = retrieval_pair()
    return new_state([p1, p2], mem, chunk("task", state="start"))


def random_pair(r: random.Random):
    """A retrieve-then-use pair over a random instruction chunk, plus a start state."""
    n = r.randint(1, 4)
    names = [f"s{i}" for i in range(n)]
    values = {k: r.choice(["red", "blue", 3, 7, "go"]) for k in names}
    instr = chunk("instr", id=f"i{r.randint(0, 999)}", topic="t", **values)
    copy = r.sample(names, r.randint(1, n))
    const = r.choice(names)
    p1 = Production(
        "fetch",
        (BufferPattern("goal", "g", (eq("phase", "begin"), bind("item", "x"))),),
        (Request(ChunkRequest("instr", (("topic", "t"),))), Modify("goal", (("phase", "wait"),))),
    )
    r_tests = tuple(bind(k, f"v{k}") for k in copy) + (eq(const, values[const]),)
    conds = [BufferPattern("goal", "g", (eq("phase", "wait"), bind("item", "y"))),
             BufferPattern("retrieval", "instr", r_tests)]
    if r.random() < 0.5:
        conds.append(BufferPattern("aux", "a", (bind("w", "z"),)))
    slots = [("phase", "done"), ("seen", Var("y"))] + [(f"out_{k}", Var(f"v{k}")) for k in copy]
    if len(conds) == 3:
        slots.append(("aux_w", Var("z")))
    actions = [Modify("goal", tuple(slots)), Clear("retrieval")]
    if r.random() < 0.5:
        actions.append(Mark(Var("y")))
    p2 = Production("use", tuple(conds), tuple(actions))
    goal = chunk("g", phase="begin", item=r.choice(["a", "b"]))
    aux = chunk("a", w=r.randint(0, 5)) if r.random() < 0.9 else None
    return p1, p2, instr, goal, aux


def run_final(rules, instr, goal, aux, steps_until):
    mem = DeclarativeMemory()
    add_chunk(mem, instr)
    add_chunk(mem, chunk("instr", id="zz-other", topic="u"))
    s = new_state(rules, mem, goal, extra_buffers=("aux",))
    s.buffers["aux"].content = aux
    run_until(s, MechanismConfig(noise_scale=0.0), steps_until, random.Random(0))
    marks = [e.detail for e in s.trace if e.kind == "detection"]
    return {k: b.content for k, b in s.buffers.items()}, marks, s


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
