import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from metathreshold.chunks import BufferPattern, Chunk, ChunkRequest, Var, absent, bind, chunk, eq
from metathreshold.engine import (Instantiation, Modify, Production, ProductionError, Request,
                                  firing_duration, logistic_noise, match_conflict_set, new_state,
                                  run_until, select_production, step)
from metathreshold.mechanisms import Complexity, MechanismConfig
from metathreshold.trace import events_to_csv, parse_detail

from conftest import pair_state, retrieval_pair


def inst(pid, u):
    return Instantiation(Production(pid, (), (), utility=u), ())


# ---------------------------------------------------------------- matching

def test_empty_buffers_match_nothing():
    rules = [Production("r", (BufferPattern("goal", "task"),), ())]
    assert match_conflict_set(new_state(rules)) == []


def test_single_rule_matches_goal():
    rules = [Production("r", (BufferPattern("goal", None, (eq("task", "monitor"),)),), ())]
    out = match_conflict_set(new_state(rules, goal=chunk("g", task="monitor")))
    assert [i.production_id for i in out] == ["r"]


def test_two_of_three_rules_match():
    rules = [
        Production("a", (BufferPattern("goal", "g", (eq("s", 1),)),), ()),
        Production("b", (BufferPattern("goal", "g", (bind("s", "x"),)),), ()),
        Production("c", (BufferPattern("goal", "g", (eq("s", 2),)),), ()),
    ]
    out = match_conflict_set(new_state(rules, goal=chunk("g", s=1)))
    assert [i.production_id for i in out] == ["a", "b"]
    assert out[1].binding_map() == {Var("x"): 1}


BUFS = ["goal", "retrieval", "interoceptive", "extra"]
SLOT = st.sampled_from(["p", "q"])
VAL = st.sampled_from([0, 1])
TEST = st.one_of(
    st.builds(eq, SLOT, VAL),
    st.builds(lambda s, v: bind(s, f"v{v}"), SLOT, VAL),
    st.builds(absent, SLOT),
)
PATTERN = st.builds(lambda b, t, tests, e: BufferPattern(b, t, tuple(tests), e),
                    st.sampled_from(BUFS), st.sampled_from([None, "t", "u"]),
                    st.lists(TEST, max_size=2), st.sampled_from([False, False, False, True]))
CONTENT = st.one_of(st.none(), st.builds(lambda t, d: Chunk(t, tuple(d.items())),
                                         st.sampled_from(["t", "u"]), st.dictionaries(SLOT, VAL)))


def _brute(rule, contents):
    """Evaluate every pattern of a rule in isolation, then reconcile variables."""
    seen = {}
    for pat in rule.conditions:
        c = contents.get(pat.buffer)
        if pat.empty:
            if c is not None:
                return None
            continue
        if c is None or (pat.type_name and c.type_name != pat.type_name):
            return None
        d = dict(c.slots)
        for t in pat.tests:
            if t.kind == "absent":
                if t.slot in d:
                    return None
                continue
            if t.slot not in d:
                return None
            if t.kind == "eq" and d[t.slot] != t.value:
                return None
            if t.kind == "var" and seen.setdefault(t.value, d[t.slot]) != d[t.slot]:
                return None
    return seen


@given(rules=st.lists(st.lists(PATTERN, min_size=1, max_size=3), max_size=10),
       contents=st.fixed_dictionaries({b: CONTENT for b in BUFS}))
@settings(max_examples=200, deadline=None)
def test_conflict_set_equals_brute_force(rules, contents):
    prods = [Production(f"r{i}", tuple(c), ()) for i, c in enumerate(rules)]
    state = new_state(prods, extra_buffers=("extra",))
    for b, c in contents.items():
        state.buffers[b].content = c
    got = {i.production_id: i.binding_map() for i in match_conflict_set(state)}
    want = {p.id: b for p in prods if (b := _brute(p, contents)) is not None}
    assert got == want


def test_unbound_action_variable_rejected():
    with pytest.raises(ProductionError):
        Production("bad", (), (Modify("goal", (("s", Var("nope")),)),))


def test_duplicate_rule_ids_rejected():
    p = Production("r", (), ())
    with pytest.raises(ProductionError):
        new_state([p, p])


# ---------------------------------------------------------------- selection

def test_selection_basics(rng):
    assert select_production([], rng, 1.0) is None
    assert select_production([inst("A", 5.0), inst("B", 1.0)], rng, 0.0).production_id == "A"
    # exact ties go to the smallest id
    assert select_production([inst("b", 1.0), inst("a", 1.0)], rng, 0.0).production_id == "a"


def test_equal_utilities_split_evenly_against_monte_carlo():
    rng = random.Random(7)
    n = 10_000
    picks = sum(select_production([inst("A", 2.0), inst("B", 2.0)], rng, 1.0).production_id == "A"
                for _ in range(n))
    # the same noise law drawn directly
    ref_rng = random.Random(99)
    ref = sum(2.0 + logistic_noise(ref_rng, 1.0) > 2.0 + logistic_noise(ref_rng, 1.0) for _ in range(n))
    assert abs(picks / n - 0.5) <= 0.02
    assert abs(ref / n - 0.5) <= 0.02


def test_logistic_noise_variance():
    rng = random.Random(3)
    xs = [logistic_noise(rng, 0.5) for _ in range(40_000)]
    var = sum(x * x for x in xs) / len(xs)
    assert var == pytest.approx(math.pi ** 2 * 0.25 / 3, rel=0.05)


@given(utils=st.lists(st.floats(-50, 50), min_size=1, max_size=6), shift=st.floats(0.01, 100))
def test_argmax_invariant_to_shift(utils, shift):
    a = [inst(f"p{i}", u) for i, u in enumerate(utils)]
    b = [inst(f"p{i}", u + shift) for i, u in enumerate(utils)]
    r = random.Random(0)
    assert select_production(a, r, 0.0).production_id == select_production(b, r, 0.0).production_id


# ---------------------------------------------------------------- timing

def test_firing_durations(rng):
    p = Production("r", (), ())
    assert firing_duration(p, MechanismConfig(), rng) == 50.0
    assert firing_duration(p, MechanismConfig(clock_scale=0.8), rng) == pytest.approx(40.0)


def test_complexity_durations_in_range(rng):
    cfg = MechanismConfig(complexity_timing=True)
    simple = [firing_duration(Production("s", (), (), complexity=Complexity.SIMPLE), cfg, rng)
              for _ in range(10_000)]
    assert all(34.0 <= d <= 44.0 for d in simple)
    assert abs(sum(simple) / len(simple) - 39.0) <= 0.2


def test_idle_tick_from_empty_engine(rng, quiet_cfg):
    s = step(new_state(), quiet_cfg, rng)
    assert s.clock == 50.0
    assert [(e.kind, e.detail) for e in s.trace] == [("match", "n=0")]


def test_fire_when_ready_waits_for_retrieval(rng, quiet_cfg):
    state = pair_state()
    run_until(state, quiet_cfg, 400.0, rng)
    fires = [(e.time, e.production_id) for e in state.trace if e.kind == "fire-end"]
    start = next(e.time for e in state.trace if e.kind == "retrieval-start")
    done = next(e.time for e in state.trace if e.kind == "retrieval-complete")
    assert fires == [(50.0, "ask"), (300.0, "use")]
    assert (start, done) == (50.0, 250.0)
    # the engine jumped straight to the delivery instead of ticking
    assert [e.time for e in state.trace if e.kind == "match"][:3] == [0.0, 50.0, 250.0]


def test_episode_is_latency_plus_two_cycles(rng, quiet_cfg):
    state = pair_state()
    run_until(state, quiet_cfg, 400.0, rng)
    fs = [e for e in state.trace if e.kind == "fire-start"]
    fe = [e for e in state.trace if e.kind == "fire-end"]
    assert fe[1].time - fs[0].time == 200.0 + 2 * 50.0


def test_competitor_fires_while_retrieval_pending(rng, quiet_cfg):
    p1, p2, mem = retrieval_pair()
    other = Production("other", (BufferPattern("goal", "task", (eq("state", "wait"),)),
                                 BufferPattern("retrieval", empty=True)),
                       (Modify("goal", (("side", 1),)),))
    state = new_state([p1, p2, other], mem, chunk("task", state="start"))
    run_until(state, quiet_cfg, 120.0, rng)
    assert [e.production_id for e in state.trace if e.kind == "fire-start"][:2] == ["ask", "other"]
    assert next(e.time for e in state.trace if e.production_id == "other") == 50.0


def test_second_request_preempts_first(rng, quiet_cfg):
    p1, _, mem = retrieval_pair()
    again = Production("again", (BufferPattern("goal", "task", (eq("state", "wait"),)),),
                       (Request(ChunkRequest("fact")), Modify("goal", (("state", "idle"),))))
    state = new_state([p1, again], mem, chunk("task", state="start"))
    run_until(state, quiet_cfg, 100.0, rng)
    assert state.buffers["retrieval"].pending.issued_at == 100.0
    assert state.buffers["retrieval"].origin is None


def test_run_until_exact_idle_ticks(rng, quiet_cfg):
    s = new_state()
    run_until(s, quiet_cfg, 0.0, rng)
    assert s.trace == []
    run_until(s, quiet_cfg, 1000.0, rng)
    assert sum(e.kind == "match" for e in s.trace) == 20 and s.clock == 1000.0
    with pytest.raises(ValueError):
        run_until(s, quiet_cfg, 10.0, rng)


def _noisy_run(seed):
    from metathreshold.harness.config import default_spec
    from metathreshold.harness.experiments import simulate
    return events_to_csv(simulate(default_spec(), seed)[1].trace)


def test_equal_seeds_give_identical_logs():
    assert _noisy_run(4) == _noisy_run(4)
    assert _noisy_run(4) != _noisy_run(5)


@pytest.mark.parametrize("seed", range(5))
def test_clock_monotone_and_durations_consistent(seed):
    from metathreshold.harness.config import default_spec
    from metathreshold.harness.experiments import simulate
    log = simulate(default_spec(), seed)[1].trace
    times = [e.time for e in log]
    assert times == sorted(times)
    starts = [e for e in log if e.kind == "fire-start"]
    ends = [e for e in log if e.kind == "fire-end"]
    for s, e in zip(starts, ends):
        assert s.production_id == e.production_id
        assert e.time - s.time == pytest.approx(float(parse_detail(s.detail)["dur"]), abs=1e-5)
