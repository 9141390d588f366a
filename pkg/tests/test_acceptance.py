"""Acceptance suite: one test per criterion, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python3
tests/test_acceptance.py``. Criteria 6 and 7 run the default configuration at
full scale and take several minutes.
"""

import math
import random
import statistics
import time

import numpy as np

from metathreshold.engine import Production, firing_duration, new_state, run_until
from metathreshold.harness.cli import main as cli_main
from metathreshold.harness.config import TaskSpec, default_spec
from metathreshold.harness.experiments import run_ablation, run_stages_experiment, standard_variants
from metathreshold.harness.task import INSTRUCTION, goal_chunk, monitoring_rules, task_memory
from metathreshold.learning import (EXPERT_FROM, StageLabel, UtilityParams, compile_pair,
                                    update_utility)
from metathreshold.mechanisms import Complexity, MechanismConfig
from metathreshold.psychophysics import Axis, PsychometricData, fit_logistic
from metathreshold.signals import GateModel, Interoception, SignalEvent, SignalTrace

from conftest import random_pair, run_final

RESULTS: dict[int, str] = {}


def report(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {name}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


# 1 ------------------------------------------------------------------------

def test_criterion_1_timing_constants():
    rng = random.Random(1)
    cfg = MechanismConfig(complexity_timing=True)
    simple = [firing_duration(Production("s", (), (), complexity=Complexity.SIMPLE), cfg, rng)
              for _ in range(10_000)]
    cplx = [firing_duration(Production("c", (), (), complexity=Complexity.COMPLEX), cfg, rng)
            for _ in range(10_000)]
    default = MechanismConfig()
    ok = (default.cycle_time_ms == 50.0
          and firing_duration(Production("p", (), ()), default, rng) == 50.0
          and all(34.0 <= d <= 44.0 for d in simple) and all(59.0 <= d <= 73.0 for d in cplx))
    report(1, "timing constants", ok,
           f"cycle {default.cycle_time_ms:g} ms; simple [{min(simple):.2f}, {max(simple):.2f}]; "
           f"complex [{min(cplx):.2f}, {max(cplx):.2f}]")


# 2 ------------------------------------------------------------------------

def _episode(rules, cfg):
    """Run the monitoring task over one long, always-visible event; return
    (first fire-start, first detecting fire-end)."""
    ev = SignalEvent("e", 0.0, 2000.0, 3.0)
    state = new_state(rules, task_memory(TaskSpec(), cfg.default_latency_ms), goal_chunk(),
                      Interoception(SignalTrace((ev,), 3000.0), GateModel(1.0, 0.0)))
    run_until(state, cfg, 1000.0, random.Random(0))
    start = next(e.time for e in state.trace if e.kind == "fire-start")
    done = next(e.time for e in state.trace if e.kind == "detection")
    return start, done


def test_criterion_2_fire_when_ready_accounting():
    retrieve, apply = monitoring_rules(TaskSpec())[:2]
    child = compile_pair(retrieve, apply, INSTRUCTION)
    checks = []
    for cfg in (MechanismConfig(noise_scale=0.0),
                MechanismConfig(noise_scale=0.0, cycle_time_ms=40.0, default_latency_ms=310.0),
                MechanismConfig(noise_scale=0.0, activation_latency=True, latency_factor_ms=200.0)):
        latency = cfg.latency_factor_ms if cfg.activation_latency else cfg.default_latency_ms  # A = 0
        s, e = _episode([retrieve, apply], cfg)
        cs, ce = _episode([child], cfg)
        checks.append((e - s, latency + 2 * cfg.cycle_time_ms, ce - cs, cfg.cycle_time_ms))
    ok = all(pair == want_pair and comp == want_comp for pair, want_pair, comp, want_comp in checks)
    report(2, "fire-when-ready accounting", ok,
           "; ".join(f"pair {a:g}=={b:g}, compiled {c:g}=={d:g}" for a, b, c, d in checks))


# 3 ------------------------------------------------------------------------

def test_criterion_3_compilation_soundness():
    r = random.Random(7)
    compared = mismatched = 0
    t0 = time.perf_counter()
    while compared < 1000:
        p1, p2, instr, goal, aux = random_pair(r)
        child = compile_pair(p1, p2, instr)
        pair_bufs, pair_marks, ps = run_final([p1, p2], instr, goal, aux, 1000.0)
        child_bufs, child_marks, cs = run_final([child], instr, goal, aux, 1000.0)
        pair_done = [e.production_id for e in ps.trace if e.kind == "fire-end"] == [p1.id, p2.id]
        child_done = [e.production_id for e in cs.trace if e.kind == "fire-end"] == [child.id]
        if pair_done != child_done:
            mismatched += 1
        if pair_done and child_done:
            compared += 1
            mismatched += (pair_bufs, pair_marks) != (child_bufs, child_marks)
    report(3, "compilation soundness", mismatched == 0,
           f"{compared} randomized instruction chunks, {mismatched} mismatches, {time.perf_counter() - t0:.1f} s")


# 4 ------------------------------------------------------------------------

def test_criterion_4_utility_convergence():
    r = random.Random(11)
    worst = 0.0
    for _ in range(50):
        params = UtilityParams(alpha=r.uniform(0.01, 1.0), reward_magnitude=r.uniform(-20, 20),
                               time_cost_per_ms=r.uniform(0, 0.05))
        elapsed = r.uniform(0, 500)
        r_eff = params.effective_reward(elapsed)
        u0 = r.uniform(-20, 20)
        p = Production("p", (), (), utility=u0)
        for n in range(1, r.randint(1, 60) + 1):
            p = update_utility(p, params, elapsed)
            want = (1 - params.alpha) ** n * abs(u0 - r_eff)
            got = abs(p.utility - r_eff)
            # error relative to the quantities being differenced
            scale = max(abs(u0), abs(r_eff), 1.0)
            worst = max(worst, abs(got - want) / scale)
    report(4, "utility convergence", worst <= 1e-12, f"50 draws, worst relative error {worst:.2e}")


# 5 ------------------------------------------------------------------------

def test_criterion_5_psychometric_recovery():
    levels = (30.0, 60.0, 90.0, 120.0, 150.0, 180.0, 210.0, 240.0)
    rng = np.random.default_rng(5)
    errors = []
    t0 = time.perf_counter()
    for _ in range(100):
        mid, slope = rng.uniform(90, 180), rng.uniform(0.02, 0.1)
        p = 1 / (1 + np.exp(-slope * (np.asarray(levels) - mid)))
        data = PsychometricData(Axis.DURATION, levels, 500, tuple(rng.binomial(500, p)))
        errors.append(abs(fit_logistic(data).midpoint - mid) / mid)
    med = statistics.median(errors)
    report(5, "psychometric recovery", med <= 0.05,
           f"median midpoint error {100 * med:.2f}% over 100 datasets, {time.perf_counter() - t0:.1f} s")


# 6 ------------------------------------------------------------------------

def test_criterion_6_mechanism_ablation():
    spec = default_spec()
    assert len(spec.probe.duration_levels) == 8 and spec.probe.trials == 200 and len(spec.seeds) == 10
    t0 = time.perf_counter()
    rep = run_ablation(spec, standard_variants(spec))
    elapsed = time.perf_counter() - t0
    wins = {}
    for row in rep.rows:
        if row.variant == "baseline":
            continue
        lower = not math.isnan(row.diff_high) and row.diff_high < 0
        wins[row.variant] = wins.get(row.variant, 0) + lower
    ok = all(w >= 8 for w in wins.values()) and len(wins) == 4 and elapsed <= 600
    report(6, "mechanism ablation", ok,
           ", ".join(f"{k} {v}/10" for k, v in wins.items()) + f"; {elapsed:.0f} s")


# 7 ------------------------------------------------------------------------

ORDER = {StageLabel.NOVICE: 0, StageLabel.INTERMEDIATE: 1, StageLabel.EXPERT: 2}


def test_criterion_7_three_stage_trajectory():
    spec = default_spec()
    t0 = time.perf_counter()
    rep = run_stages_experiment(spec)
    elapsed = time.perf_counter() - t0
    window = spec.training.window
    focus = spec.engine.focus_mode
    passes_stages = lowered = compiled = 0
    for seed in spec.seeds:
        traj = [t for t in rep.trajectory if t.seed == seed]
        labels = [ORDER[StageLabel.NOVICE]] + [ORDER[t.stage] for t in traj]
        fracs = [t.compiled_fraction for t in traj]
        monotone = all(b >= a for a, b in zip(labels, labels[1:]))
        # the windowed fraction may wobble by less than one episode while the window fills
        smooth = all(b >= a - 1.0 / window for a, b in zip(fracs, fracs[1:]))
        passes_stages += monotone and smooth and set(labels) == {0, 1, 2}
        compiled += fracs[-1] > EXPERT_FROM
        probes = [p for p in rep.probes if p.seed == seed and p.focus == focus]
        first, last = probes[0].result.estimate, probes[-1].result.estimate
        lowered += (first is not None and last is not None and last.ci_high < first.ci_low)
    n = len(spec.seeds)
    ok = passes_stages == n and lowered > n / 2 and compiled >= 9 and elapsed <= 900
    report(7, "three-stage trajectory", ok,
           f"N->I->E on {passes_stages}/{n} seeds; final < first threshold (disjoint CIs) on {lowered}/{n}; "
           f"final compiled fraction > {EXPERT_FROM} on {compiled}/{n}; {elapsed:.0f} s")


# 8 ------------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path):
    identical = []
    for command in ("validate", "simulate", "threshold", "stages", "ablate"):
        if command == "validate":
            identical.append((command, cli_main(["validate"]) == 0))
            continue
        dirs = [tmp_path / f"{command}-{k}" for k in range(2)]
        codes = [cli_main([command, "--seed", "1", "--out", str(d)]) for d in dirs]
        names = sorted(p.name for p in dirs[0].iterdir())
        same = codes == [0, 0] and names == sorted(p.name for p in dirs[1].iterdir()) and all(
            (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names)
        identical.append((command, same))
    report(8, "determinism", all(ok for _, ok in identical),
           ", ".join(f"{c} {'identical' if ok else 'DIFFERS'}" for c, ok in identical))


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion_")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
