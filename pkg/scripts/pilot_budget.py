"""Pilot for the stage-training budget.

Runs training only (no probes) on the configured seeds and reports, per seed,
the first trial labelled Intermediate and Expert, and the compiled fraction
at candidate budgets. The chosen budget is stored in the default config.

    python3 scripts/pilot_budget.py --max-trials 120 --budgets 40 60 80
"""

import argparse
from dataclasses import replace

from metathreshold.harness.config import default_spec, load_spec
from metathreshold.harness.experiments import run_stages_seed
from metathreshold.learning import EXPERT_FROM, StageLabel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--max-trials", type=int, default=120)
    ap.add_argument("--budgets", type=int, nargs="+", default=[40, 60, 80, 120])
    args = ap.parse_args()

    spec = load_spec(args.config) if args.config else default_spec()
    training = replace(spec.training, n_trials=args.max_trials, probe_every=args.max_trials)
    spec = replace(spec, training=training, probe=None)

    print("seed,first_intermediate,first_expert," + ",".join(f"f@{b}" for b in args.budgets))
    reached = {b: 0 for b in args.budgets}
    for seed in spec.seeds:
        traj = run_stages_seed(spec, seed).trajectory
        first = {lab: next((t.trial for t in traj if t.stage == lab), None)
                 for lab in (StageLabel.INTERMEDIATE, StageLabel.EXPERT)}
        fracs = {t.trial: t.compiled_fraction for t in traj}
        for b in args.budgets:
            reached[b] += fracs.get(b, 0.0) > EXPERT_FROM
        print(f"{seed},{first[StageLabel.INTERMEDIATE]},{first[StageLabel.EXPERT]},"
              + ",".join(f"{fracs.get(b, float('nan')):.2f}" for b in args.budgets))
    for b in args.budgets:
        print(f"# budget {b}: compiled fraction > {EXPERT_FROM} on {reached[b]}/{len(spec.seeds)} seeds")


if __name__ == "__main__":
    main()
