"""Three-stage training experiment with a per-seed summary.

    python3 scripts/run_stages.py --out results/stages [--seeds 1 2 3]
"""

import argparse
import sys
from pathlib import Path

from metathreshold.harness import io
from metathreshold.harness.config import default_spec, load_spec
from metathreshold.harness.experiments import run_stages_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", type=Path, default=Path("results/stages"))
    ap.add_argument("--seeds", type=int, nargs="*")
    args = ap.parse_args()

    spec = load_spec(args.config) if args.config else default_spec()
    if args.seeds:
        spec = spec.with_seeds(args.seeds)
    report = run_stages_experiment(spec)

    args.out.mkdir(parents=True, exist_ok=True)
    files = [io.write_stages(args.out / "stages.csv", report),
             io.write_trajectory(args.out / "trajectory.csv", report)]
    io.write_manifest(args.out / "manifest.txt", spec, "run_stages", files)

    focus = spec.engine.focus_mode
    for seed in spec.seeds:
        rows = [p for p in report.probes if p.seed == seed and p.focus == focus]
        stages = "".join(t.stage.value[0].upper() for t in report.trajectory if t.seed == seed)
        cells = " ".join(
            f"{p.trial}:{p.stage.value[0].upper()}:"
            + (f"{p.result.estimate.level_at_criterion:.1f}" if p.result.estimate else "n/a")
            for p in rows)
        print(f"seed {seed}: {cells}")
        print(f"  trajectory {stages}")
    print(f"results in {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
