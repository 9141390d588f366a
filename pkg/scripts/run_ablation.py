"""Single-mechanism ablation against the all-off baseline.

    python3 scripts/run_ablation.py --out results/ablation [--trials 200]
"""

import argparse
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from metathreshold.harness import io
from metathreshold.harness.config import default_spec, load_spec
from metathreshold.harness.experiments import run_ablation, standard_variants


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", type=Path, default=Path("results/ablation"))
    ap.add_argument("--seeds", type=int, nargs="*")
    ap.add_argument("--trials", type=int, help="override trials per level")
    args = ap.parse_args()

    spec = load_spec(args.config) if args.config else default_spec()
    if args.seeds:
        spec = spec.with_seeds(args.seeds)
    if args.trials:
        spec = replace(spec, probe=replace(spec.probe, trials=args.trials))

    t0 = time.perf_counter()
    report = run_ablation(spec, standard_variants(spec))
    elapsed = time.perf_counter() - t0

    args.out.mkdir(parents=True, exist_ok=True)
    files = [io.write_ablation(args.out / "ablation.csv", report), *io.write_traces(args.out, report)]
    io.write_manifest(args.out / "manifest.txt", spec, "run_ablation", files)

    variants = [v for v in dict.fromkeys(r.variant for r in report.rows) if v != "baseline"]
    for v in variants:
        rows = [r for r in report.rows if r.variant == v]
        wins = sum(1 for r in rows if not math.isnan(r.diff_high) and r.diff_high < 0)
        mean = sum(r.diff for r in rows) / len(rows)
        print(f"{v:12s} lower than baseline (CI excludes 0) on {wins}/{len(rows)} seeds; mean diff {mean:.1f} ms")
    print(f"{elapsed:.0f} s; results in {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
