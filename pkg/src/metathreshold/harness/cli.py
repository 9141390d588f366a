"""Command-line entry point.

    metathreshold validate  [--config PATH]
    metathreshold simulate  [--config PATH] [--seed N] [--out DIR]
    metathreshold threshold [--config PATH] [--seed N] [--out DIR]
    metathreshold stages    [--config PATH] [--seed N] [--out DIR]
    metathreshold ablate    [--config PATH] [--seed N] [--out DIR]

Exit status: 0 success, 1 config or usage error, 2 runtime error. Without
``--out`` the main table is written to standard output.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from ..mechanisms import ConfigError
from . import io
from .config import ExperimentSpec, default_spec, load_spec
from .experiments import run_ablation, run_stages_experiment, run_threshold, simulate, standard_variants

COMMANDS = ("simulate", "threshold", "stages", "ablate", "validate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metathreshold", description="Metacognitive threshold simulator.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    helps = {
        "simulate": "free-running trace through the monitoring task",
        "threshold": "constant-stimuli threshold on a fixed configuration",
        "stages": "training experiment with periodic threshold probes",
        "ablate": "single-mechanism variants against the baseline",
        "validate": "check a config file and exit",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, help="config file (default: built-in defaults)")
        if name != "validate":
            p.add_argument("--out", type=Path, help="output directory (default: main table to stdout)")
            p.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
            p.add_argument("--format", choices=("csv",), default="csv")
    return parser


def load(args) -> ExperimentSpec:
    if args.config is None:
        spec = default_spec()
    else:
        if not args.config.is_file():
            raise ConfigError([("--config", f"no such file: {args.config}")])
        spec = load_spec(args.config)
    if getattr(args, "seed", None) is not None:
        spec = spec.with_seeds([args.seed])
    return spec


def _simulate(spec: ExperimentSpec, out: Path) -> tuple[list[Path], Path]:
    seed = spec.seeds[0]
    trace, state = simulate(spec, seed)
    events = io.write_events(out / "events.csv", state.trace)
    with open(out / "traces.csv", "w", newline="") as fh:
        io.write_trace_csv(trace.events, fh)
    return [events, out / "traces.csv"], events


def _threshold(spec: ExperimentSpec, out: Path) -> tuple[list[Path], Path]:
    results = run_threshold(spec)
    _warn(r for r in results)
    thr = io.write_thresholds(out / "thresholds.csv", results)
    psy = io.write_psychometric(out / "psychometric.csv", results)
    return [thr, psy], thr


def _stages(spec: ExperimentSpec, out: Path) -> tuple[list[Path], Path]:
    report = run_stages_experiment(spec)
    results = [p.result for p in report.probes]
    _warn(results)
    files = [
        io.write_stages(out / "stages.csv", report),
        io.write_trajectory(out / "trajectory.csv", report),
        io.write_learning_events(out / "learning.csv", report.events),
        io.write_thresholds(out / "thresholds.csv", results),
        io.write_psychometric(out / "psychometric.csv", results),
    ]
    return files, files[0]


def _ablate(spec: ExperimentSpec, out: Path) -> tuple[list[Path], Path]:
    report = run_ablation(spec, standard_variants(spec))
    results = [r.result for r in report.rows]
    _warn(results)
    files = [
        io.write_ablation(out / "ablation.csv", report),
        io.write_thresholds(out / "thresholds.csv", results),
        io.write_psychometric(out / "psychometric.csv", results),
        *io.write_traces(out, report),
    ]
    return files, files[0]


RUNNERS = {"simulate": _simulate, "threshold": _threshold, "stages": _stages, "ablate": _ablate}


def _warn(results) -> None:
    for r in results:
        if r.error:
            print(f"warning: {r.condition} seed {r.seed} {r.axis.value}: {r.error}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if not exc.code else 1
    try:
        spec = load(args)
    except ConfigError as exc:
        for key, msg in exc.errors:
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.command == "simulate":
        spec = spec.with_seeds(spec.seeds[:1])  # one free-running trace
    if args.command == "validate":
        print(f"ok {spec.name} sha256={spec.config_hash()}")
        return 0

    try:
        if args.out is None:
            with tempfile.TemporaryDirectory() as tmp:
                _, main_file = RUNNERS[args.command](spec, Path(tmp))
                sys.stdout.write(main_file.read_text())
        else:
            args.out.mkdir(parents=True, exist_ok=True)
            files, _ = RUNNERS[args.command](spec, args.out)
            files.append(io.write_manifest(args.out / "manifest.txt", spec, args.command, files))
            print(f"wrote {len(files)} files to {args.out}", file=sys.stderr)
    except ConfigError as exc:
        for key, msg in exc.errors:
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
