"""CSV writers for experiment results.

Numbers are written with ``repr`` so reruns produce byte-identical files and
values round-trip exactly. Missing estimates are written as ``nan``.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..signals import write_trace_csv
from ..trace import Event, format_time, write_events_csv
from .config import ExperimentSpec
from .experiments import AblationReport, StageReport, ThresholdResult

PSYCHOMETRIC_COLUMNS = ("condition", "axis", "level", "trials", "detections")
THRESHOLD_COLUMNS = ("condition", "axis", "midpoint", "slope", "threshold", "ci_low", "ci_high")
STAGE_COLUMNS = ("seed", "probe", "trial", "stage", "compiled_fraction", "episodes", "focus",
                 "axis", "threshold", "ci_low", "ci_high", "slope")
TRAJECTORY_COLUMNS = ("seed", "trial", "episodes", "compiled_fraction", "stage")
ABLATION_COLUMNS = ("variant", "seed", "axis", "threshold", "ci_low", "ci_high", "slope",
                    "diff", "diff_low", "diff_high")
LEARNING_COLUMNS = ("seed", "trial", "time_ms", "kind", "production_id", "detail")


def num(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _write(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
    return path


def _estimate_cells(res: ThresholdResult) -> tuple[str, str, str, str]:
    e = res.estimate
    if e is None:
        return ("nan",) * 4
    return num(e.level_at_criterion), num(e.ci_low), num(e.ci_high), num(e.slope)


def _condition(res: ThresholdResult) -> str:
    return f"{res.condition}-seed{res.seed}"


def write_psychometric(path: Path, results: Iterable[ThresholdResult]) -> Path:
    rows = []
    for res in results:
        d = res.data
        for level, count in zip(d.levels, d.detect_counts):
            rows.append((_condition(res), d.axis.value, num(level), d.trials_per_level, count))
    return _write(path, PSYCHOMETRIC_COLUMNS, rows)


def write_thresholds(path: Path, results: Iterable[ThresholdResult]) -> Path:
    rows = []
    for res in results:
        thr, lo, hi, slope = _estimate_cells(res)
        rows.append((_condition(res), res.axis.value, num(res.midpoint), slope, thr, lo, hi))
    return _write(path, THRESHOLD_COLUMNS, rows)


def write_stages(path: Path, report: StageReport) -> Path:
    rows = []
    for p in report.probes:
        thr, lo, hi, slope = _estimate_cells(p.result)
        rows.append((p.seed, p.probe, p.trial, p.stage.value, num(p.compiled_fraction), p.episodes,
                     p.focus.value, p.result.axis.value, thr, lo, hi, slope))
    return _write(path, STAGE_COLUMNS, rows)


def write_trajectory(path: Path, report: StageReport) -> Path:
    rows = [(t.seed, t.trial, t.episodes, num(t.compiled_fraction), t.stage.value) for t in report.trajectory]
    return _write(path, TRAJECTORY_COLUMNS, rows)


def write_learning_events(path: Path, events: Iterable[tuple[int, int, Event]]) -> Path:
    rows = [(seed, trial, format_time(e.time), e.kind, e.production_id, e.detail)
            for seed, trial, e in events]
    return _write(path, LEARNING_COLUMNS, rows)


def write_ablation(path: Path, report: AblationReport) -> Path:
    rows = []
    for r in report.rows:
        thr, lo, hi, slope = _estimate_cells(r.result)
        rows.append((r.variant, r.seed, r.result.axis.value, thr, lo, hi, slope,
                     num(r.diff), num(r.diff_low), num(r.diff_high)))
    return _write(path, ABLATION_COLUMNS, rows)


def write_events(path: Path, events: Iterable[Event]) -> Path:
    with open(path, "w", newline="") as fh:
        write_events_csv(events, fh)
    return path


def write_traces(out: Path, report: AblationReport) -> list[Path]:
    """One file per seed and axis; every variant replayed exactly these events."""
    paths = []
    for seed, by_axis in sorted(report.traces.items()):
        for axis, cells in by_axis.items():
            path = out / f"traces-seed{seed}-{axis.value}.csv"
            events = [ev for key in sorted(cells) for ev in cells[key].events]
            with open(path, "w", newline="") as fh:
                write_trace_csv(events, fh)
            paths.append(path)
    return paths


def write_manifest(path: Path, spec: ExperimentSpec, command: str, files: Sequence[Path]) -> Path:
    lines = [
        f"command: {command}",
        f"experiment: {spec.name}",
        f"config_sha256: {spec.config_hash()}",
        f"seeds: {' '.join(str(s) for s in spec.seeds)}",
        "files: " + " ".join(sorted(p.name for p in files)),
    ]
    path.write_text("\n".join(lines) + "\n")
    return path
