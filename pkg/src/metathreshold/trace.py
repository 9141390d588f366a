"""Append-only event log and its CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, TextIO

KINDS = (
    "match", "select", "fire-start", "fire-end", "retrieval-start",
    "retrieval-complete", "signal-deposit", "detection",
    # learning events share the log
    "compile", "utility",
)

CSV_COLUMNS = ("time_ms", "kind", "production_id", "detail")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    production_id: str = "-"
    detail: str = "-"

    def field(self, key: str, default: str | None = None) -> str | None:
        return parse_detail(self.detail).get(key, default)


def format_detail(**items) -> str:
    parts = [f"{k}={_fmt(v)}" for k, v in items.items() if v is not None]
    return ";".join(parts) if parts else "-"


def parse_detail(detail: str) -> dict[str, str]:
    if not detail or detail == "-":
        return {}
    return dict(part.split("=", 1) for part in detail.split(";"))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format_time(v)
    return str(v)


def format_time(t: float) -> str:
    # fixed precision keeps logs byte-identical across runs
    return f"{t:.6f}"


def write_events_csv(events: Iterable[Event], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for e in events:
        w.writerow((format_time(e.time), e.kind, e.production_id or "-", e.detail or "-"))


def events_to_csv(events: Iterable[Event]) -> str:
    buf = io.StringIO()
    write_events_csv(events, buf)
    return buf.getvalue()


def read_events_csv(fh: TextIO) -> list[Event]:
    r = csv.DictReader(fh)
    if tuple(r.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected event CSV header {r.fieldnames}")
    return [Event(float(row["time_ms"]), row["kind"], row["production_id"], row["detail"]) for row in r]
