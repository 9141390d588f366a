"""Declarative memory with latency-bearing retrieval."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable

from .chunks import Chunk, ChunkRequest

FAILURE_TYPE = "retrieval-failure"


class DuplicateChunkError(KeyError):
    pass


class RetrievalNotReady(RuntimeError):
    pass


@dataclass
class DeclarativeMemory:
    default_latency_ms: float = 200.0
    chunks: dict[str, Chunk] = field(default_factory=dict)
    activations: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.default_latency_ms > 0:
            raise ValueError("default_latency_ms must be > 0")

    def __len__(self) -> int:
        return len(self.chunks)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self.chunks

    def candidates(self, request: ChunkRequest) -> list[Chunk]:
        return [c for c in self.chunks.values() if request.matches(c)]


def add_chunk(mem: DeclarativeMemory, c: Chunk, base_activation: float = 0.0) -> DeclarativeMemory:
    if c.id is None:
        raise ValueError("chunks stored in declarative memory need an id")
    if c.id in mem.chunks:
        raise DuplicateChunkError(c.id)
    if not math.isfinite(base_activation):
        raise ValueError("base_activation must be finite")
    mem.chunks[c.id] = c
    mem.activations[c.id] = float(base_activation)
    return mem


@dataclass(frozen=True)
class RetrievalTicket:
    request: ChunkRequest
    issued_at: float
    completes_at: float
    outcome: Chunk | None
    origin: str | None = None  # id of the requesting production

    def __post_init__(self):
        if not self.completes_at > self.issued_at:
            raise ValueError("retrieval must take strictly positive time")


def failure_chunk(request: ChunkRequest) -> Chunk:
    return Chunk(FAILURE_TYPE, (("requested", request.type_name or "-"),), None)


def issue_retrieval(mem: DeclarativeMemory, request: ChunkRequest, now_ms: float, cfg=None, rng=None,
                    origin: str | None = None) -> RetrievalTicket:
    """Pick the highest-activation match (ties: smallest id) and time its delivery.

    Latency is the configured default, or ``F * exp(-A)`` of the winner when
    ``cfg.activation_latency`` is on. Failures always take the default latency.
    ``rng`` is accepted for interface symmetry; retrieval here is noise-free.
    """
    default = cfg.default_latency_ms if cfg is not None else mem.default_latency_ms
    best: Chunk | None = None
    best_act = -math.inf
    for c in mem.chunks.values():
        if not request.matches(c):
            continue
        a = mem.activations[c.id]
        if a > best_act or (a == best_act and best is not None and c.id < best.id):
            best, best_act = c, a
    if best is None:
        latency = default
    elif cfg is not None and cfg.activation_latency:
        latency = cfg.latency_factor_ms * math.exp(-best_act)
    else:
        latency = default
    return RetrievalTicket(request, now_ms, now_ms + latency, best, origin)


def fulfill(ticket: RetrievalTicket, state, buffer: str = "retrieval"):
    if state.clock < ticket.completes_at:
        raise RetrievalNotReady(
            f"clock {state.clock} is before retrieval completion at {ticket.completes_at}")
    buf = state.buffers[buffer]
    buf.content = ticket.outcome if ticket.outcome is not None else failure_chunk(ticket.request)
    buf.origin = ticket.origin
    buf.pending = None
    return state


def _parse_value(text: str) -> Any:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_chunk_line(line: str) -> tuple[Chunk, float]:
    """Parse ``id type slot=value ... @activation`` (activation optional)."""
    parts = line.split()
    if len(parts) < 2:
        raise ValueError(f"chunk line needs at least an id and a type: {line!r}")
    cid, ctype, rest = parts[0], parts[1], parts[2:]
    activation = 0.0
    slots: list[tuple[str, Any]] = []
    for token in rest:
        if token.startswith("@"):
            activation = float(token[1:])
        elif "=" in token:
            k, v = token.split("=", 1)
            slots.append((k, _parse_value(v)))
        else:
            raise ValueError(f"bad token {token!r} in chunk line {line!r}")
    return Chunk(ctype, tuple(slots), cid), activation


def load_memory(lines: Iterable[str], default_latency_ms: float = 200.0) -> DeclarativeMemory:
    mem = DeclarativeMemory(default_latency_ms)
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if line:
            c, a = parse_chunk_line(line)
            add_chunk(mem, c, a)
    return mem


def format_chunk_line(c: Chunk, activation: float) -> str:
    slots = " ".join(f"{k}={v}" for k, v in c.slots)
    return f"{c.id} {c.type_name} {slots} @{activation!r}".replace("  ", " ")
