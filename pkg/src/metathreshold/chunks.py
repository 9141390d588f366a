"""Chunks, variables and buffer patterns.

A chunk is an immutable typed slot/value record. Productions test buffer
contents with ``BufferPattern`` objects whose slot tests can be constants,
variables (single-assignment unification) or an absence test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping


@dataclass(frozen=True, order=True)
class Var:
    """A pattern variable. Bound on first use, compared on later uses."""

    name: str

    def __repr__(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class Chunk:
    type_name: str
    slots: tuple[tuple[str, Any], ...] = ()
    id: str | None = None

    def __post_init__(self):
        if not self.type_name:
            raise ValueError("chunk type_name must be non-empty")
        names = [name for name, _ in self.slots]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate slot names in chunk {self.id or self.type_name}: {names}")

    def get(self, slot: str, default: Any = None) -> Any:
        for name, value in self.slots:
            if name == slot:
                return value
        return default

    def has(self, slot: str) -> bool:
        return any(name == slot for name, _ in self.slots)

    def as_dict(self) -> dict[str, Any]:
        return dict(self.slots)

    def updated(self, changes: Mapping[str, Any]) -> "Chunk":
        """Copy with ``changes`` applied; new slots are appended in order."""
        merged = dict(self.slots)
        merged.update(changes)
        return Chunk(self.type_name, tuple(merged.items()), self.id)

    def __str__(self) -> str:
        body = " ".join(f"{k}={v}" for k, v in self.slots)
        return f"{self.id or '_'}:{self.type_name}({body})"


def chunk(type_name: str, id: str | None = None, **slots: Any) -> Chunk:
    return Chunk(type_name, tuple(slots.items()), id)


@dataclass(frozen=True)
class SlotTest:
    """One slot constraint. ``kind`` is ``eq``, ``var`` or ``absent``."""

    slot: str
    kind: str
    value: Any = None

    def __post_init__(self):
        if self.kind not in ("eq", "var", "absent"):
            raise ValueError(f"unknown slot test kind {self.kind!r}")
        if self.kind == "var" and not isinstance(self.value, Var):
            raise ValueError("var test needs a Var value")


def eq(slot: str, value: Any) -> SlotTest:
    return SlotTest(slot, "eq", value)


def bind(slot: str, name: str | Var) -> SlotTest:
    return SlotTest(slot, "var", name if isinstance(name, Var) else Var(name))


def absent(slot: str) -> SlotTest:
    return SlotTest(slot, "absent")


@dataclass(frozen=True)
class BufferPattern:
    """Condition on one buffer.

    ``type_name=None`` accepts any chunk type. ``empty=True`` matches only an
    empty buffer and ignores the other fields.
    """

    buffer: str
    type_name: str | None = None
    tests: tuple[SlotTest, ...] = ()
    empty: bool = False

    def variables(self) -> set[Var]:
        return {t.value for t in self.tests if t.kind == "var"}


def pattern(buffer: str, type_name: str | None = None, *tests: SlotTest) -> BufferPattern:
    return BufferPattern(buffer, type_name, tuple(tests))


def match_chunk(
    pat: BufferPattern, content: Chunk | None, bindings: dict[Var, Any]
) -> dict[Var, Any] | None:
    """Match one pattern against a buffer's content.

    Returns the extended bindings, or None on failure. ``bindings`` is never
    mutated.
    """
    if pat.empty:
        return bindings if content is None else None
    if content is None:
        return None
    if pat.type_name is not None and content.type_name != pat.type_name:
        return None
    out = bindings
    for test in pat.tests:
        present = content.has(test.slot)
        if test.kind == "absent":
            if present:
                return None
            continue
        if not present:
            return None
        value = content.get(test.slot)
        if test.kind == "eq":
            if value != test.value:
                return None
        else:
            var = test.value
            if var in out:
                if out[var] != value:
                    return None
            else:
                if out is bindings:
                    out = dict(bindings)
                out[var] = value
    return out


def match_all(
    patterns: Iterable[BufferPattern], contents: Mapping[str, Chunk | None]
) -> dict[Var, Any] | None:
    bindings: dict[Var, Any] = {}
    for pat in patterns:
        result = match_chunk(pat, contents.get(pat.buffer), bindings)
        if result is None:
            return None
        bindings = result
    return bindings


def substitute(value: Any, bindings: Mapping[Var, Any]) -> Any:
    if isinstance(value, Var):
        return bindings.get(value, value)
    return value


@dataclass(frozen=True)
class ChunkRequest:
    """A retrieval request: chunk type plus constant (or variable) slot values."""

    type_name: str | None = None
    slots: tuple[tuple[str, Any], ...] = field(default=())

    def resolved(self, bindings: Mapping[Var, Any]) -> "ChunkRequest":
        return ChunkRequest(self.type_name, tuple((k, substitute(v, bindings)) for k, v in self.slots))

    def matches(self, c: Chunk) -> bool:
        if self.type_name is not None and c.type_name != self.type_name:
            return False
        return all(c.has(k) and c.get(k) == v for k, v in self.slots)
