"""Anomaly records shared by every detector."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Hashable, Optional

# Non-cycle classes.
INCONSISTENT_OBSERVATION = "inconsistent-observation"
GARBAGE_READ = "garbage-read"
DUPLICATE_WRITE = "duplicate-write"
INTERNAL = "internal-inconsistency"
G1A = "G1a"
G1B = "G1b"
DIRTY_UPDATE = "dirty-update"
CYCLIC_VERSION_ORDER = "cyclic-version-order"

# Cycle classes.
G0 = "G0"
G1C = "G1c"
G_SINGLE = "G-single"
G2 = "G2"

CYCLE_CLASSES = (G0, G1C, G_SINGLE, G2)
NON_CYCLE_CLASSES = (
    INCONSISTENT_OBSERVATION,
    GARBAGE_READ,
    DUPLICATE_WRITE,
    INTERNAL,
    G1A,
    G1B,
    DIRTY_UPDATE,
    CYCLIC_VERSION_ORDER,
)
ALL_CLASSES = NON_CYCLE_CLASSES + CYCLE_CLASSES

USES_PROCESS = "uses-process-edge"
USES_REALTIME = "uses-realtime-edge"


@dataclass
class Anomaly:
    """A classified finding.

    ``witness`` lists ``(txn id, op position)`` pairs; the op position is
    ``None`` when the participant is a whole transaction (cycle members).
    """

    cls: str
    witness: list[tuple[int, Optional[int]]]
    explanation: str = ""
    key: Optional[Hashable] = None
    flags: frozenset[str] = frozenset()
    data: dict[str, Any] = field(default_factory=dict)

    @property
    def name(self) -> str:
        """Class name with an order-edge suffix, e.g. ``G-single-realtime``."""
        if USES_REALTIME in self.flags:
            return self.cls + "-realtime"
        if USES_PROCESS in self.flags:
            return self.cls + "-process"
        return self.cls

    @property
    def txns(self) -> list[int]:
        seen: list[int] = []
        for t, _ in self.witness:
            if t not in seen:
                seen.append(t)
        return seen

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "class": self.cls,
            "name": self.name,
            "witness": [[t, p] for t, p in self.witness],
            "explanation": self.explanation,
        }
        if self.key is not None:
            out["key"] = self.key
        if self.flags:
            out["flags"] = sorted(self.flags)
        if self.data:
            out["data"] = self.data
        return out
