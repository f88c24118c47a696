"""Recoverability index and per-key traces for list-append histories.

Every append argument is expected to be unique per key, so an element seen
in a read maps back to exactly one write.  The longest committed read of a
key is its reference trace: every other committed read must be a prefix of
it.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, NamedTuple, Optional

from .anomaly import DUPLICATE_WRITE, GARBAGE_READ, INCONSISTENT_OBSERVATION, Anomaly
from .histio import READ, Observation


class WriteRef(NamedTuple):
    txn: int
    pos: int
    final: bool


class GarbageRead(LookupError):
    """No write produced the element."""


class AmbiguousWrite(LookupError):
    """More than one write produced the element."""


@dataclass
class WriteIndex:
    by_key_arg: dict[tuple[Hashable, int], list[WriteRef]]

    def refs(self, key, arg) -> list[WriteRef]:
        return self.by_key_arg.get((key, arg), [])

    def __len__(self) -> int:
        return len(self.by_key_arg)


class ReadRef(NamedTuple):
    """A committed read.

    ``own`` holds the reader's own earlier appends to the key, in order.
    ``version`` is the observed list with that suffix stripped, or ``None``
    when the read does not end with the reader's own appends.
    """

    txn: int
    pos: int
    key: Hashable
    observed: tuple
    own: tuple
    version: Optional[tuple]

    @property
    def pure(self) -> bool:
        return not self.own


class KeyTrace(NamedTuple):
    key: Hashable
    elements: tuple
    source_txn: int
    source_pos: int


def build_write_index(obs: Observation) -> WriteIndex:
    idx: dict[tuple[Hashable, int], list[WriteRef]] = defaultdict(list)
    for t in obs.txns:
        last_write: dict[Hashable, int] = {}
        for pos, op in enumerate(t.ops):
            if op.f != READ:
                last_write[op.key] = pos
        for pos, op in enumerate(t.ops):
            if op.f != READ:
                idx[(op.key, op.value)].append(WriteRef(t.id, pos, last_write[op.key] == pos))
    return WriteIndex(dict(idx))


def recover_write(idx: WriteIndex, key, element) -> WriteRef:
    refs = idx.by_key_arg.get((key, element))
    if not refs:
        raise GarbageRead(f"no write of {element!r} to {key!r}")
    if len(refs) > 1:
        raise AmbiguousWrite(f"{len(refs)} writes of {element!r} to {key!r}")
    return refs[0]


def committed_reads(obs: Observation) -> dict[Hashable, list[ReadRef]]:
    """Committed list reads grouped by key, in transaction order."""
    out: dict[Hashable, list[ReadRef]] = defaultdict(list)
    for t in obs.txns:
        if not t.committed:
            continue
        own: dict[Hashable, list] = {}
        for pos, op in enumerate(t.ops):
            k = op.key
            if op.f == READ:
                mine = tuple(own.get(k, ()))
                obsd = op.value
                if not mine:
                    version = obsd
                elif len(obsd) >= len(mine) and obsd[len(obsd) - len(mine):] == mine:
                    version = obsd[: len(obsd) - len(mine)]
                else:
                    version = None
                out[k].append(ReadRef(t.id, pos, k, obsd, mine, version))
            else:
                own.setdefault(k, []).append(op.value)
    return out


def _longest(reads: list[ReadRef], pure_only: bool = False) -> Optional[ReadRef]:
    best = None
    for r in reads:
        if pure_only and r.own:
            continue
        # Strict comparison keeps the earliest reader on ties.
        if best is None or len(r.observed) > len(best.observed):
            best = r
    return best


def longest_committed_reads(obs: Observation, reads=None) -> dict[Hashable, KeyTrace]:
    reads = committed_reads(obs) if reads is None else reads
    out = {}
    for k, rs in reads.items():
        r = _longest(rs)
        if r is not None:
            out[k] = KeyTrace(k, r.observed, r.txn, r.pos)
    return out


def longest_committed_read(obs: Observation, key, reads=None) -> Optional[KeyTrace]:
    reads = committed_reads(obs) if reads is None else reads
    r = _longest(reads.get(key, []))
    return None if r is None else KeyTrace(key, r.observed, r.txn, r.pos)


def is_prefix(short: tuple, long: tuple) -> bool:
    return len(short) <= len(long) and long[: len(short)] == short


def check_observation_consistency(obs: Observation, reads=None) -> list[Anomaly]:
    reads = committed_reads(obs) if reads is None else reads
    anomalies = []
    for k, rs in reads.items():
        ref = _longest(rs)
        if ref is None:
            continue
        for r in rs:
            if not is_prefix(r.observed, ref.observed):
                anomalies.append(
                    Anomaly(
                        INCONSISTENT_OBSERVATION,
                        [(r.txn, r.pos), (ref.txn, ref.pos)],
                        f"T{r.txn} read {list(r.observed)} from {k!r}, which is not a prefix of "
                        f"T{ref.txn}'s read of {list(ref.observed)}",
                        key=k,
                        data={"read": list(r.observed), "longest": list(ref.observed)},
                    )
                )
    return anomalies


def detect_garbage_and_duplicates(obs: Observation, idx: WriteIndex, reads=None) -> list[Anomaly]:
    reads = committed_reads(obs) if reads is None else reads
    by = idx.by_key_arg
    anomalies = []
    for k, rs in reads.items():
        ref = _longest(rs)
        # Reads that are prefixes of the longest one contribute no new elements.
        scan = [ref] + [r for r in rs if r is not ref and not is_prefix(r.observed, ref.observed)]
        garbage_seen = set()
        dup_seen = set()
        for r in scan:
            seen = set()
            for e in r.observed:
                refs = by.get((k, e))
                if not refs:
                    if e not in garbage_seen:
                        garbage_seen.add(e)
                        anomalies.append(
                            Anomaly(
                                GARBAGE_READ,
                                [(r.txn, r.pos)],
                                f"T{r.txn} read {e} from {k!r}, but no transaction ever appended {e}",
                                key=k,
                                data={"element": e},
                            )
                        )
                elif (len(refs) > 1 or e in seen) and e not in dup_seen:
                    dup_seen.add(e)
                    writers = [(w.txn, w.pos) for w in refs]
                    why = (
                        f"{e} appears more than once in T{r.txn}'s read of {k!r}"
                        if e in seen
                        else f"{e} was appended to {k!r} by {len(refs)} operations"
                    )
                    anomalies.append(
                        Anomaly(DUPLICATE_WRITE, [(r.txn, r.pos)] + writers, why, key=k, data={"element": e})
                    )
                seen.add(e)
    return anomalies


def unrecoverable_keys(anomalies: list[Anomaly]) -> set:
    """Keys whose traces cannot be mapped back to unique writes."""
    return {a.key for a in anomalies if a.cls in (GARBAGE_READ, DUPLICATE_WRITE)}
