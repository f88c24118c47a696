"""Non-cycle anomalies: internal inconsistency, G1a, G1b and dirty updates."""

from __future__ import annotations

from typing import Hashable

from .anomaly import DIRTY_UPDATE, G1A, G1B, INTERNAL, Anomaly
from .histio import ABORTED, LIST_APPEND, READ, Observation
from .trace import ReadRef, WriteIndex, committed_reads, is_prefix

_UNKNOWN = object()


def find_internal_inconsistencies(obs: Observation) -> list[Anomaly]:
    if obs.model == LIST_APPEND:
        return _internal_lists(obs)
    return _internal_registers(obs)


def _internal_lists(obs):
    out = []
    for t in obs.txns:
        if not t.committed:
            continue
        expected: dict[Hashable, list] = {}
        suffix: dict[Hashable, list] = {}
        for pos, op in enumerate(t.ops):
            k = op.key
            if op.f != READ:
                if k in expected:
                    expected[k].append(op.value)
                else:
                    suffix.setdefault(k, []).append(op.value)
                continue
            v = op.value
            if k in expected:
                want = tuple(expected[k])
                if v != want:
                    out.append(_internal(t.id, pos, k, v, f"expected {list(want)}"))
            else:
                tail = tuple(suffix.get(k, ()))
                if tail and v[len(v) - len(tail):] != tail:
                    out.append(_internal(t.id, pos, k, v, f"expected a list ending in its own appends {list(tail)}"))
            expected[k] = list(v)
    return out


def _internal_registers(obs):
    out = []
    for t in obs.txns:
        if not t.committed:
            continue
        known: dict[Hashable, object] = {}
        for pos, op in enumerate(t.ops):
            if op.f != READ:
                known[op.key] = op.value
                continue
            prior = known.get(op.key, _UNKNOWN)
            if prior is not _UNKNOWN and prior != op.value:
                out.append(_internal(t.id, pos, op.key, op.value, f"expected {_fmt(prior)}"))
            known[op.key] = op.value
    return out


def _fmt(v):
    if v is None:
        return "nil"
    return str(list(v)) if isinstance(v, tuple) else str(v)


def _internal(txn, pos, key, got, why):
    return Anomaly(
        INTERNAL,
        [(txn, pos)],
        f"T{txn} read {_fmt(got)} from {key!r}, but {why} given its own prior reads and writes",
        key=key,
    )


def _trace(r: ReadRef) -> tuple:
    # Internally inconsistent reads keep their raw observation.
    return r.version if r.version is not None else r.observed


def find_aborted_reads(obs: Observation, idx: WriteIndex, reads=None) -> list[Anomaly]:
    """G1a: a committed read whose version was written by an aborted transaction."""
    if obs.model != LIST_APPEND:
        return []
    reads = committed_reads(obs) if reads is None else reads
    status = [t.status for t in obs.txns]
    by = idx.by_key_arg
    out = []
    for k, rs in reads.items():
        for r in rs:
            tr = _trace(r)
            if not tr:
                continue
            refs = by.get((k, tr[-1]))
            if not refs or len(refs) > 1 or status[refs[0].txn] != ABORTED:
                continue
            writers = []
            for e in reversed(tr):
                refs = by.get((k, e))
                if not refs or len(refs) > 1 or status[refs[0].txn] != ABORTED:
                    break
                writers.append(refs[0])
            writers.reverse()
            w = writers[-1]
            out.append(
                Anomaly(
                    G1A,
                    [(x.txn, x.pos) for x in writers] + [(r.txn, r.pos)],
                    f"T{r.txn} read {list(r.observed)} from {k!r}, but {tr[-1]} was appended by "
                    f"T{w.txn}, which aborted",
                    key=k,
                    data={"element": tr[-1]},
                )
            )
    return out


def find_intermediate_reads(obs: Observation, idx: WriteIndex, reads=None) -> list[Anomaly]:
    """G1b: a committed read ending in another transaction's non-final append."""
    if obs.model != LIST_APPEND:
        return []
    reads = committed_reads(obs) if reads is None else reads
    by = idx.by_key_arg
    out = []
    for k, rs in reads.items():
        for r in rs:
            tr = _trace(r)
            if not tr:
                continue
            refs = by.get((k, tr[-1]))
            if not refs or len(refs) > 1:
                continue
            w = refs[0]
            if w.final or w.txn == r.txn:
                continue
            out.append(
                Anomaly(
                    G1B,
                    [(w.txn, w.pos), (r.txn, r.pos)],
                    f"T{r.txn} read {list(r.observed)} from {k!r}, but T{w.txn} appended to {k!r} "
                    f"again after {tr[-1]}",
                    key=k,
                    data={"element": tr[-1]},
                )
            )
    return out


def find_dirty_updates(obs: Observation, idx: WriteIndex, reads=None) -> list[Anomaly]:
    """A non-aborted append stacked on top of an aborted one, as seen by a committed read."""
    if obs.model != LIST_APPEND:
        return []
    reads = committed_reads(obs) if reads is None else reads
    status = [t.status for t in obs.txns]
    by = idx.by_key_arg
    out = []
    for k, rs in reads.items():
        ref = max(rs, key=lambda r: len(r.observed))
        scan = [r for r in rs if r is ref or not is_prefix(r.observed, ref.observed)]
        reported = set()
        for r in scan:
            pending = []  # aborted refs awaiting a later non-aborted append
            for e in r.observed:
                refs = by.get((k, e))
                if not refs or len(refs) > 1:
                    continue
                w = refs[0]
                if status[w.txn] == ABORTED:
                    if e not in reported:
                        pending.append((e, w))
                    continue
                for ae, aw in pending:
                    reported.add(ae)
                    out.append(
                        Anomaly(
                            DIRTY_UPDATE,
                            [(aw.txn, aw.pos), (w.txn, w.pos), (r.txn, r.pos)],
                            f"T{r.txn} read {list(r.observed)} from {k!r}: T{w.txn}'s append of {e} "
                            f"follows {ae}, which was appended by T{aw.txn}, which aborted",
                            key=k,
                            data={"element": ae},
                        )
                    )
                pending = []
    return out
