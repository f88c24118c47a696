"""Version orders and transaction orders.

List-append keys get a total chain of installed versions recovered from the
longest committed read that happened before the reader wrote the key.
Register keys get a partial order assembled from independent rules.
Process and real-time orders relate whole transactions.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional

from .anomaly import CYCLIC_VERSION_ORDER, DUPLICATE_WRITE, Anomaly
from .histio import ABORTED, COMMITTED, READ, REGISTER, Observation
from .scc import cyclic_components
from .trace import ReadRef, WriteIndex, committed_reads

log = logging.getLogger(__name__)

INIT = "init"

# Register version-order rules, weakest first: cycles are broken by dropping
# edges justified only by the weakest rule present.
LINEARIZABLE = "per-key-linearizable"
WFR = "writes-follow-reads"
INIT_FIRST = "init-first"
_RULE_RANK = {LINEARIZABLE: 0, WFR: 1, INIT_FIRST: 2}

PROCESS = "process"
REALTIME = "realtime"


@dataclass
class VersionChain:
    key: Hashable
    versions: list
    writer_of: dict
    source: tuple = ()
    source_txn: Optional[int] = None

    def __post_init__(self):
        self.position = {v: i for i, v in enumerate(self.versions)}


@dataclass
class PartialVersionOrder:
    key: Hashable
    edges: dict = field(default_factory=dict)  # (a, b) -> set of rules
    evidence: dict = field(default_factory=dict)  # (a, b) -> txn ids
    writer_of: dict = field(default_factory=dict)

    def add(self, a, b, rule, txns=()):
        if a == b:
            return
        self.edges.setdefault((a, b), set()).add(rule)
        ev = self.evidence.setdefault((a, b), [])
        for t in txns:
            if t not in ev:
                ev.append(t)

    def successors(self) -> dict:
        out = defaultdict(list)
        for a, b in self.edges:
            out[a].append(b)
        return out


@dataclass
class TxnOrder:
    label: str
    edges: list


def _pure_reads(rs: list[ReadRef]) -> Iterable[ReadRef]:
    return (r for r in rs if not r.own)


def infer_list_append_chain(
    obs: Observation, idx: WriteIndex, key, reads=None, _status=None
) -> Optional[VersionChain]:
    """Chain of installed versions of ``key`` up to the longest pure committed read.

    Returns ``None`` when no committed transaction read the key before writing
    it, or when the chosen read cannot be traced back to unique writes.
    """
    reads = committed_reads(obs) if reads is None else reads
    best = None
    for r in _pure_reads(reads.get(key, [])):
        if best is None or len(r.observed) > len(best.observed):
            best = r
    if best is None:
        return None
    status = [t.status for t in obs.txns] if _status is None else _status
    versions = [INIT]
    writer_of = {}
    by = idx.by_key_arg
    for e in best.observed:
        refs = by.get((key, e))
        if not refs or len(refs) > 1:
            log.debug("key %r excluded from version inference: %r is not recoverable", key, e)
            return None
        w = refs[0]
        if not w.final or status[w.txn] == ABORTED:
            continue
        versions.append(e)
        writer_of[e] = w.txn
    return VersionChain(key, versions, writer_of, best.observed, best.txn)


def infer_list_append_chains(obs, idx, reads=None, exclude=()) -> dict:
    reads = committed_reads(obs) if reads is None else reads
    chains = {}
    status = [t.status for t in obs.txns]
    for k in reads:
        if k in exclude:
            continue
        c = infer_list_append_chain(obs, idx, k, reads, status)
        if c is not None:
            chains[k] = c
    return chains


def _version(v):
    return INIT if v is None else v


def infer_register_order(obs: Observation, linearizable: bool = False):
    """Per-key partial version orders for registers, plus cyclic-order anomalies.

    Cycles are reported and broken by discarding edges from the weakest rule
    involved until each key's order is acyclic.
    """
    assert obs.model == REGISTER
    anomalies: list[Anomaly] = []
    counts: dict = defaultdict(Counter)
    writers: dict = defaultdict(dict)  # key -> installed value -> txn
    first_writer: dict = {}
    for t in obs.txns:
        last = {}
        for op in t.ops:
            if op.f != READ:
                counts[op.key][op.value] += 1
                first_writer.setdefault((op.key, op.value), t.id)
                last[op.key] = op.value
        if t.status != ABORTED:
            for k, v in last.items():
                writers[k][v] = t.id
    dups = {k: {v for v, n in c.items() if n > 1} for k, c in counts.items()}
    dups = {k: vs for k, vs in dups.items() if vs}
    for k in sorted(dups, key=repr):
        for v in sorted(dups[k]):
            anomalies.append(
                Anomaly(
                    DUPLICATE_WRITE,
                    [(first_writer[(k, v)], None)],
                    f"{v} was written to {k!r} more than once; its versions cannot be told apart",
                    key=k,
                    data={"element": v},
                )
            )

    orders: dict = {}

    def order(k) -> PartialVersionOrder:
        o = orders.get(k)
        if o is None:
            o = orders[k] = PartialVersionOrder(k, writer_of=writers[k])
        return o

    for k, ws in writers.items():
        if k in dups:
            continue
        for v, t in ws.items():
            order(k).add(INIT, v, INIT_FIRST, (t,))

    accesses: dict = defaultdict(list)  # key -> [(txn, first value, last value)]
    for t in obs.txns:
        if t.status != COMMITTED:
            continue
        first: dict = {}
        last: dict = {}
        read_before_write: dict = {}
        wrote: set = set()
        final: dict = {}
        for op in t.ops:
            k = op.key
            v = _version(op.value)
            first.setdefault(k, v)
            last[k] = v
            if op.f == READ:
                if k not in wrote:
                    read_before_write[k] = v
            else:
                wrote.add(k)
                final[k] = v
        for k, rv in read_before_write.items():
            if k in final and k not in dups:
                order(k).add(rv, final[k], WFR, (t.id,))
        if linearizable:
            for k in first:
                if k not in dups:
                    accesses[k].append((t, first[k], last[k]))

    if linearizable:
        for k, acc in accesses.items():
            by_id = {t.id: (f, l) for t, f, l in acc}
            intervals = [(t.id, t.invoke_index, t.complete_index) for t, _, _ in acc]
            for a, b in reduced_precedence(intervals):
                order(k).add(by_id[a][1], by_id[b][0], LINEARIZABLE, (a, b))

    for k in sorted(orders, key=repr):
        anomalies.extend(_break_cycles(orders[k]))
    return orders, anomalies


def _break_cycles(o: PartialVersionOrder) -> list[Anomaly]:
    out = []
    reported = False
    while True:
        succ = o.successors()
        nodes = sorted({v for e in o.edges for v in e}, key=repr)
        comps = cyclic_components(nodes, lambda v: succ.get(v, ()))
        if not comps:
            return out
        inside = []
        for comp in comps:
            members = set(comp)
            edges = [e for e in o.edges if e[0] in members and e[1] in members]
            inside.extend(edges)
            if not reported:
                txns = sorted({t for e in edges for t in o.evidence.get(e, ())})
                desc = ", ".join(
                    f"{_show(a)} < {_show(b)} ({', '.join(sorted(o.edges[(a, b)]))})" for a, b in sorted(edges, key=repr)
                )
                out.append(
                    Anomaly(
                        CYCLIC_VERSION_ORDER,
                        [(t, None) for t in txns],
                        f"inferred version order for {o.key!r} is cyclic: {desc}",
                        key=o.key,
                        data={"versions": sorted((_show(v) for v in comp), key=str)},
                    )
                )
        reported = True
        weakest = min(max(_RULE_RANK[r] for r in o.edges[e]) for e in inside)
        for e in inside:
            if max(_RULE_RANK[r] for r in o.edges[e]) == weakest:
                del o.edges[e]


def _show(v):
    return "nil" if v == INIT else v


def process_order(obs: Observation) -> TxnOrder:
    last: dict = {}
    edges = []
    for t in obs.txns:
        if t.status == ABORTED:
            continue
        prev = last.get(t.process)
        if prev is not None:
            edges.append((prev, t.id))
        last[t.process] = t.id
    return TxnOrder(PROCESS, edges)


def reduced_precedence(intervals: Iterable[tuple]) -> list[tuple]:
    """Transitive reduction of interval precedence.

    ``intervals`` are ``(id, start, end)`` with ``end`` possibly ``None`` (never
    completes).  ``a`` precedes ``b`` when ``end(a) < start(b)``.  A sweep keeps
    the frontier of completed intervals that no other completed interval
    follows; the frontier never outgrows the number of concurrently open
    intervals.
    """
    events = []
    for i, s, e in intervals:
        events.append((s, 1, i))
        if e is not None:
            events.append((e, 0, i))
    events.sort(key=lambda ev: (ev[0], ev[1]))
    frontier: dict = {}
    preds: dict = {}
    edges = []
    for _, kind, i in events:
        if kind == 1:
            p = list(frontier)
            preds[i] = p
            edges.extend((a, i) for a in p)
        else:
            for a in preds.pop(i, ()):
                frontier.pop(a, None)
            frontier[i] = None
    return edges


def realtime_order(obs: Observation) -> TxnOrder:
    """Reduced real-time precedence over non-aborted transactions.

    Only committed transactions can precede: an indeterminate one may take
    effect at any point after its invocation.
    """
    intervals = []
    for t in obs.txns:
        if t.status == ABORTED:
            continue
        end = t.complete_index if t.status == COMMITTED else None
        intervals.append((t.id, t.invoke_index, end))
    return TxnOrder(REALTIME, reduced_precedence(intervals))
